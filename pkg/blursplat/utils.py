import os
import re


regex_frame_number = re.compile(r'(\d+)')


def parse_list(value, item_type):
    """Parse a comma or whitespace separated list, e.g. '4, 2, 1'."""
    if isinstance(value, (list, tuple)):
        return [item_type(item) for item in value]
    items = [item for item in re.split(r'[,\s]+', value.strip()) if item]
    return [item_type(item) for item in items]


def parse_bool(value):
    if isinstance(value, bool):
        return value
    value = str(value).strip().lower()
    if value in ('1', 'true', 'yes', 'on'):
        return True
    if value in ('0', 'false', 'no', 'off'):
        return False
    raise ValueError('invalid boolean value: ' + value)


def frame_sort_key(filename):
    # sort frame files by the number in their name so 'f10' follows 'f9'
    match = regex_frame_number.search(os.path.basename(filename))
    return (int(match.group(1)) if match else -1, filename)


def list_files(directory, extension):
    """Return paths of all files with given extension in directory, in frame order."""
    if not os.path.isdir(directory):
        return []
    files = [os.path.join(directory, name) for name in os.listdir(directory)
             if name.lower().endswith(extension)]
    return sorted(files, key=frame_sort_key)


def frame_filename(index, extension):
    return '{index:06d}{extension}'.format(index=index, extension=extension)


def ensure_dir(path):
    if not os.path.isdir(path):
        os.makedirs(path)
    return path


def read_table_lines(filename):
    """Yield whitespace split rows of a text table, skipping '#' comments and blank lines."""
    with open(filename, 'r') as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith('#'):
                continue
            yield line.split()

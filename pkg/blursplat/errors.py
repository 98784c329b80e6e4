class BlurSplatError(Exception):
    def __init__(self, error):
        self.error = error

    def __str__(self):
        return 'BlurSplatError: ' + ', '.join(
            ['{key}={value}'.format(key=key, value=self.error.get(key)) for key in self.error])


class Error(dict):
    def __init__(self, msg_key, object_id=None, field=None, info=None, context=None):
        dict.__init__(self, msg_key=msg_key, object_id=object_id, field=field, info=info, context=context)


class BlurSplatErrors(BlurSplatError):
    """Raised once after a validation pass collected several errors.

    The first error is exposed as ``error`` so callers handling a single
    BlurSplatError keep working, all collected errors are in ``errors``.
    """

    def __init__(self, errors):
        BlurSplatError.__init__(self, errors[0])
        self.errors = list(errors)

    def __str__(self):
        return '\n'.join(str(BlurSplatError(error)) for error in self.errors)


class BlurSplatStageError(BlurSplatError):
    """A pipeline stage aborted; artifacts written before the failure are kept."""

    def __init__(self, stage, error):
        BlurSplatError.__init__(self, error)
        self.stage = stage

"""Raster file I/O: 8-bit PNG for sRGB-encoded images, little-endian PFM for linear images and depth."""
import re

import numpy as np
from PIL import Image as PILImage

from .enums import *
from .errors import Error, BlurSplatError
from .structs import Image

regex_pfm_size = re.compile(r'^(\d+)\s+(\d+)\s*$')


def read_png(filename):
    try:
        pil_image = PILImage.open(filename)
        pil_image.load()
    except Exception as ex:
        raise BlurSplatError(Error('errorMsgLoadingImageFailed', object_id=filename, field='png', info=str(ex)))
    if pil_image.mode in ('L', 'I;16', 'I', 'F'):
        data = np.asarray(pil_image.convert('L'), dtype=np.float64)[:, :, np.newaxis]
    else:
        data = np.asarray(pil_image.convert('RGB'), dtype=np.float64)
    return Image(data / 255.0, ColorSpace.srgb_encoded, source=filename)


def write_png(img, filename):
    if img.space != ColorSpace.srgb_encoded:
        raise BlurSplatError(Error('errorMsgWrongColorSpace', object_id=filename, field='space',
                                   info=img.space.name, context='write_png'))
    data = np.round(np.clip(img.data, 0.0, 1.0) * 255.0).astype(np.uint8)
    if img.channels == 1:
        pil_image = PILImage.fromarray(data[:, :, 0], mode='L')
    else:
        pil_image = PILImage.fromarray(data, mode='RGB')
    pil_image.save(filename, format='PNG')


def read_pfm(filename):
    try:
        with open(filename, 'rb') as f:
            header = f.readline().decode('ascii').strip()
            if header == 'PF':
                channels = 3
            elif header == 'Pf':
                channels = 1
            else:
                raise ValueError('not a pfm file')
            m = regex_pfm_size.match(f.readline().decode('ascii'))
            if not m:
                raise ValueError('invalid pfm size line')
            width, height = int(m.group(1)), int(m.group(2))
            scale = float(f.readline().decode('ascii').strip())
            dtype = '<f4' if scale < 0 else '>f4'
            data = np.frombuffer(f.read(), dtype=dtype, count=width * height * channels)
    except BlurSplatError:
        raise
    except Exception as ex:
        raise BlurSplatError(Error('errorMsgLoadingImageFailed', object_id=filename, field='pfm', info=str(ex)))
    # pfm rows are stored bottom to top
    data = data.reshape(height, width, channels)[::-1].astype(np.float64)
    return Image(data, ColorSpace.linear)


def write_pfm(img, filename):
    header = 'PF' if img.channels == 3 else 'Pf'
    data = np.ascontiguousarray(img.data[::-1].astype('<f4'))
    with open(filename, 'wb') as f:
        f.write('{0}\n{1} {2}\n-1.0\n'.format(header, img.width, img.height).encode('ascii'))
        f.write(data.tobytes())

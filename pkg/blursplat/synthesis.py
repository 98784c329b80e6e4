"""Physically based blur synthesis.

Motion blur is the average of sharp sub-frames in linear light, defocus blur a
disk point spread function whose radius follows a thin-lens circle of confusion.
"""
import logging
import math

import numpy as np
from scipy import ndimage

from .enums import *
from .errors import Error, BlurSplatError
from .imaging import srgb_to_linear, linear_to_srgb
from .structs import Image, Kernel2D

logger = logging.getLogger(__name__)

# subsamples per pixel axis used for disk area coverage
DISK_SUPERSAMPLING = 4
# above this many distinct radii, radii are rounded to RADIUS_QUANTUM pixels
MAX_DISTINCT_RADII = 256
RADIUS_QUANTUM = 1.0 / 16.0


class FrameSequence(object):
    def __init__(self, frames, timestamps=None):
        self.frames = list(frames)
        if timestamps is None:
            timestamps = [float(i) for i in range(len(self.frames))]
        self.timestamps = [float(t) for t in timestamps]
        self.verify()

    def verify(self):
        if not self.frames:
            raise BlurSplatError(Error('errorMsgEmptySequence', field='frames'))
        if len(self.timestamps) != len(self.frames):
            raise BlurSplatError(Error('errorMsgTimestampCount', field='timestamps'))
        first = self.frames[0]
        for i, frame in enumerate(self.frames):
            if frame.shape != first.shape:
                raise BlurSplatError(Error('errorMsgDimensionMismatch', object_id=i, field='frames',
                                           info='{0} != {1}'.format(frame.shape, first.shape)))
            if frame.space != first.space:
                raise BlurSplatError(Error('errorMsgWrongColorSpace', object_id=i, field='frames'))
        for i in range(1, len(self.timestamps)):
            if self.timestamps[i] <= self.timestamps[i - 1]:
                raise BlurSplatError(Error('errorMsgTimestampsNotIncreasing', object_id=i, field='timestamps'))

    def __len__(self):
        return len(self.frames)

    def window(self, start, n):
        return FrameSequence(self.frames[start:start + n], self.timestamps[start:start + n])


class BenchmarkPair(object):
    def __init__(self, blurred, sharp, n_averaged, mid_index):
        self.blurred = blurred
        self.sharp = sharp
        self.n_averaged = n_averaged
        self.mid_index = mid_index


def synthesize_motion_blur(seq):
    """Average the frames in linear light and encode the mean back to sRGB."""
    if not isinstance(seq, FrameSequence):
        seq = FrameSequence(seq)
    total = None
    for i, frame in enumerate(seq.frames):
        if frame.space != ColorSpace.srgb_encoded:
            raise BlurSplatError(Error('errorMsgWrongColorSpace', object_id=i, field='frames',
                                       context='synthesize_motion_blur'))
        linear = srgb_to_linear(frame).data
        if total is None:
            total = linear.copy()
        else:
            total += linear
    return linear_to_srgb(Image(total / len(seq.frames), ColorSpace.linear))


def defocus_kernel(radius_px):
    """Normalized disk PSF; each weight is the supersampled fraction of the pixel inside the disk."""
    if radius_px < 0:
        raise BlurSplatError(Error('errorMsgNegativeRadius', field='radius_px', info=radius_px))
    if radius_px == 0:
        return Kernel2D.identity()
    half = int(math.ceil(radius_px))
    size = 2 * half + 1
    offsets = (np.arange(DISK_SUPERSAMPLING) + 0.5) / DISK_SUPERSAMPLING - 0.5
    sub_y, sub_x = np.meshgrid(offsets, offsets, indexing='ij')
    weights = np.zeros((size, size))
    r2 = radius_px * radius_px
    for i in range(size):
        for j in range(size):
            y = sub_y + (i - half)
            x = sub_x + (j - half)
            weights[i, j] = np.count_nonzero(x * x + y * y <= r2)
    if weights.sum() == 0:
        # disk smaller than the sample spacing
        return Kernel2D.identity()
    return Kernel2D(weights / weights.sum(), normalized=True)


def circle_of_confusion(depth, focus_depth, coc_gain):
    return coc_gain * np.abs(depth - focus_depth) / depth


def synthesize_defocus_blur(img, depth, focus_depth, coc_gain):
    """Gather-style depth dependent disk blur in the image's own space.

    Occlusion between depth layers is not modeled; every output pixel gathers
    with the kernel of its own radius.
    """
    if depth.width != img.width or depth.height != img.height:
        raise BlurSplatError(Error('errorMsgDimensionMismatch', field='depth', context='synthesize_defocus_blur'))
    d = depth.data[:, :, 0]
    if np.any(d <= 0):
        raise BlurSplatError(Error('errorMsgNonPositiveDepth', field='depth', context='synthesize_defocus_blur'))
    radii = circle_of_confusion(d, focus_depth, coc_gain)
    unique_radii = np.unique(radii)
    if len(unique_radii) > MAX_DISTINCT_RADII:
        radii = np.round(radii / RADIUS_QUANTUM) * RADIUS_QUANTUM
        unique_radii = np.unique(radii)
        logger.debug('defocus radii quantized to %d levels', len(unique_radii))
    out = img.data.copy()
    for radius in unique_radii:
        if radius == 0:
            continue
        kernel = defocus_kernel(float(radius))
        selected = radii == radius
        for c in range(img.channels):
            blurred = ndimage.correlate(img.data[:, :, c], kernel.weights, mode='nearest')
            out[:, :, c][selected] = blurred[selected]
    return Image(out, img.space)


def make_benchmark_pair(seq, n):
    if n < 1 or n > len(seq):
        raise BlurSplatError(Error('errorMsgWindowTooLarge', field='n', info=n,
                                   context='{0} frames'.format(len(seq))))
    window = seq.window(0, n)
    mid_index = n // 2
    return BenchmarkPair(blurred=synthesize_motion_blur(window), sharp=seq.frames[mid_index],
                         n_averaged=n, mid_index=mid_index)

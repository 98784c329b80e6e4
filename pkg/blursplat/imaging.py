"""Color transfer, filtering, rescaling and image quality metrics.

All functions are pure and return new Image instances.
"""
import math

import numpy as np
from scipy import ndimage
from skimage.metrics import structural_similarity

from .enums import *
from .errors import Error, BlurSplatError
from .structs import Image, Kernel2D

# documented sentinel returned by psnr for identical images
PSNR_INFINITY = float('inf')

SSIM_WINDOW_SIZE = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03

LAPLACIAN_KERNEL = np.array([[0.0, 1.0, 0.0],
                             [1.0, -4.0, 1.0],
                             [0.0, 1.0, 0.0]])


def srgb_to_linear(img):
    if img.space != ColorSpace.srgb_encoded:
        raise BlurSplatError(Error('errorMsgWrongColorSpace', field='space',
                                   info=img.space.name, context='srgb_to_linear'))
    x = img.data
    data = np.where(x <= 0.04045, x / 12.92, ((x + 0.055) / 1.055) ** 2.4)
    return Image(data, ColorSpace.linear)


def linear_to_srgb(img):
    if img.space != ColorSpace.linear:
        raise BlurSplatError(Error('errorMsgWrongColorSpace', field='space',
                                   info=img.space.name, context='linear_to_srgb'))
    x = np.clip(img.data, 0.0, 1.0)
    data = np.where(x <= 0.0031308, x * 12.92, 1.055 * np.power(x, 1.0 / 2.4) - 0.055)
    return Image(np.clip(data, 0.0, 1.0), ColorSpace.srgb_encoded)


def _as_kernel(k):
    if isinstance(k, Kernel2D):
        return k
    return Kernel2D(k)


def convolve2d(img, k, border=BorderMode.replicate):
    """Correlate every channel with kernel k, borders replicated."""
    k = _as_kernel(k)
    if k.size % 2 == 0:
        raise BlurSplatError(Error('errorMsgEvenKernelSize', field='size', info=k.size))
    if border != BorderMode.replicate:
        raise BlurSplatError(Error('errorMsgUnsupportedBorder', field='border', info=str(border)))
    if k.size == 1:
        return Image(img.data * k.weights[0, 0], img.space)
    out = np.empty_like(img.data)
    for c in range(img.channels):
        out[:, :, c] = ndimage.correlate(img.data[:, :, c], k.weights, mode='nearest')
    return Image(out, img.space)


def box_blur(img, size):
    return convolve2d(img, Kernel2D.box(size))


def downscale(img, factor):
    """Block mean over factor x factor blocks; sizes not divisible by factor are padded by replication."""
    if factor <= 0 or int(factor) != factor:
        raise BlurSplatError(Error('errorMsgInvalidFactor', field='factor', info=factor))
    factor = int(factor)
    if factor == 1:
        return img.copy()
    data = img.data
    pad_h = -data.shape[0] % factor
    pad_w = -data.shape[1] % factor
    if pad_h or pad_w:
        data = np.pad(data, ((0, pad_h), (0, pad_w), (0, 0)), mode='edge')
    h = data.shape[0] // factor
    w = data.shape[1] // factor
    blocks = data.reshape(h, factor, w, factor, data.shape[2])
    return Image(blocks.mean(axis=(1, 3)), img.space)


def _check_same_size(a, b, name):
    if a.shape != b.shape:
        raise BlurSplatError(Error('errorMsgDimensionMismatch', field='b', context=name,
                                   info='{0} != {1}'.format(a.shape, b.shape)))


def mse(a, b):
    _check_same_size(a, b, 'mse')
    return float(np.mean((a.data - b.data) ** 2))


def psnr(a, b):
    """Peak signal to noise ratio in dB with peak 1.0; PSNR_INFINITY when a equals b."""
    _check_same_size(a, b, 'psnr')
    if a.space != b.space:
        raise BlurSplatError(Error('errorMsgWrongColorSpace', field='b', context='psnr'))
    error = mse(a, b)
    if error == 0.0:
        return PSNR_INFINITY
    return 10.0 * math.log10(1.0 / error)


def ssim(a, b):
    """Mean single-scale SSIM over the valid region of an 11x11 gaussian window."""
    _check_same_size(a, b, 'ssim')
    x = a.gray()
    y = b.gray()
    if x.shape[0] < SSIM_WINDOW_SIZE or x.shape[1] < SSIM_WINDOW_SIZE:
        raise BlurSplatError(Error('errorMsgImageSmallerThanWindow', field='a', info=str(x.shape)))
    # the gaussian filter truncated at 3.5 sigma spans SSIM_WINDOW_SIZE samples, cropping its border leaves
    # the valid region
    return float(structural_similarity(x, y, gaussian_weights=True, sigma=SSIM_SIGMA, use_sample_covariance=False,
                                       data_range=1.0, K1=SSIM_K1, K2=SSIM_K2))


def laplacian_response(img):
    return ndimage.correlate(img.gray(), LAPLACIAN_KERNEL, mode='nearest')


def laplacian_variance(img):
    return float(np.var(laplacian_response(img)))

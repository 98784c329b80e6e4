import numpy as np
import torch

from .enums import *
from .errors import Error, BlurSplatError

# luminance weights for grayscale conversion of linear or encoded rgb
LUMINANCE_WEIGHTS = np.array([0.2126, 0.7152, 0.0722])


class Image(object):
    """Raster of float samples with shape (height, width, channels) tagged with a color space."""

    def __init__(self, data, space=ColorSpace.linear, source=None):
        data = np.asarray(data, dtype=np.float64)
        if data.ndim == 2:
            data = data[:, :, np.newaxis]
        if data.ndim != 3 or data.shape[2] not in (1, 3):
            raise BlurSplatError(Error('errorMsgInvalidImageShape', field='data', info=str(data.shape)))
        self.data = data
        self.space = space
        # file the image was read from, used to look up externally computed scores
        self.source = source

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def channels(self):
        return self.data.shape[2]

    @property
    def shape(self):
        return self.data.shape

    def with_data(self, data):
        return Image(data, self.space)

    def copy(self):
        return Image(self.data.copy(), self.space)

    def gray(self):
        """Return 2d array of luminance values (the single channel for 1-channel images)."""
        if self.channels == 1:
            return self.data[:, :, 0]
        return self.data @ LUMINANCE_WEIGHTS

    def tensor(self):
        return torch.from_numpy(self.data.copy())

    @staticmethod
    def from_tensor(tensor, space=ColorSpace.linear):
        return Image(tensor.detach().cpu().numpy().astype(np.float64), space)

    def same_size(self, other):
        return self.width == other.width and self.height == other.height

    def validate(self):
        if self.space == ColorSpace.srgb_encoded:
            if np.any(self.data < 0.0) or np.any(self.data > 1.0):
                raise BlurSplatError(Error('errorMsgSampleOutOfRange', field='data', context='srgb_encoded'))
        elif np.any(self.data < 0.0):
            raise BlurSplatError(Error('errorMsgSampleOutOfRange', field='data', context='linear'))

    def __repr__(self):
        return 'Image({w}x{h}x{c}, {space})'.format(
            w=self.width, h=self.height, c=self.channels, space=self.space.name)


class Kernel2D(object):
    def __init__(self, weights, normalized=False):
        weights = np.asarray(weights, dtype=np.float64)
        if weights.ndim == 0:
            weights = weights.reshape(1, 1)
        if weights.ndim != 2 or weights.shape[0] != weights.shape[1]:
            raise BlurSplatError(Error('errorMsgInvalidKernelShape', field='weights', info=str(weights.shape)))
        if weights.shape[0] % 2 == 0:
            raise BlurSplatError(Error('errorMsgEvenKernelSize', field='size', info=weights.shape[0]))
        self.weights = weights
        self.normalized = normalized
        if normalized and abs(weights.sum() - 1.0) > 1e-9:
            raise BlurSplatError(Error('errorMsgKernelNotNormalized', field='weights', info=float(weights.sum())))

    @property
    def size(self):
        return self.weights.shape[0]

    @staticmethod
    def identity():
        return Kernel2D(np.ones((1, 1)), normalized=True)

    @staticmethod
    def box(size):
        return Kernel2D(np.full((size, size), 1.0 / (size * size)), normalized=True)


class Camera(object):
    """Pinhole intrinsics in pixels; pixel centers are at integer coordinates."""

    def __init__(self, fx, fy, cx, cy, width, height):
        self.fx = float(fx)
        self.fy = float(fy)
        self.cx = float(cx)
        self.cy = float(cy)
        self.width = int(width)
        self.height = int(height)
        if self.fx <= 0 or self.fy <= 0:
            raise BlurSplatError(Error('errorMsgInvalidFocalLength', field='fx'))
        if not (-0.5 <= self.cx <= self.width - 0.5) or not (-0.5 <= self.cy <= self.height - 0.5):
            raise BlurSplatError(Error('errorMsgInvalidPrincipalPoint', field='cx'))

    def scaled(self, factor):
        """Camera for images downscaled by block mean with given factor."""
        if factor == 1:
            return self
        width = -(-self.width // factor)
        height = -(-self.height // factor)
        # block of pixels [k*f, (k+1)*f) maps to pixel k, centers shift by (f - 1) / 2
        return Camera(self.fx / factor, self.fy / factor,
                      (self.cx - (factor - 1) / 2.0) / factor, (self.cy - (factor - 1) / 2.0) / factor,
                      width, height)

    def __eq__(self, other):
        return isinstance(other, Camera) and (self.fx, self.fy, self.cx, self.cy, self.width, self.height) ==\
            (other.fx, other.fy, other.cx, other.cy, other.width, other.height)

    def __repr__(self):
        return 'Camera(fx={0}, fy={1}, cx={2}, cy={3}, {4}x{5})'.format(
            self.fx, self.fy, self.cx, self.cy, self.width, self.height)


class ExposureParams(object):
    def __init__(self, a_exposure=0.0, b_exposure=0.0):
        self.a_exposure = float(a_exposure)
        self.b_exposure = float(b_exposure)

    def copy(self):
        return ExposureParams(self.a_exposure, self.b_exposure)


class ClassifierThresholds(object):
    def __init__(self, tau_sharp, tau_success=1.2, weight_laplacian=0.5, lapvar_eps=1e-12):
        self.tau_sharp = float(tau_sharp)
        self.tau_success = float(tau_success)
        self.weight_laplacian = float(weight_laplacian)
        self.lapvar_eps = float(lapvar_eps)
        if not 0.0 <= self.weight_laplacian <= 1.0:
            raise BlurSplatError(Error('errorMsgInvalidWeight', field='weight_laplacian'))


class LossWeights(object):
    def __init__(self, lambda_rgb=0.9, lambda_depth=0.1, lambda_sparse=0.01, lambda_reg=0.001,
                 w_sharp=1.0, w_deblur=0.5, w_fail=0.5):
        self.lambda_rgb = float(lambda_rgb)
        self.lambda_depth = float(lambda_depth)
        self.lambda_sparse = float(lambda_sparse)
        self.lambda_reg = float(lambda_reg)
        self.w_sharp = float(w_sharp)
        self.w_deblur = float(w_deblur)
        self.w_fail = float(w_fail)

    def frame_weight(self, frame_class):
        if frame_class == FrameClass.sharp:
            return self.w_sharp
        if frame_class == FrameClass.deblurred:
            return self.w_deblur
        if frame_class == FrameClass.fail:
            return self.w_fail
        raise BlurSplatError(Error('errorMsgInvalidFrameClass', field='class', info=frame_class))

    def verify(self):
        """Return list of errors for weights breaking the sharp-first ordering."""
        errors = []
        for key in ('lambda_rgb', 'lambda_depth', 'lambda_sparse', 'lambda_reg', 'w_sharp', 'w_deblur', 'w_fail'):
            if getattr(self, key) < 0:
                errors.append(Error('errorMsgNegativeWeight', field=key))
        if self.w_sharp <= self.w_deblur:
            errors.append(Error('errorMsgSharpWeightNotDominant', field='w_sharp'))
        if self.w_deblur != self.w_fail:
            errors.append(Error('errorMsgBlurWeightsDiffer', field='w_fail'))
        return errors

    def copy(self, **kwargs):
        values = dict(vars(self))
        values.update(kwargs)
        return LossWeights(**values)

"""Blur formation on top of renders: exposure affine, per-pixel kernel and mask fields,
depth-aware kernels and averaging of virtual sub-frames along the exposure trajectory.

All functions accept torch tensors (and then stay differentiable) or Image objects,
in which case an Image is returned.
"""
import math

import numpy as np
import torch
import torch.nn.functional as F

from .enums import *
from .errors import Error, BlurSplatError
from .lie import DTYPE, SE3Pose, se3_compose, se3_exp, se3_inverse, se3_log
from .scene import render
from .structs import ExposureParams, Image, Kernel2D

DEFAULT_GRID_FACTOR = 4
DEFAULT_N_SUB = 3
COVERAGE_MIN = 0.5


def _unwrap(img):
    if isinstance(img, Image):
        return img.tensor(), img.space
    return img, None


def _wrap(tensor, space):
    return tensor if space is None else Image.from_tensor(tensor, space)


def _exposure_tensors(e):
    if isinstance(e, ExposureParams):
        return torch.as_tensor(e.a_exposure, dtype=DTYPE), torch.as_tensor(e.b_exposure, dtype=DTYPE)
    return e[0], e[1]


def apply_exposure(img, e):
    """exp(a) * img + b, unclamped.

    :param e: ExposureParams or a pair of scalar tensors (a, b)
    """
    data, space = _unwrap(img)
    a, b = _exposure_tensors(e)
    return _wrap(torch.exp(a) * data + b, space)


def sharpen_stencil(kernel_size):
    """Unsharp stencil, identity minus the 4-neighbor average, embedded in a kernel_size^2 support."""
    stencil = torch.zeros((kernel_size, kernel_size), dtype=DTYPE)
    if kernel_size < 3:
        return stencil
    r = kernel_size // 2
    stencil[r, r] = 1.0
    for dv, du in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        stencil[r + dv, r + du] = -0.25
    return stencil


class BlurProposal(object):
    """Per-pixel kernel, mask and depth-gain logits on a coarse grid, upsampled bilinearly.

    kernel_logits has shape (grid_height, grid_width, K*K), mask_logits and alpha_logits
    (grid_height, grid_width). width/height give the full image resolution.
    """

    def __init__(self, kernel_size, width, height, kernel_logits, mask_logits, alpha_logits):
        if kernel_size % 2 == 0 or kernel_size < 1:
            raise BlurSplatError(Error('errorMsgEvenKernelSize', field='kernel_size', info=kernel_size))
        self.kernel_size = kernel_size
        self.width = width
        self.height = height
        self.kernel_logits = kernel_logits
        self.mask_logits = mask_logits
        self.alpha_logits = alpha_logits

    @staticmethod
    def zeros(kernel_size, width, height, grid_factor=DEFAULT_GRID_FACTOR):
        gw = int(math.ceil(width / float(grid_factor)))
        gh = int(math.ceil(height / float(grid_factor)))
        return BlurProposal(kernel_size, width, height,
                            torch.zeros((gh, gw, kernel_size * kernel_size), dtype=DTYPE),
                            torch.zeros((gh, gw), dtype=DTYPE), torch.zeros((gh, gw), dtype=DTYPE))

    @property
    def grid_width(self):
        return self.mask_logits.shape[1]

    @property
    def grid_height(self):
        return self.mask_logits.shape[0]

    def parameters(self):
        return [self.kernel_logits, self.mask_logits, self.alpha_logits]

    def detach(self):
        return BlurProposal(self.kernel_size, self.width, self.height, self.kernel_logits.detach().clone(),
                            self.mask_logits.detach().clone(), self.alpha_logits.detach().clone())

    def _upsample(self, grid):
        # (gh, gw, C) -> (H, W, C)
        grid = grid.permute(2, 0, 1).unsqueeze(0)
        full = F.interpolate(grid, size=(self.height, self.width), mode='bilinear', align_corners=False)
        return full[0].permute(1, 2, 0)

    def decode(self):
        """Return (deblur kernels (H, W, K*K), masks (H, W), depth gains (H, W)) at full resolution."""
        kernels = torch.softmax(self._upsample(self.kernel_logits), dim=-1)
        masks = torch.sigmoid(self._upsample(self.mask_logits.unsqueeze(-1))[..., 0])
        gains = F.softplus(self._upsample(self.alpha_logits.unsqueeze(-1))[..., 0])
        return kernels, masks, gains

    def depth_kernels(self, depth):
        """Depth-aware kernels (H, W, K*K): h_deblur plus depth-scaled sharpening, clamped and renormalized."""
        kernels, _, gains = self.decode()
        depth = depth.reshape(self.height, self.width)
        alpha = gains * depth / (1.0 + depth)
        h = kernels + alpha[..., None] * sharpen_stencil(self.kernel_size).reshape(-1)
        h = torch.clamp(h, min=0.0)
        return h / h.sum(-1, keepdim=True)

    def to_text(self):
        lines = ['blur_proposal {0} {1} {2} {3} {4}'.format(
            self.kernel_size, self.width, self.height, self.grid_width, self.grid_height)]
        for tensor in (self.kernel_logits, self.mask_logits, self.alpha_logits):
            lines.append(' '.join('{0:.17g}'.format(value) for value in tensor.detach().reshape(-1).tolist()))
        return '\n'.join(lines) + '\n'

    @staticmethod
    def from_text(text):
        lines = [line for line in text.splitlines() if line.strip() and not line.startswith('#')]
        header = lines[0].split()
        if len(header) != 6 or header[0] != 'blur_proposal' or len(lines) != 4:
            raise BlurSplatError(Error('errorMsgInvalidProposalFile', info=lines[0] if lines else ''))
        kernel_size, width, height, gw, gh = [int(value) for value in header[1:]]

        def parse(line, shape):
            return torch.tensor([float(value) for value in line.split()], dtype=DTYPE).reshape(shape)
        return BlurProposal(kernel_size, width, height, parse(lines[1], (gh, gw, kernel_size * kernel_size)),
                            parse(lines[2], (gh, gw)), parse(lines[3], (gh, gw)))


def decode_depth_kernel(bp, x, depth):
    """Kernel2D at full-resolution pixel x = (u, v) for the given depth."""
    if depth < 0:
        raise BlurSplatError(Error('errorMsgNegativeDepth', field='depth', info=depth))
    u, v = x
    depth_map = torch.full((bp.height, bp.width), float(depth), dtype=DTYPE)
    with torch.no_grad():
        h = bp.depth_kernels(depth_map)[v, u]
    weights = h.reshape(bp.kernel_size, bp.kernel_size).numpy()
    return Kernel2D(weights / weights.sum(), normalized=True)


def gather_convolve(data, kernels):
    """Per-pixel correlation with replicated borders; data (H, W, C), kernels (H, W, K*K)."""
    h, w, channels = data.shape
    k = int(round(math.sqrt(kernels.shape[-1])))
    r = k // 2
    padded = F.pad(data.permute(2, 0, 1).unsqueeze(0), (r, r, r, r), mode='replicate')
    patches = F.unfold(padded, kernel_size=k).reshape(channels, k * k, h, w)
    return torch.einsum('ckhw,hwk->hwc', patches, kernels)


def apply_blur_proposal(img, depth, bp, coverage=None):
    """(1 - m) * img + m * (img gathered with depth-aware kernels).

    :param coverage: optional rendered alpha (H, W); the mask is forced to 0 where it is below 0.5
    """
    data, space = _unwrap(img)
    depth, _ = _unwrap(depth)
    squeeze = data.dim() == 2
    if squeeze:
        data = data.unsqueeze(-1)
    _, masks, _ = bp.decode()
    if coverage is not None:
        coverage, _ = _unwrap(coverage)
        masks = masks * (coverage.reshape(bp.height, bp.width) >= COVERAGE_MIN).to(DTYPE)
    blurred = gather_convolve(data, bp.depth_kernels(depth))
    out = (1.0 - masks[..., None]) * data + masks[..., None] * blurred
    if squeeze:
        out = out[..., 0]
    return _wrap(out, space)


def mask_field(bp, coverage=None):
    _, masks, _ = bp.decode()
    if coverage is not None:
        masks = masks * (coverage >= COVERAGE_MIN).to(DTYPE)
    return masks


class VirtualTrajectory(object):
    """Exposure-time camera path: geodesic from start to end plus per-sub-frame Lie corrections (theta, rho)."""

    def __init__(self, start, end, n_sub=DEFAULT_N_SUB, corrections=None):
        if n_sub < 1:
            raise BlurSplatError(Error('errorMsgInvalidSubframeCount', field='n_sub', info=n_sub))
        self.start = start
        self.end = end
        self.n_sub = n_sub
        if corrections is None:
            corrections = torch.zeros((n_sub, 6), dtype=DTYPE)
        self.corrections = torch.as_tensor(corrections, dtype=DTYPE)
        if self.corrections.shape != (n_sub, 6) or not torch.isfinite(self.corrections).all():
            raise BlurSplatError(Error('errorMsgInvalidCorrections', field='corrections'))

    @staticmethod
    def static(pose, n_sub=DEFAULT_N_SUB):
        return VirtualTrajectory(pose, pose.copy(), n_sub)

    def midpoint(self):
        return SE3Pose.from_tensors(*subframe_pose_tensors(
            self.start.tensors(), self.end.tensors(), torch.zeros((1, 6), dtype=DTYPE))[0])

    def copy(self):
        return VirtualTrajectory(self.start.copy(), self.end.copy(), self.n_sub, self.corrections.detach().clone())


def subframe_fractions(n_sub):
    if n_sub == 1:
        return [0.5]
    return [k / float(n_sub - 1) for k in range(n_sub)]


def subframe_pose_tensors(start, end, corrections):
    """Differentiable sub-frame poses exp(c_k) * exp(u_k * log(end * start^-1)) * start."""
    xi = se3_log(*se3_compose(end, se3_inverse(start)))
    poses = []
    for k, u in enumerate(subframe_fractions(corrections.shape[0])):
        interp = se3_compose(se3_exp(u * xi), start)
        poses.append(se3_compose(se3_exp(corrections[k]), interp))
    return poses


def interpolate_subframe_poses(vt):
    return [SE3Pose.from_tensors(q, t) for q, t in subframe_pose_tensors(
        vt.start.tensors(), vt.end.tensors(), vt.corrections)]


def compose_subframe_blur(scene, cam, vt, bps, e, pose_tensors=None, force_mask=True, return_aux=False):
    """Mean over sub-frames of exposure-adjusted, blur-processed renders for color and depth.

    :param pose_tensors: optional differentiable sub-frame poses replacing the ones derived from vt
    :param return_aux: also return the mean rendered alpha and the mean mask field
    :return: (blur_color (H, W, 3), blur_depth (H, W)) tensors
    """
    if len(bps) != vt.n_sub:
        raise BlurSplatError(Error('errorMsgProposalCountMismatch', field='bps', info=len(bps)))
    if pose_tensors is None:
        pose_tensors = subframe_pose_tensors(vt.start.tensors(), vt.end.tensors(), vt.corrections)
    colors = []
    depths = []
    alphas = []
    masks = []
    for pose, bp in zip(pose_tensors, bps):
        out = render(scene, cam, pose)
        coverage = out.alpha if force_mask else None
        colors.append(apply_blur_proposal(apply_exposure(out.color, e), out.depth, bp, coverage))
        depths.append(apply_blur_proposal(out.depth, out.depth, bp, coverage))
        alphas.append(out.alpha)
        masks.append(mask_field(bp, coverage))
    color = torch.stack(colors).mean(0)
    depth = torch.stack(depths).mean(0)
    if return_aux:
        return color, depth, torch.stack(alphas).mean(0), torch.stack(masks).mean(0)
    return color, depth

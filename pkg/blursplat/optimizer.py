"""Frame-class losses, coarse-to-fine bundle adjustment, global optimization and final refinement.

Losses return scalar torch tensors; gradients w.r.t. every tensor with requires_grad
set (scene parameters, exposure, proposal logits, sub-frame corrections) follow from
backward(). Frame records are updated in place by the optimization stages.
"""
import csv
import logging

import numpy as np
import torch

from .blurmodel import BlurProposal, apply_blur_proposal, apply_exposure,\
    compose_subframe_blur, mask_field, subframe_pose_tensors, DEFAULT_GRID_FACTOR, COVERAGE_MIN
from .enums import *
from .errors import Error, BlurSplatError
from .imaging import downscale
from .lie import DTYPE, SE3Pose, se3_perturb
from .scene import GaussianScene, deform_gaussians, render
from .structs import ExposureParams, Image

logger = logging.getLogger(__name__)

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8
OPACITY_EPS = 1e-6


class ScaleLevel(object):
    def __init__(self, factor, kernel_size, iterations):
        self.factor = int(factor)
        self.kernel_size = int(kernel_size)
        self.iterations = int(iterations)


DEFAULT_SCHEDULE = [ScaleLevel(4, 3, 200), ScaleLevel(2, 5, 200), ScaleLevel(1, 9, 200)]


def default_kernel_size(factor):
    for level in DEFAULT_SCHEDULE:
        if level.factor == factor:
            return level.kernel_size
    return DEFAULT_SCHEDULE[0].kernel_size


class OptimizationSettings(object):
    """Learning rates per parameter group and loop options of the optimization stages."""

    def __init__(self, lr_means=1e-3, lr_scales=5e-3, lr_rotations=1e-3, lr_opacities=5e-2, lr_colors=2.5e-2,
                 lr_exposure=1e-2, lr_proposal=5e-2, lr_corrections=1e-3, lr_endpoints=1e-3,
                 grid_factor=DEFAULT_GRID_FACTOR, log_every=50, enable_fallback=True):
        self.lr_means = lr_means
        self.lr_scales = lr_scales
        self.lr_rotations = lr_rotations
        self.lr_opacities = lr_opacities
        self.lr_colors = lr_colors
        self.lr_exposure = lr_exposure
        self.lr_proposal = lr_proposal
        self.lr_corrections = lr_corrections
        self.lr_endpoints = lr_endpoints
        self.grid_factor = grid_factor
        self.log_every = log_every
        self.enable_fallback = enable_fallback


class FrameRecord(object):
    """One frame with its class and the parameters optimized for it.

    Sharp and Deblurred frames carry a single pose; Fail frames a VirtualTrajectory whose
    endpoints may be re-estimated through the left perturbations in endpoint_delta.
    Proposals are keyed by downscale factor (a list of n_sub proposals for Fail frames).
    """

    def __init__(self, index, image_obs, depth_obs, frame_class, pose=None, trajectory=None, exposure=None,
                 valid_mask=None, timestamp=None):
        if frame_class == FrameClass.fail and trajectory is None:
            raise BlurSplatError(Error('errorMsgMissingTrajectory', object_id=index))
        if frame_class != FrameClass.fail and pose is None:
            raise BlurSplatError(Error('errorMsgMissingPose', object_id=index))
        self.index = index
        self.timestamp = timestamp if timestamp is not None else float(index)
        self.image_obs = image_obs
        self.depth_obs = depth_obs
        self.frame_class = frame_class
        self.pose = pose
        self.trajectory = trajectory
        if exposure is None:
            exposure = ExposureParams()
        self.exposure = torch.tensor([exposure.a_exposure, exposure.b_exposure], dtype=DTYPE)
        self.endpoint_delta = torch.zeros((2, 6), dtype=DTYPE)
        self.proposals = dict()
        self.valid_mask = valid_mask
        self._observations = dict()

    def exposure_params(self):
        return ExposureParams(float(self.exposure[0]), float(self.exposure[1]))

    def proposal(self, factor, kernel_size, cam, grid_factor=DEFAULT_GRID_FACTOR):
        if factor not in self.proposals:
            cam_s = cam.scaled(factor)
            if self.frame_class == FrameClass.fail:
                self.proposals[factor] = [BlurProposal.zeros(kernel_size, cam_s.width, cam_s.height, grid_factor)
                                          for _ in range(self.trajectory.n_sub)]
            else:
                self.proposals[factor] = BlurProposal.zeros(kernel_size, cam_s.width, cam_s.height, grid_factor)
        return self.proposals[factor]

    def observations(self, factor):
        """Downscaled (color (h, w, 3), depth (h, w), color mask (h, w)) tensors."""
        if factor not in self._observations:
            color = downscale(self.image_obs, factor).tensor()
            depth_data = self.depth_obs.data[:, :, 0]
            valid = depth_data > 0
            mask = np.ones(depth_data.shape) if self.valid_mask is None else self.valid_mask.astype(np.float64)
            depth = downscale(Image(depth_data), factor).tensor()[..., 0]
            # a coarse depth sample is valid only when its whole block is
            depth_valid = downscale(Image(valid.astype(np.float64)), factor).tensor()[..., 0] >= 1.0
            color_valid = downscale(Image(mask), factor).tensor()[..., 0] >= 1.0
            self._observations[factor] = (color, depth * depth_valid, color_valid)
        return self._observations[factor]

    def endpoint_poses(self):
        """Differentiable (start, end) pose tensors including the endpoint perturbations."""
        return (se3_perturb(self.endpoint_delta[0], self.trajectory.start.tensors()),
                se3_perturb(self.endpoint_delta[1], self.trajectory.end.tensors()))

    def bake_endpoints(self):
        with torch.no_grad():
            start, end = self.endpoint_poses()
        self.trajectory.start = SE3Pose.from_tensors(*start)
        self.trajectory.end = SE3Pose.from_tensors(*end)
        self.endpoint_delta = torch.zeros((2, 6), dtype=DTYPE)

    def estimated_pose(self):
        if self.frame_class == FrameClass.fail:
            return self.trajectory.midpoint()
        return self.pose


def _check_class(fr, frame_class):
    if fr.frame_class != frame_class:
        raise BlurSplatError(Error('errorMsgFrameClassMismatch', object_id=fr.index,
                                   info=fr.frame_class.name, context=frame_class.name))


def masked_l1(pred, target, mask):
    """Mean absolute difference over masked pixels; pred/target (h, w) or (h, w, c)."""
    mask = mask.to(DTYPE)
    if pred.dim() == 3:
        mask = mask[..., None].expand_as(pred)
    count = mask.sum()
    if float(count) == 0.0:
        return torch.zeros((), dtype=DTYPE)
    return (torch.abs(pred - target) * mask).sum() / count


def _depth_mask(depth_obs, alpha):
    return (depth_obs > 0) & (alpha.detach() >= COVERAGE_MIN)


def loss_sharp(fr, scene, cam, lw, scale=1):
    _check_class(fr, FrameClass.sharp)
    color_obs, depth_obs, color_valid = fr.observations(scale)
    out = render(scene, cam.scaled(scale), fr.pose.tensors())
    photometric = lw.lambda_rgb * masked_l1(out.color, color_obs, color_valid) +\
        lw.lambda_depth * masked_l1(out.depth, depth_obs, _depth_mask(depth_obs, out.alpha))
    return lw.w_sharp * photometric


def loss_deblur(fr, scene, cam, lw, scale=1, kernel_size=None, grid_factor=DEFAULT_GRID_FACTOR):
    _check_class(fr, FrameClass.deblurred)
    color_obs, depth_obs, color_valid = fr.observations(scale)
    bp = fr.proposal(scale, kernel_size or default_kernel_size(scale), cam, grid_factor)
    out = render(scene, cam.scaled(scale), fr.pose.tensors())
    color = apply_blur_proposal(apply_exposure(out.color, fr.exposure), out.depth, bp, out.alpha)
    depth = apply_blur_proposal(out.depth, out.depth, bp, out.alpha)
    return lw.lambda_rgb * masked_l1(color, color_obs, color_valid) +\
        lw.lambda_depth * masked_l1(depth, depth_obs, _depth_mask(depth_obs, out.alpha)) +\
        lw.lambda_sparse * mask_field(bp, out.alpha).abs().mean()


def loss_fail(fr, scene, cam, lw, scale=1, kernel_size=None, grid_factor=DEFAULT_GRID_FACTOR):
    _check_class(fr, FrameClass.fail)
    color_obs, depth_obs, color_valid = fr.observations(scale)
    bps = fr.proposal(scale, kernel_size or default_kernel_size(scale), cam, grid_factor)
    start, end = fr.endpoint_poses()
    poses = subframe_pose_tensors(start, end, fr.trajectory.corrections)
    color, depth, alpha, masks = compose_subframe_blur(scene, cam.scaled(scale), fr.trajectory, bps, fr.exposure,
                                                      pose_tensors=poses, return_aux=True)
    return lw.lambda_rgb * masked_l1(color, color_obs, color_valid) +\
        lw.lambda_depth * masked_l1(depth, depth_obs, _depth_mask(depth_obs, alpha)) +\
        lw.lambda_sparse * masks.abs().mean()


def class_losses(frames, scene, cam, lw, scale=1, kernel_size=None, grid_factor=DEFAULT_GRID_FACTOR):
    """Weighted loss sums per frame class; Sharp losses already carry w_sharp."""
    sums = dict((frame_class, torch.zeros((), dtype=DTYPE))
                for frame_class in (FrameClass.sharp, FrameClass.deblurred, FrameClass.fail))
    for fr in frames:
        if fr.frame_class == FrameClass.sharp:
            sums[FrameClass.sharp] = sums[FrameClass.sharp] + loss_sharp(fr, scene, cam, lw, scale)
        elif fr.frame_class == FrameClass.deblurred:
            sums[FrameClass.deblurred] = sums[FrameClass.deblurred] +\
                lw.w_deblur * loss_deblur(fr, scene, cam, lw, scale, kernel_size, grid_factor)
        elif fr.frame_class == FrameClass.fail:
            sums[FrameClass.fail] = sums[FrameClass.fail] +\
                lw.w_fail * loss_fail(fr, scene, cam, lw, scale, kernel_size, grid_factor)
        else:
            raise BlurSplatError(Error('errorMsgInvalidFrameClass', object_id=fr.index, info=fr.frame_class.name))
    return sums


def loss_total(frames, scene, cam, lw, scale=1, kernel_size=None, grid_factor=DEFAULT_GRID_FACTOR):
    sums = class_losses(frames, scene, cam, lw, scale, kernel_size, grid_factor)
    return sums[FrameClass.sharp] + sums[FrameClass.deblurred] + sums[FrameClass.fail]


def scale_regularizer(scene):
    """Sum over Gaussians of the L1 distance of the scale to the scene-wide mean scale (held constant)."""
    scales = scene.scales
    if scales.shape[0] == 0:
        return torch.zeros((), dtype=DTYPE)
    return torch.abs(scales - scales.mean(0).detach()).sum()


def loss_global(frames, scene, cam, lw, scale=1, kernel_size=None, grid_factor=DEFAULT_GRID_FACTOR):
    return loss_total(frames, scene, cam, lw, scale, kernel_size, grid_factor) +\
        lw.lambda_reg * scale_regularizer(scene)


class SceneParameters(object):
    """Unconstrained optimization variables of a scene: log-scales and opacity logits."""

    def __init__(self, scene):
        scene = scene.detach()
        opacities = torch.clamp(scene.opacities, OPACITY_EPS, 1.0 - OPACITY_EPS)
        self.means = scene.means.requires_grad_(True)
        self.rotations = scene.rotations.requires_grad_(True)
        self.log_scales = torch.log(scene.scales).requires_grad_(True)
        self.opacity_logits = torch.log(opacities / (1.0 - opacities)).requires_grad_(True)
        self.colors = scene.colors.requires_grad_(True)

    def scene(self):
        return GaussianScene(self.means, self.rotations, torch.exp(self.log_scales),
                             torch.sigmoid(self.opacity_logits), self.colors)

    def project(self):
        with torch.no_grad():
            self.colors.clamp_(min=0.0)

    def export(self):
        scene = self.scene().detach()
        scene.rotations = scene.rotations / torch.linalg.norm(scene.rotations, dim=-1, keepdim=True)
        return scene


class OptimizerState(object):
    """Moment-adaptive gradient descent over named parameter groups."""

    def __init__(self, groups, level_index=0):
        # groups: list of (name, params, lr)
        for name, params, lr in groups:
            if lr <= 0:
                raise BlurSplatError(Error('errorMsgInvalidLearningRate', field='lr_' + name, info=lr))
        self.groups = [(name, params, lr) for name, params, lr in groups if params]
        self.adam = torch.optim.Adam([dict(params=params, lr=lr, name=name) for name, params, lr in self.groups],
                                     betas=ADAM_BETAS, eps=ADAM_EPS)
        self.iteration = 0
        self.level_index = level_index

    def step(self, loss):
        self.adam.zero_grad()
        loss.backward()
        self.adam.step()
        self.iteration += 1


class LossTrace(object):
    HEADER = ('iteration', 'scale', 'sharp', 'deblurred', 'fail', 'total')

    def __init__(self):
        self.rows = []

    def append(self, iteration, scale, sums):
        values = [float(sums[c]) for c in (FrameClass.sharp, FrameClass.deblurred, FrameClass.fail)]
        self.rows.append((iteration, scale, values[0], values[1], values[2], sum(values)))

    def totals(self):
        return [row[-1] for row in self.rows]

    def extend(self, other):
        offset = self.rows[-1][0] + 1 if self.rows else 0
        for row in other.rows:
            self.rows.append((row[0] + offset,) + tuple(row[1:]))

    def __len__(self):
        return len(self.rows)

    def write(self, filename):
        with open(filename, 'w', newline='') as f:
            writer = csv.writer(f)
            writer.writerow(self.HEADER)
            for row in self.rows:
                writer.writerow([row[0], row[1]] + ['{0:.10g}'.format(value) for value in row[2:]])


class MappingResult(object):
    def __init__(self, scene, trace):
        self.scene = scene
        self.trace = trace


def _frame_groups(frames, level, cam, settings, refine_fail_poses):
    exposure, proposal, corrections, endpoints = [], [], [], []
    for fr in frames:
        if fr.frame_class == FrameClass.deblurred:
            fr.exposure.requires_grad_(True)
            exposure.append(fr.exposure)
            proposal.extend(fr.proposal(level.factor, level.kernel_size, cam, settings.grid_factor).parameters())
        elif fr.frame_class == FrameClass.fail:
            for bp in fr.proposal(level.factor, level.kernel_size, cam, settings.grid_factor):
                proposal.extend(bp.parameters())
            fr.trajectory.corrections.requires_grad_(True)
            corrections.append(fr.trajectory.corrections)
            if refine_fail_poses:
                fr.exposure.requires_grad_(True)
                exposure.append(fr.exposure)
                fr.endpoint_delta.requires_grad_(True)
                endpoints.append(fr.endpoint_delta)
    for param in proposal:
        param.requires_grad_(True)
    return [('exposure', exposure, settings.lr_exposure), ('proposal', proposal, settings.lr_proposal),
            ('corrections', corrections, settings.lr_corrections), ('endpoints', endpoints, settings.lr_endpoints)]


def _release(frames):
    for fr in frames:
        fr.exposure = fr.exposure.detach()
        if fr.frame_class == FrameClass.fail:
            fr.trajectory.corrections = fr.trajectory.corrections.detach()
            if fr.endpoint_delta.requires_grad:
                fr.bake_endpoints()
        for factor, value in list(fr.proposals.items()):
            fr.proposals[factor] = [bp.detach() for bp in value] if isinstance(value, list) else value.detach()


def _scene_groups(params, settings):
    return [('means', [params.means], settings.lr_means), ('scales', [params.log_scales], settings.lr_scales),
            ('rotations', [params.rotations], settings.lr_rotations),
            ('opacities', [params.opacity_logits], settings.lr_opacities),
            ('colors', [params.colors], settings.lr_colors)]


def _diagnostics(frames, params, level, iteration, sums):
    return dict(iteration=iteration, scale=level.factor,
                losses=dict((c.name, float(v)) for c, v in sums.items()),
                finite_means=bool(torch.isfinite(params.means).all()),
                finite_scales=bool(torch.isfinite(params.log_scales).all()),
                frames=[fr.index for fr in frames])


def _optimize(frames, scene, cam, lw, schedule, settings, stage, refine_fail_poses=False,
              loss_fn=class_losses, with_regularizer=False):
    if not settings.enable_fallback:
        frames = [fr for fr in frames if fr.frame_class != FrameClass.fail]
    if not frames:
        raise BlurSplatError(Error('errorMsgNoFrames', context=stage.name))
    params = SceneParameters(GaussianScene.from_gaussians(scene))
    trace = LossTrace()
    iteration = 0
    try:
        for level_index, level in enumerate(schedule):
            logger.info('%s: scale 1/%d, kernel %d, %d iterations', stage.name, level.factor, level.kernel_size,
                        level.iterations)
            state = OptimizerState(_scene_groups(params, settings) +
                                   _frame_groups(frames, level, cam, settings, refine_fail_poses), level_index)
            for _ in range(level.iterations):
                current = params.scene()
                sums = loss_fn(frames, current, cam, lw, level.factor, level.kernel_size, settings.grid_factor)
                loss = sums[FrameClass.sharp] + sums[FrameClass.deblurred] + sums[FrameClass.fail]
                if with_regularizer:
                    loss = loss + lw.lambda_reg * scale_regularizer(current)
                if not torch.isfinite(loss):
                    diagnostics = _diagnostics(frames, params, level, iteration, sums)
                    logger.error('%s: non-finite loss, diagnostics %s', stage.name, diagnostics)
                    raise BlurSplatError(Error('errorMsgNonFiniteLoss', object_id=iteration, context=stage.name,
                                               info=diagnostics))
                trace.append(iteration, level.factor, sums)
                if settings.log_every and iteration % settings.log_every == 0:
                    logger.debug('%s: iteration %d scale %d loss %.6g', stage.name, iteration, level.factor,
                                 float(loss))
                if loss.requires_grad:
                    state.step(loss)
                    params.project()
                iteration += 1
    finally:
        _release(frames)
    return MappingResult(params.export(), trace)


def run_mapping(frames, scene, cam, lw, schedule=None, settings=None):
    """Coarse-to-fine optimization of scene, Deblurred exposures/proposals and Fail corrections/proposals.

    Poses of Sharp and Deblurred frames are never modified.
    """
    return _optimize(frames, scene, cam, lw, schedule or DEFAULT_SCHEDULE, settings or OptimizationSettings(),
                     Stage.mapping)


def run_global_optimization(frames, scene, cam, lw, iterations, settings=None, kernel_size=None):
    """Full-resolution steps on loss_global (frame losses plus scale regularization)."""
    schedule = [ScaleLevel(1, kernel_size or default_kernel_size(1), iterations)]
    return _optimize(frames, scene, cam, lw, schedule, settings or OptimizationSettings(),
                     Stage.global_optimization, with_regularizer=True)


def final_refinement(frames, scene, cam, lw, schedule=None, settings=None):
    """One more schedule pass that also re-estimates Fail-frame endpoints and exposure."""
    return _optimize(frames, scene, cam, lw, schedule or DEFAULT_SCHEDULE, settings or OptimizationSettings(),
                     Stage.refinement, refine_fail_poses=True)


def apply_depth_update(frames, scene, cam, tracker_depth_updates):
    """Deform the scene for every keyframe whose depth the tracker re-estimated, in keyframe order."""
    by_index = dict((fr.index, fr) for fr in frames)
    unknown = [index for index in tracker_depth_updates if index not in by_index]
    if unknown:
        raise BlurSplatError(Error('errorMsgUnknownKeyframe', object_id=unknown[0], info=unknown))
    scene = GaussianScene.from_gaussians(scene)
    for index in sorted(tracker_depth_updates):
        fr = by_index[index]
        depth_new = tracker_depth_updates[index]
        scene = deform_gaussians(scene, fr.estimated_pose(), cam, fr.depth_obs, depth_new)
        fr.depth_obs = depth_new
        fr._observations = dict()
    return scene

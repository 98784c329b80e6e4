import logging
import math

import numpy as np
import torch

from .enums import *
from .errors import Error, BlurSplatError, BlurSplatErrors
from .lie import DTYPE, SE3Pose, quat_to_rotmat, se3_perturb
from .structs import Image
from .utils import read_table_lines

logger = logging.getLogger(__name__)

NEAR_PLANE = 0.01
COV2D_FLOOR = 0.3
ALPHA_MAX = 0.99
TRANSMITTANCE_MIN = 1e-4
MIN_SCALE = 1e-9
SEED_OPACITY = 0.7
SCENE_COLUMNS = 14


class Gaussian3D(object):
    """One scene primitive: mean, unit quaternion (w, x, y, z), per-axis scale, opacity and linear color."""

    def __init__(self, mean, rotation=(1.0, 0.0, 0.0, 0.0), scale=(1.0, 1.0, 1.0), opacity=1.0,
                 color=(1.0, 1.0, 1.0)):
        self.mean = np.asarray(mean, dtype=np.float64).reshape(3)
        rotation = np.asarray(rotation, dtype=np.float64).reshape(4)
        norm = np.linalg.norm(rotation)
        if norm < 1e-12:
            raise BlurSplatError(Error('errorMsgInvalidQuaternion', field='rotation'))
        self.rotation = rotation / norm
        self.scale = np.asarray(scale, dtype=np.float64).reshape(3)
        self.opacity = float(opacity)
        self.color = np.asarray(color, dtype=np.float64).reshape(3)
        if np.any(self.scale <= 0):
            raise BlurSplatError(Error('errorMsgNonPositiveScale', field='scale', info=str(self.scale)))
        if not 0.0 <= self.opacity <= 1.0:
            raise BlurSplatError(Error('errorMsgInvalidOpacity', field='opacity', info=self.opacity))

    def rotation_matrix(self):
        return quat_to_rotmat(torch.as_tensor(self.rotation, dtype=DTYPE)).numpy()

    def covariance(self):
        r = self.rotation_matrix()
        return r @ np.diag(self.scale ** 2) @ r.T


class GaussianScene(object):
    """Tensor-backed collection of Gaussians; tensors may require grad during optimization."""

    def __init__(self, means, rotations, scales, opacities, colors):
        self.means = means
        self.rotations = rotations
        self.scales = scales
        self.opacities = opacities
        self.colors = colors

    @staticmethod
    def empty():
        return GaussianScene(torch.zeros((0, 3), dtype=DTYPE), torch.zeros((0, 4), dtype=DTYPE),
                             torch.zeros((0, 3), dtype=DTYPE), torch.zeros((0,), dtype=DTYPE),
                             torch.zeros((0, 3), dtype=DTYPE))

    @staticmethod
    def from_gaussians(gaussians):
        if isinstance(gaussians, GaussianScene):
            return gaussians
        if not gaussians:
            return GaussianScene.empty()

        def stack(values):
            return torch.as_tensor(np.array(values, dtype=np.float64), dtype=DTYPE)
        return GaussianScene(stack([g.mean for g in gaussians]), stack([g.rotation for g in gaussians]),
                             stack([g.scale for g in gaussians]), stack([g.opacity for g in gaussians]),
                             stack([g.color for g in gaussians]))

    def to_gaussians(self):
        scene = self.detach()
        return [Gaussian3D(scene.means[i].numpy(), scene.rotations[i].numpy(), scene.scales[i].numpy(),
                           float(scene.opacities[i]), scene.colors[i].numpy()) for i in range(len(scene))]

    def detach(self):
        return GaussianScene(self.means.detach().clone(), self.rotations.detach().clone(),
                             self.scales.detach().clone(), self.opacities.detach().clone(),
                             self.colors.detach().clone())

    def copy(self):
        return self.detach()

    def concat(self, other):
        return GaussianScene(torch.cat([self.means, other.means]), torch.cat([self.rotations, other.rotations]),
                             torch.cat([self.scales, other.scales]), torch.cat([self.opacities, other.opacities]),
                             torch.cat([self.colors, other.colors]))

    def covariances(self):
        r = quat_to_rotmat(self.rotations)
        return r @ torch.diag_embed(self.scales * self.scales) @ r.transpose(-1, -2)

    def __len__(self):
        return self.means.shape[0]


class RenderOutput(object):
    def __init__(self, color, depth, alpha):
        # color (H, W, 3), depth (H, W), alpha (H, W)
        self.color = color
        self.depth = depth
        self.alpha = alpha

    def to_images(self):
        return (Image.from_tensor(self.color), Image.from_tensor(self.depth),
                Image.from_tensor(self.alpha))


def _pose_tensors(pose):
    if isinstance(pose, SE3Pose):
        return pose.tensors()
    return pose


def eval_gaussian(g, x):
    if np.any(g.scale < MIN_SCALE):
        raise BlurSplatError(Error('errorMsgSingularCovariance', field='scale', info=str(g.scale)))
    d = np.asarray(x, dtype=np.float64) - g.mean
    return float(np.exp(-0.5 * d @ np.linalg.solve(g.covariance(), d)))


def project_tensors(scene, cam, pose):
    """Project all Gaussians; returns (mean2d (N, 2), cov2d (N, 2, 2), depth (N,)) without culling.

    Gaussians at or behind the near plane are projected with unit depth so their entries stay finite; callers
    cull them by the returned depth.
    """
    q, t = _pose_tensors(pose)
    w = quat_to_rotmat(q).transpose(-1, -2)
    p = (scene.means - t) @ w.T
    x, y, depth = p.unbind(-1)
    z = torch.where(depth > NEAR_PLANE, depth, torch.ones_like(depth))
    mean2d = torch.stack([cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy], dim=-1)
    zero = torch.zeros_like(z)
    jac = torch.stack([
        torch.stack([cam.fx / z, zero, -cam.fx * x / (z * z)], dim=-1),
        torch.stack([zero, cam.fy / z, -cam.fy * y / (z * z)], dim=-1)], dim=-2)
    cov_cam = w @ scene.covariances() @ w.T
    cov2d = jac @ cov_cam @ jac.transpose(-1, -2) + COV2D_FLOOR * torch.eye(2, dtype=DTYPE)
    return mean2d, cov2d, depth


def project_gaussian(g, cam, pose):
    """Return (mean2d, cov2d, depth) of one Gaussian, or None when it is behind the near plane."""
    mean2d, cov2d, z = project_tensors(GaussianScene.from_gaussians([g]), cam, pose)
    if float(z[0]) <= NEAR_PLANE:
        return None
    return mean2d[0].numpy(), cov2d[0].numpy(), float(z[0])


def render(scene, cam, pose):
    """Alpha-composite the scene front to back.

    :param scene: GaussianScene or list of Gaussian3D
    :param pose: world-from-camera SE3Pose or (quaternion, translation) tensors
    :return: RenderOutput with color (H, W, 3), depth (H, W) and alpha (H, W) tensors
    """
    scene = GaussianScene.from_gaussians(scene)
    h, w = cam.height, cam.width
    if len(scene) == 0:
        return RenderOutput(torch.zeros((h, w, 3), dtype=DTYPE), torch.zeros((h, w), dtype=DTYPE),
                            torch.zeros((h, w), dtype=DTYPE))
    mean2d, cov2d, z = project_tensors(scene, cam, pose)
    visible = (z > NEAR_PLANE).detach()
    order = torch.argsort(torch.where(visible, z, torch.full_like(z, np.inf)).detach())
    order = order[visible[order]]
    if order.numel() == 0:
        return render(GaussianScene.empty(), cam, pose)
    mean2d, cov2d, z = mean2d[order], cov2d[order], z[order]
    opacities, colors = scene.opacities[order], scene.colors[order]

    a, b, c = cov2d[:, 0, 0], cov2d[:, 0, 1], cov2d[:, 1, 1]
    det = a * c - b * b
    vs, us = torch.meshgrid(torch.arange(h, dtype=DTYPE), torch.arange(w, dtype=DTYPE), indexing='ij')
    dx = us.reshape(1, -1) - mean2d[:, 0:1]
    dy = vs.reshape(1, -1) - mean2d[:, 1:2]
    power = -0.5 * (c[:, None] * dx * dx - 2.0 * b[:, None] * dx * dy + a[:, None] * dy * dy) / det[:, None]
    alpha = torch.clamp(opacities[:, None] * torch.exp(power), 0.0, ALPHA_MAX)

    transmittance = torch.cumprod(torch.cat([torch.ones_like(alpha[:1]), 1.0 - alpha[:-1]]), dim=0)
    contributes = (transmittance >= TRANSMITTANCE_MIN).detach()
    weights = alpha * transmittance * contributes

    color = (weights.T @ colors).reshape(h, w, 3)
    depth = (weights.T @ z).reshape(h, w)
    acc = weights.sum(0).reshape(h, w)
    return RenderOutput(color, depth, acc)


def render_gradients(scene, cam, pose, upstream_color=None, upstream_depth=None):
    """Reverse-mode gradients of sum(upstream * render) for every Gaussian parameter and the pose.

    The pose gradient is taken w.r.t. a left perturbation (theta, rho) of the pose at zero.
    """
    scene = GaussianScene.from_gaussians(scene).detach()
    params = [scene.means, scene.scales, scene.rotations, scene.opacities, scene.colors]
    for param in params:
        param.requires_grad_(True)
    delta = torch.zeros(6, dtype=DTYPE, requires_grad=True)
    out = render(scene, cam, se3_perturb(delta, _pose_tensors(pose)))
    objective = torch.zeros((), dtype=DTYPE)
    if upstream_color is not None:
        objective = objective + (out.color * torch.as_tensor(upstream_color, dtype=DTYPE)).sum()
    if upstream_depth is not None:
        objective = objective + (out.depth * torch.as_tensor(upstream_depth, dtype=DTYPE)).sum()
    if not objective.requires_grad:
        grads = [torch.zeros_like(p) for p in params + [delta]]
    else:
        grads = torch.autograd.grad(objective, params + [delta], allow_unused=True)
        grads = [torch.zeros_like(p) if g is None else g for g, p in zip(grads, params + [delta])]
    names = ('means', 'scales', 'rotations', 'opacities', 'colors', 'pose')
    return dict((name, grad.detach().numpy()) for name, grad in zip(names, grads))


def _depth_at(depth, u, v):
    data = depth.data if isinstance(depth, Image) else np.asarray(depth)
    if data.ndim == 3:
        data = data[:, :, 0]
    return data[v, u]


def deform_gaussians(scene, keyframe_pose, cam, depth_old, depth_new):
    """Move means along the ray from the keyframe center by the relative depth change at their pixel."""
    scene = GaussianScene.from_gaussians(scene).detach()
    if len(scene) == 0:
        return scene
    mean2d, _, z = project_tensors(scene, cam, keyframe_pose)
    center = torch.as_tensor(keyframe_pose.translation, dtype=DTYPE)
    means = scene.means.clone()
    affected = 0
    for i in range(len(scene)):
        if float(z[i]) <= NEAR_PLANE:
            continue
        u = math.floor(float(mean2d[i, 0]) + 0.5)
        v = math.floor(float(mean2d[i, 1]) + 0.5)
        if not (0 <= u < cam.width and 0 <= v < cam.height):
            continue
        d = float(_depth_at(depth_old, u, v))
        d_new = float(_depth_at(depth_new, u, v))
        if d <= 0 or d_new <= 0:
            continue
        means[i] = means[i] + ((d_new - d) / d) * (means[i] - center)
        affected += 1
    logger.debug('deformed %d of %d gaussians', affected, len(scene))
    return GaussianScene(means, scene.rotations, scene.scales, scene.opacities, scene.colors)


def seed_gaussians_from_depth(img, depth, cam, pose, stride, jitter=0.0, rng=None):
    """Back-project one isotropic Gaussian per stride-sampled pixel with positive depth.

    :param jitter: maximum sample offset as a fraction of stride/2, drawn from rng
    """
    data = img.data if img.channels == 3 else np.repeat(img.data, 3, axis=2)
    rotation = pose.rotation_matrix()
    offset = stride // 2
    gaussians = []
    for v in range(offset, cam.height, stride):
        for u in range(offset, cam.width, stride):
            su, sv = float(u), float(v)
            if jitter > 0 and rng is not None:
                su += rng.uniform(-1.0, 1.0) * jitter * stride / 2.0
                sv += rng.uniform(-1.0, 1.0) * jitter * stride / 2.0
            d = float(_depth_at(depth, u, v))
            if d <= 0:
                continue
            p_cam = np.array([(su - cam.cx) * d / cam.fx, (sv - cam.cy) * d / cam.fy, d])
            scale = d / cam.fx * stride / 2.0
            gaussians.append(Gaussian3D(rotation @ p_cam + pose.translation, scale=(scale, scale, scale),
                                        opacity=SEED_OPACITY, color=data[v, u]))
    return gaussians


def write_scene(scene, filename):
    scene = GaussianScene.from_gaussians(scene).detach()
    with open(filename, 'w') as f:
        f.write('# mu_x mu_y mu_z qw qx qy qz sx sy sz opacity r g b\n')
        values = torch.cat([scene.means, scene.rotations, scene.scales, scene.opacities[:, None],
                            scene.colors], dim=1).numpy()
        for row in values:
            f.write(' '.join('{0:.17g}'.format(value) for value in row) + '\n')


def read_scene(filename):
    """Read a scene file, collecting one error per malformed line before raising."""
    gaussians = []
    errors = []
    for line_number, row in enumerate(read_table_lines(filename), start=1):
        try:
            if len(row) != SCENE_COLUMNS:
                raise ValueError('expected {0} columns'.format(SCENE_COLUMNS))
            values = [float(value) for value in row]
            gaussians.append(Gaussian3D(values[0:3], values[3:7], values[7:10], values[10], values[11:14]))
        except ValueError as ex:
            errors.append(Error('errorMsgInvalidSceneLine', object_id=filename, field=line_number, info=str(ex)))
        except BlurSplatError as ex:
            errors.append(Error(ex.error['msg_key'], object_id=filename, field=line_number,
                                info=ex.error.get('info')))
    if errors:
        raise BlurSplatErrors(errors)
    return GaussianScene.from_gaussians(gaussians)

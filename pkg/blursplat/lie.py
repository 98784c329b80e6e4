"""Rigid transforms: quaternion (w, x, y, z) and translation, with SE(3) exp/log maps.

The torch functions are differentiable everywhere including the identity, they
are shared by rendering, sub-frame interpolation and pose refinement. Lie
algebra vectors are ordered (rotation theta, translation rho).
"""
import numpy as np
import torch
from scipy.spatial.transform import Rotation

from .errors import Error, BlurSplatError

SMALL_ANGLE_SQ = 1e-12
DTYPE = torch.float64


def _as_tensor(value):
    if isinstance(value, torch.Tensor):
        return value
    return torch.as_tensor(np.asarray(value, dtype=np.float64), dtype=DTYPE)


def quat_normalize(q):
    return q / torch.linalg.norm(q, dim=-1, keepdim=True)


def quat_multiply(a, b):
    aw, ax, ay, az = a.unbind(-1)
    bw, bx, by, bz = b.unbind(-1)
    return torch.stack([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw], dim=-1)


def quat_conjugate(q):
    return q * q.new_tensor([1.0, -1.0, -1.0, -1.0])


def quat_to_rotmat(q):
    """Rotation matrices for (..., 4) quaternions; input is normalized first."""
    q = quat_normalize(q)
    w, x, y, z = q.unbind(-1)
    return torch.stack([
        torch.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], dim=-1),
        torch.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], dim=-1),
        torch.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], dim=-1)], dim=-2)


def hat(omega):
    x, y, z = omega.unbind(-1)
    zero = torch.zeros_like(x)
    return torch.stack([
        torch.stack([zero, -z, y], dim=-1),
        torch.stack([z, zero, -x], dim=-1),
        torch.stack([-y, x, zero], dim=-1)], dim=-2)


def _safe_theta(omega):
    theta_sq = (omega * omega).sum(-1)
    small = theta_sq < SMALL_ANGLE_SQ
    theta = torch.sqrt(torch.where(small, torch.ones_like(theta_sq), theta_sq))
    return theta_sq, theta, small


def so3_exp_quat(omega):
    theta_sq, theta, small = _safe_theta(omega)
    half_sinc = torch.where(small, 0.5 - theta_sq / 48.0, torch.sin(theta / 2) / theta)
    w = torch.where(small, 1.0 - theta_sq / 8.0, torch.cos(theta / 2))
    return torch.cat([w.unsqueeze(-1), omega * half_sinc.unsqueeze(-1)], dim=-1)


def quat_log(q):
    """Rotation vector of a quaternion, taking the shortest rotation."""
    q = quat_normalize(q)
    sign = torch.where(q[..., :1] < 0, -torch.ones_like(q[..., :1]), torch.ones_like(q[..., :1])).detach()
    q = q * sign
    w = q[..., 0]
    v = q[..., 1:]
    n_sq = (v * v).sum(-1)
    small = n_sq < SMALL_ANGLE_SQ
    n = torch.sqrt(torch.where(small, torch.ones_like(n_sq), n_sq))
    factor = torch.where(small, (1.0 - n_sq / (3.0 * w * w)) / w, torch.atan2(n, w) / n)
    return 2.0 * factor.unsqueeze(-1) * v


def left_jacobian(omega):
    theta_sq, theta, small = _safe_theta(omega)
    b = torch.where(small, 0.5 - theta_sq / 24.0, (1 - torch.cos(theta)) / torch.where(small, 1.0, theta_sq))
    c = torch.where(small, 1.0 / 6.0 - theta_sq / 120.0, (theta - torch.sin(theta)) / (theta * theta * theta))
    omega_hat = hat(omega)
    eye = torch.eye(3, dtype=omega.dtype).expand(omega_hat.shape)
    return eye + b[..., None, None] * omega_hat + c[..., None, None] * (omega_hat @ omega_hat)


def se3_exp(xi):
    """(q, t) for a 6-vector (theta, rho)."""
    omega = xi[..., :3]
    rho = xi[..., 3:]
    q = so3_exp_quat(omega)
    t = (left_jacobian(omega) @ rho.unsqueeze(-1)).squeeze(-1)
    return q, t


def se3_log(q, t):
    omega = quat_log(q)
    rho = torch.linalg.solve(left_jacobian(omega), t.unsqueeze(-1)).squeeze(-1)
    return torch.cat([omega, rho], dim=-1)


def se3_compose(a, b):
    qa, ta = a
    qb, tb = b
    return quat_multiply(qa, qb), (quat_to_rotmat(qa) @ tb.unsqueeze(-1)).squeeze(-1) + ta


def se3_inverse(a):
    q, t = a
    q_inv = quat_conjugate(q)
    return q_inv, -(quat_to_rotmat(q_inv) @ t.unsqueeze(-1)).squeeze(-1)


def se3_perturb(delta, a):
    """Left perturbation exp(delta) * a."""
    return se3_compose(se3_exp(delta), a)


def rotmat_to_quat(rotation):
    """Quaternion (w, x, y, z) with w >= 0 of a 3x3 rotation matrix."""
    q = Rotation.from_matrix(np.asarray(rotation, dtype=np.float64)).as_quat()[[3, 0, 1, 2]]
    if q[0] < 0:
        q = -q
    return q


class SE3Pose(object):
    """World-from-camera rigid transform; translation is the camera center in world coordinates."""

    def __init__(self, rotation=(1.0, 0.0, 0.0, 0.0), translation=(0.0, 0.0, 0.0)):
        rotation = np.asarray(rotation, dtype=np.float64).reshape(4)
        norm = np.linalg.norm(rotation)
        if not np.isfinite(norm) or norm < 1e-12:
            raise BlurSplatError(Error('errorMsgInvalidQuaternion', field='rotation', info=str(rotation)))
        self.rotation = rotation / norm
        self.translation = np.asarray(translation, dtype=np.float64).reshape(3).copy()

    @staticmethod
    def identity():
        return SE3Pose()

    @staticmethod
    def from_translation(x, y, z):
        return SE3Pose(translation=(x, y, z))

    @staticmethod
    def from_matrix(matrix):
        matrix = np.asarray(matrix, dtype=np.float64)
        return SE3Pose(rotmat_to_quat(matrix[:3, :3]), matrix[:3, 3])

    @staticmethod
    def from_tensors(q, t):
        return SE3Pose(q.detach().cpu().numpy(), t.detach().cpu().numpy())

    @staticmethod
    def exp(xi):
        q, t = se3_exp(_as_tensor(xi))
        return SE3Pose.from_tensors(q, t)

    def tensors(self):
        return _as_tensor(self.rotation), _as_tensor(self.translation)

    def rotation_matrix(self):
        return quat_to_rotmat(_as_tensor(self.rotation)).numpy()

    def matrix(self):
        m = np.eye(4)
        m[:3, :3] = self.rotation_matrix()
        m[:3, 3] = self.translation
        return m

    def inverse(self):
        return SE3Pose.from_tensors(*se3_inverse(self.tensors()))

    def log(self):
        return se3_log(*self.tensors()).numpy()

    def compose(self, other):
        return SE3Pose.from_tensors(*se3_compose(self.tensors(), other.tensors()))

    def __mul__(self, other):
        return self.compose(other)

    @property
    def center(self):
        return self.translation

    def almost_equal(self, other, tol=1e-9):
        same_rotation = min(np.abs(self.rotation - other.rotation).max(),
                            np.abs(self.rotation + other.rotation).max()) <= tol
        return same_rotation and np.abs(self.translation - other.translation).max() <= tol

    def copy(self):
        return SE3Pose(self.rotation.copy(), self.translation.copy())

    def __repr__(self):
        return 'SE3Pose(q={0}, t={1})'.format(np.round(self.rotation, 6), np.round(self.translation, 6))

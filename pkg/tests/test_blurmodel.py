import math

import numpy as np
import pytest
import torch

from blursplat.blurmodel import BlurProposal, VirtualTrajectory, apply_blur_proposal, apply_exposure,\
    compose_subframe_blur, decode_depth_kernel, interpolate_subframe_poses, sharpen_stencil
from blursplat.enums import *
from blursplat.errors import BlurSplatError
from blursplat.imaging import convolve2d
from blursplat.lie import DTYPE, SE3Pose
from blursplat.scene import render
from blursplat.structs import ExposureParams, Image, Kernel2D

from conftest import random_scene, small_pose

BIG = 50.0


def proposal(kernel_size, width, height, kernel_logits=None, mask=None, alpha=None, grid_factor=4):
    bp = BlurProposal.zeros(kernel_size, width, height, grid_factor)
    if kernel_logits is not None:
        bp.kernel_logits = torch.as_tensor(kernel_logits, dtype=DTYPE).expand_as(bp.kernel_logits).clone()
    if mask is not None:
        bp.mask_logits = torch.full_like(bp.mask_logits, mask)
    if alpha is not None:
        bp.alpha_logits = torch.full_like(bp.alpha_logits, alpha)
    return bp


class TestExposure:
    def test_identity(self, rng):
        img = Image(rng.uniform(size=(4, 4, 3)))
        assert np.array_equal(apply_exposure(img, ExposureParams()).data, img.data)

    def test_doubling(self, rng):
        img = Image(rng.uniform(size=(4, 4, 3)))
        assert np.allclose(apply_exposure(img, ExposureParams(math.log(2.0), 0.0)).data, 2.0 * img.data)

    def test_elementwise(self, rng):
        data = torch.as_tensor(rng.uniform(size=(4, 4, 3)))
        a, b = rng.normal(size=2)
        out = apply_exposure(data, (torch.tensor(a, dtype=DTYPE), torch.tensor(b, dtype=DTYPE)))
        assert torch.allclose(out, math.exp(a) * data + b)


class TestKernels:
    def test_decoded_ranges(self, rng):
        bp = proposal(5, 10, 7)
        bp.kernel_logits = torch.as_tensor(rng.normal(size=bp.kernel_logits.shape))
        bp.mask_logits = torch.as_tensor(rng.normal(size=bp.mask_logits.shape))
        kernels, masks, gains = bp.decode()
        assert kernels.shape == (7, 10, 25)
        assert torch.all(kernels >= 0)
        assert torch.allclose(kernels.sum(-1), torch.ones((7, 10), dtype=DTYPE))
        assert torch.all((masks > 0) & (masks < 1))
        assert torch.all(gains > 0)

    def test_no_sharpening(self, rng):
        bp = proposal(3, 8, 8, alpha=-BIG)
        bp.kernel_logits = torch.as_tensor(rng.normal(size=bp.kernel_logits.shape))
        kernels, _, _ = bp.decode()
        h = bp.depth_kernels(torch.full((8, 8), 2.0, dtype=DTYPE))
        assert torch.allclose(h, kernels, atol=1e-12)

    def test_uniform_kernel(self):
        kernel = decode_depth_kernel(proposal(3, 8, 8, alpha=-BIG), (3, 4), 1.5)
        assert np.allclose(kernel.weights, 1.0 / 9.0, atol=1e-12)

    def test_depth_kernel_formula(self, rng):
        bp = proposal(3, 8, 8)
        bp.kernel_logits = torch.as_tensor(rng.normal(size=bp.kernel_logits.shape))
        bp.alpha_logits = torch.as_tensor(rng.normal(size=bp.alpha_logits.shape))
        depth = 2.5
        kernel = decode_depth_kernel(bp, (5, 2), depth)
        kernels, _, gains = bp.decode()
        alpha = gains[2, 5].item() * depth / (1.0 + depth)
        oracle = np.maximum(kernels[2, 5].numpy() + alpha * sharpen_stencil(3).reshape(-1).numpy(), 0.0)
        oracle /= oracle.sum()
        assert abs(kernel.weights.sum() - 1.0) < 1e-7
        assert np.allclose(kernel.weights.reshape(-1), oracle, atol=1e-12)
        assert np.all(kernel.weights >= 0)

    def test_negative_depth(self):
        with pytest.raises(BlurSplatError) as exc_info:
            decode_depth_kernel(proposal(3, 8, 8), (0, 0), -1.0)
        assert exc_info.value.error['msg_key'] == 'errorMsgNegativeDepth'

    def test_even_kernel_size(self):
        with pytest.raises(BlurSplatError):
            BlurProposal.zeros(4, 8, 8)

    def test_text_round_trip(self, rng):
        bp = proposal(3, 9, 6)
        bp.kernel_logits = torch.as_tensor(rng.normal(size=bp.kernel_logits.shape))
        back = BlurProposal.from_text(bp.to_text())
        assert (back.kernel_size, back.width, back.height) == (3, 9, 6)
        assert torch.equal(back.kernel_logits, bp.kernel_logits)

    def test_invalid_text(self):
        with pytest.raises(BlurSplatError) as exc_info:
            BlurProposal.from_text('something else\n')
        assert exc_info.value.error['msg_key'] == 'errorMsgInvalidProposalFile'


class TestApplyBlurProposal:
    def test_zero_mask_is_identity(self, rng):
        img = Image(rng.uniform(size=(8, 8, 3)))
        out = apply_blur_proposal(img, Image(np.full((8, 8, 1), 2.0)), proposal(3, 8, 8, mask=-BIG))
        assert np.allclose(out.data, img.data, atol=1e-12)

    def test_delta_kernel_is_identity(self, rng):
        img = Image(rng.uniform(size=(8, 8, 3)))
        logits = np.full(9, -BIG)
        logits[4] = BIG
        out = apply_blur_proposal(img, Image(np.full((8, 8, 1), 2.0)),
                                  proposal(3, 8, 8, kernel_logits=logits, mask=BIG, alpha=-BIG))
        assert np.allclose(out.data, img.data, atol=1e-12)

    def test_uniform_kernel_is_convolution(self, rng):
        img = Image(rng.uniform(size=(8, 8, 3)))
        out = apply_blur_proposal(img, Image(np.full((8, 8, 1), 2.0)), proposal(5, 8, 8, mask=BIG, alpha=-BIG))
        assert np.allclose(out.data, convolve2d(img, Kernel2D.box(5)).data, atol=1e-12)

    def test_uncovered_pixels_unchanged(self, rng):
        img = Image(rng.uniform(size=(8, 8, 3)))
        coverage = torch.zeros((8, 8), dtype=DTYPE)
        coverage[:, 4:] = 1.0
        out = apply_blur_proposal(img, Image(np.full((8, 8, 1), 2.0)), proposal(5, 8, 8, mask=BIG), coverage)
        assert np.array_equal(out.data[:, :4], img.data[:, :4])
        assert not np.allclose(out.data[:, 4:], img.data[:, 4:])


class TestVirtualTrajectory:
    def test_two_subframes_are_endpoints(self, rng):
        start = small_pose(rng, 0.3)
        end = small_pose(rng, 0.3)
        poses = interpolate_subframe_poses(VirtualTrajectory(start, end, 2))
        assert poses[0].almost_equal(start, 1e-12)
        assert poses[1].almost_equal(end, 1e-12)

    def test_translation_midpoint(self):
        start = SE3Pose.from_translation(0.0, 0.0, 0.0)
        end = SE3Pose.from_translation(1.0, -2.0, 0.4)
        poses = interpolate_subframe_poses(VirtualTrajectory(start, end, 3))
        assert np.allclose(poses[1].translation, (0.5, -1.0, 0.2), atol=1e-12)

    def test_rotation_midpoint_matches_slerp(self):
        start = SE3Pose.identity()
        end = SE3Pose((math.cos(math.pi / 4), 0.0, 0.0, math.sin(math.pi / 4)))
        mid = interpolate_subframe_poses(VirtualTrajectory(start, end, 3))[1]
        # slerp halfway between identity and a 90 degree turn about z
        expected = np.array([math.cos(math.pi / 8), 0.0, 0.0, math.sin(math.pi / 8)])
        assert np.allclose(mid.rotation, expected, atol=1e-6)
        assert mid.almost_equal(VirtualTrajectory(start, end, 3).midpoint(), 1e-12)

    def test_corrections_compose_on_left(self):
        corrections = torch.zeros((1, 6), dtype=DTYPE)
        corrections[0, 3] = 0.25
        pose = SE3Pose.from_translation(1.0, 0.0, 0.0)
        out = interpolate_subframe_poses(VirtualTrajectory(pose, pose.copy(), 1, corrections))[0]
        assert np.allclose(out.translation, (1.25, 0.0, 0.0))

    def test_invalid_counts(self):
        with pytest.raises(BlurSplatError):
            VirtualTrajectory(SE3Pose(), SE3Pose(), 0)
        with pytest.raises(BlurSplatError):
            VirtualTrajectory(SE3Pose(), SE3Pose(), 2, torch.zeros((3, 6)))


class TestComposeSubframes:
    def test_single_subframe_is_render(self, cam8, rng):
        scene = random_scene(rng, 4)
        pose = small_pose(rng)
        color, depth = compose_subframe_blur(scene, cam8, VirtualTrajectory.static(pose, 1),
                                             [proposal(3, 8, 8, mask=-BIG)], ExposureParams())
        out = render(scene, cam8, pose)
        assert torch.allclose(color, out.color, atol=1e-12)
        assert torch.allclose(depth, out.depth, atol=1e-12)

    def test_identical_subframes(self, cam8, rng):
        scene = random_scene(rng, 4)
        pose = small_pose(rng)
        bp = proposal(3, 8, 8)
        e = ExposureParams(0.1, 0.02)
        color, depth = compose_subframe_blur(scene, cam8, VirtualTrajectory.static(pose, 3), [bp] * 3, e)
        single, single_depth = compose_subframe_blur(scene, cam8, VirtualTrajectory.static(pose, 1), [bp], e)
        assert torch.allclose(color, single, atol=1e-12)
        assert torch.allclose(depth, single_depth, atol=1e-12)

    def test_straight_line_oracle(self, cam8, rng):
        scene = random_scene(rng, 5)
        vt = VirtualTrajectory(small_pose(rng, 0.05), small_pose(rng, 0.05), 3,
                               torch.as_tensor(rng.normal(scale=0.01, size=(3, 6))))
        bps = [proposal(3, 8, 8, mask=float(rng.normal())) for _ in range(3)]
        e = ExposureParams(0.2, -0.01)
        color, depth = compose_subframe_blur(scene, cam8, vt, bps, e, force_mask=False)
        expected_color = np.zeros((8, 8, 3))
        expected_depth = np.zeros((8, 8))
        for pose, bp in zip(interpolate_subframe_poses(vt), bps):
            out = render(scene, cam8, pose)
            expected_color += apply_blur_proposal(apply_exposure(out.color, e), out.depth, bp).numpy()
            expected_depth += apply_blur_proposal(out.depth, out.depth, bp).numpy()
        assert np.allclose(color.numpy(), expected_color / 3, atol=1e-10)
        assert np.allclose(depth.numpy(), expected_depth / 3, atol=1e-10)

    def test_proposal_count_mismatch(self, cam8, rng):
        with pytest.raises(BlurSplatError) as exc_info:
            compose_subframe_blur(random_scene(rng, 2), cam8, VirtualTrajectory.static(SE3Pose(), 3),
                                  [proposal(3, 8, 8)], ExposureParams())
        assert exc_info.value.error['msg_key'] == 'errorMsgProposalCountMismatch'

    def test_correction_gradients(self, cam8, rng):
        scene = random_scene(rng, 4, spread=0.2, scale=(0.15, 0.3))
        start, end = small_pose(rng, 0.03), small_pose(rng, 0.03)
        bps = [proposal(3, 8, 8) for _ in range(2)]
        upstream = torch.as_tensor(rng.normal(size=(8, 8, 3)))

        def objective(corrections):
            vt = VirtualTrajectory(start, end, 2, corrections)
            color, depth = compose_subframe_blur(scene, cam8, vt, bps, ExposureParams(), force_mask=False)
            return (color * upstream).sum() + depth.sum()

        corrections = torch.zeros((2, 6), dtype=DTYPE, requires_grad=True)
        grad, = torch.autograd.grad(objective(corrections), corrections)
        h = 1e-5
        for index in np.ndindex(2, 6):
            plus = torch.zeros((2, 6), dtype=DTYPE)
            plus[index] = h
            fd = (objective(plus) - objective(-plus)).item() / (2 * h)
            g = grad[index].item()
            assert abs(fd - g) <= 1e-3 * abs(g) + 1e-7

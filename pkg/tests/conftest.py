import numpy as np
import pytest

from blursplat.enums import *
from blursplat.lie import SE3Pose
from blursplat.scene import Gaussian3D, GaussianScene
from blursplat.structs import Camera, Image


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def cam8():
    return Camera(8.0, 8.0, 3.5, 3.5, 8, 8)


@pytest.fixture
def cam16():
    return Camera(16.0, 16.0, 7.5, 7.5, 16, 16)


def random_scene(rng, count, spread=0.4, depth=(2.0, 3.0), scale=(0.08, 0.2)):
    """Gaussians in front of an identity camera, all projecting into a small view."""
    gaussians = []
    for _ in range(count):
        z = rng.uniform(*depth)
        mean = (rng.uniform(-spread, spread), rng.uniform(-spread, spread), z)
        q = rng.normal(size=4)
        gaussians.append(Gaussian3D(mean, q / np.linalg.norm(q), rng.uniform(*scale, size=3),
                                    rng.uniform(0.2, 0.9), rng.uniform(0.1, 0.9, size=3)))
    return GaussianScene.from_gaussians(gaussians)


def random_srgb(rng, height, width, channels=3):
    return Image(rng.uniform(0.0, 1.0, size=(height, width, channels)), ColorSpace.srgb_encoded)


def small_pose(rng, magnitude=0.02):
    return SE3Pose.exp(rng.normal(scale=magnitude, size=6))

import os
import sys

# 添加项目根目录到 Python 路径
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
import pytest

from pose.anatomy import build_prior, load_topology
from pose.harness import CorruptionSpec, PoseSampler, build_scene, corrupt_observations, gen_poses, gen_rig
from pose.harness.scene import look_at, make_camera

TRAINING_POSES = 10000
PRIOR_DIMS = {0: 25, 1: 20, 2: 15}
PRIOR_LAMBDAS = {0: 8000.0, 1: 4000.0, 2: 4000.0}


def random_camera(rng: np.random.Generator, cam_id: int = 0, distance: float = 4000.0):
    """朝向原点附近、带随机焦距的相机"""
    azimuth = rng.uniform(-np.pi, np.pi)
    center = np.array([distance * np.cos(azimuth), distance * np.sin(azimuth), rng.uniform(500.0, 2500.0)])
    target = rng.normal(0.0, 100.0, 3)
    return make_camera(cam_id, rng.uniform(200.0, 300.0), look_at(center, target), center, (256, 256))


@pytest.fixture(scope="session")
def topology():
    return load_topology()


@pytest.fixture(scope="session")
def sampler(topology):
    return PoseSampler(topology)


@pytest.fixture(scope="session")
def rig():
    return gen_rig(4, 4000.0, (800.0, 2200.0), (256, 256), seed=0)


@pytest.fixture(scope="session")
def training_poses(sampler):
    """与测试姿态不同子流的训练集"""
    return gen_poses(sampler, TRAINING_POSES, seed=0, index=1)


@pytest.fixture(scope="session")
def prior(training_poses, topology):
    return build_prior(training_poses, topology, PRIOR_DIMS, PRIOR_LAMBDAS)


@pytest.fixture(scope="session")
def small_scene(rig, sampler):
    poses = gen_poses(sampler, 20, seed=3)
    return build_scene(rig, poses, seed=3)


@pytest.fixture(scope="session")
def noisy_observations(small_scene):
    return corrupt_observations(small_scene, CorruptionSpec(sigma=2.0, outlier_rate=0.1, occlusion_rate=0.15, seed=3))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

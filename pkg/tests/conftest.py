import numpy as np
import pytest

from ctgi import SuperPixelGeometry, Video, build_hadamard_basis
from ctgi.scene import simulate_exposure


def random_scene(n: int, K: int, seed: int) -> Video:
    rng = np.random.default_rng(seed)
    return Video(rng.random((K, n, n)))


@pytest.fixture(scope="session")
def desk_geometry() -> SuperPixelGeometry:
    return SuperPixelGeometry.from_block(4, 8)


@pytest.fixture(scope="session")
def desk_basis(desk_geometry):
    return build_hadamard_basis(desk_geometry)


@pytest.fixture(scope="session")
def desk_scene() -> Video:
    return random_scene(8, 16, seed=42)


@pytest.fixture(scope="session")
def desk_exposure(desk_scene, desk_basis):
    return simulate_exposure(desk_scene, desk_basis)

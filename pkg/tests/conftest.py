import numpy as np
import pytest

from tangent_plane_llg import (assemble_mass, assemble_stiffness,
                               generate_structured_cube)

UNIT_BOUNDS = [[0, 1], [0, 1], [0, 1]]


@pytest.fixture(scope="session")
def cube1():
    return generate_structured_cube(UNIT_BOUNDS, (1, 1, 1))


@pytest.fixture(scope="session")
def cube2():
    """27-node structured cube used throughout the oracle tests."""
    return generate_structured_cube(UNIT_BOUNDS, (2, 2, 2))


@pytest.fixture(scope="session")
def cube2_matrices(cube2):
    return assemble_mass(cube2), assemble_stiffness(cube2)


def random_unit_field(n, seed=0):
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((n, 3))
    return m / np.linalg.norm(m, axis=1)[:, None]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

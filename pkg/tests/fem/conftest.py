import numpy as np
import pytest

from hho_afem.afem.benchmarks import lshape_mesh, square_mesh
from hho_afem.fem.mesh import build_mesh, uniform_refine
from hho_afem.model.density import plaplace


@pytest.fixture(scope="function")
def reference_mesh():
    return build_mesh([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [[0, 1, 2]])


@pytest.fixture(scope="function")
def square():
    return square_mesh()


@pytest.fixture(scope="function")
def fine_square():
    return uniform_refine(square_mesh())


@pytest.fixture(scope="function")
def lshape():
    return lshape_mesh()


@pytest.fixture(scope="function")
def skewed_mesh():
    # two non-similar triangles with a flipped shared side
    return build_mesh(
        [[0.0, 0.0], [1.3, 0.2], [0.4, 1.1], [1.6, 1.4]],
        [[0, 1, 2], [2, 1, 3]],
    )


@pytest.fixture(scope="function")
def quadratic_density():
    return plaplace(2.0)


@pytest.fixture(scope="function")
def quartic_density():
    return plaplace(4.0)


@pytest.fixture(scope="function")
def rng():
    return np.random.default_rng(1234)

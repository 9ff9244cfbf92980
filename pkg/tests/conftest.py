import numpy as np
import pytest

from morphopt import deform, fem
from morphopt.mesh import Circle, generate_annulus, generate_rectangle


@pytest.fixture(scope="session")
def annulus():
    return generate_annulus((0.04, 0.05), 0.5, ((-1, -1), (1, 1)), 16, 4)


@pytest.fixture(scope="session")
def rectangle():
    return generate_rectangle(((0.0, 0.0), (2.0, 1.0)), 8, 4, None)


@pytest.fixture(scope="session")
def guess_circle():
    return Circle((0.04, 0.05), 0.5)


def identity_deformation(mesh, degree=1):
    return deform.init_deformation(fem.FeSpace(mesh, degree, 2), {})


def fd_pairing(problem, deformation, interp, dt, s=5e-4):
    """Central-difference directional derivative of the objective."""
    up = problem.evaluate(deform.apply_update(deformation, interp, dt, s))
    dn = problem.evaluate(deform.apply_update(deformation, interp, dt, -s))
    return (up.objective - dn.objective) / (2 * s)


def rng_direction(setup, seed):
    rng = np.random.default_rng(seed)
    dt = rng.standard_normal(setup.spline_space.dim)
    return dt / np.sqrt(dt @ (setup.gram @ dt))

import numpy as np
import pytest

from opcalc import hodge, symbols, torus


@pytest.fixture(scope="session")
def dirac_pair():
    return symbols.dirac_pair_1d()


@pytest.fixture(scope="session")
def grad_div_pair():
    return symbols.grad_div_pair_2d()


@pytest.fixture(scope="session")
def grid64():
    return torus.TorusGrid(1, 64)


@pytest.fixture(scope="session")
def grid16():
    return torus.TorusGrid(1, 16)


def random_matrix(n, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    return scale * (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))


def diagonalizable_matrix(n, seed, *, mod_range=(0.5, 2.0), angle=np.pi / 4):
    """Random diagonalizable matrix with spectrum inside the bisector of the
    given half-angle intersected with the annulus mod_range."""
    rng = np.random.default_rng(seed)
    mods = rng.uniform(*mod_range, n)
    angs = rng.uniform(-angle, angle, n) + rng.choice([0.0, np.pi], n)
    lam = mods * np.exp(1j * angs)
    v = np.eye(n) + 0.3 * (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))
    return v @ np.diag(lam) @ np.linalg.inv(v), lam, v


def diagonal_coefficients(grid, big_n, eps, seed):
    return hodge.CoefficientPair(
        hodge.perturbed_identity(grid, big_n, eps, seed, diagonal=True),
        hodge.perturbed_identity(grid, big_n, eps, seed + 1, diagonal=True),
    )


def rel_err(a, b):
    na = np.linalg.norm(np.asarray(a) - np.asarray(b))
    return na / max(np.linalg.norm(np.asarray(b)), 1e-300)

import math

import numpy as np
import pytest

from blochopt.bandlimited import make_grid, random_hermitian, gauss
from blochopt.cell_spectral import PeriodicCoefficient, PlaneWaveTruncation
from blochopt.oracle import (
    TorusGrid, cross_check, default_torus, fd_operator, fd_state_solve, refinement_study,
)


def test_constant_cosine_rhs():
    errs = []
    for N in (256, 512):
        g = TorusGrid(4.0, N)
        x = g.points()[:, 0]
        eta0 = 3 / 4.0
        rhs = np.cos(2 * np.pi * eta0 * x)
        y = fd_state_solve(PeriodicCoefficient.constant(1.0), 0.0625, rhs, g).samples
        errs.append(np.abs(y - rhs / (1 + 4 * np.pi ** 2 * eta0 ** 2)).max())
    assert errs[1] < 1e-4
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


def test_zero_rhs(cosine):
    g = TorusGrid(1.0, 512)
    assert np.all(fd_state_solve(cosine, 0.125, np.zeros(512), g).samples == 0)


def test_energy_identity(cosine, rng):
    g = TorusGrid(1.0, 1024)
    rhs = rng.standard_normal(1024)
    y = fd_state_solve(cosine, 0.125, rhs, g).samples
    mat, _ = fd_operator(cosine, 0.125, g)
    assert y @ (mat @ y) == pytest.approx(rhs @ y, rel=1e-10)


def test_maximum_principle(cosine, rng):
    g = TorusGrid(1.0, 1024)
    rhs = rng.uniform(-1, 1, 1024)
    y = fd_state_solve(cosine, 0.125, rhs, g).samples
    assert np.abs(y).max() <= np.abs(rhs).max()


def test_torus_checks(cosine):
    with pytest.raises(ValueError):
        fd_state_solve(cosine, 0.3, np.zeros(512), TorusGrid(1.0, 512))     # incommensurate
    with pytest.raises(ValueError):
        fd_state_solve(cosine, 0.125, np.zeros(256), TorusGrid(1.0, 256))   # under-resolved cells
    with pytest.raises(ValueError):
        fd_state_solve(cosine, 0.125, np.ones(512) * 1j, TorusGrid(1.0, 512))


def test_cross_check_constant(grid, unit, rng):
    u, f = random_hermitian(grid, rng), random_hermitian(grid, rng)
    assert cross_check(unit, 0.125, u, f) <= 1e-6


def test_cross_check_cancellation(grid, cosine, rng):
    f = random_hermitian(grid, rng)
    assert cross_check(cosine, 0.125, -f, f) == 0.0


def test_refinement_slope(grid, cosine, rng):
    f = gauss(grid, 0.5, 0.6)
    u = random_hermitian(grid, rng, 0.2)
    rows, slope = refinement_study(cosine, 0.125, u, f, [4096, 8192, 16384])
    assert slope >= 1.9
    assert rows[0][1] > rows[1][1] > rows[2][1]


def test_default_torus(grid):
    t = default_torus(grid, 0.125)
    assert t.per_axis == 65536 and t.length == 8.0
    t.check(0.125)


def test_two_dimensional_anisotropic_constant():
    A = PeriodicCoefficient.constant(np.array([[1.5, 0.4], [0.4, 1.0]]), 2)
    k = np.array([1.0, -2.0])           # wave vector in units of 1/L
    L = 2.0
    errs = []
    for N in (64, 128):
        g = TorusGrid(L, N, 2)
        x = g.points()
        rhs = np.cos(2 * np.pi * x @ k / L)
        y = fd_state_solve(A, 0.03125, rhs, g).samples
        q = 2 * np.pi * k / L
        errs.append(np.abs(y - rhs / (1 + q @ A.mean @ q)).max())
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)


def test_two_dimensional_cross_check(rng):
    # coarse cells (8 points) keep the sparse LU small
    A = PeriodicCoefficient.cosine(mean=3.0, dimension=2)
    g = make_grid([1.0, 1.0], 0.5, [0.25])
    f = random_hermitian(g, rng)
    d = [cross_check(A, 0.25, f * 0.1, f, TorusGrid(2.0, N, 2, min_cell=8), PlaneWaveTruncation(4))
         for N in (64, 128)]
    assert d[1] < d[0] and math.log2(d[0] / d[1]) > 1.8

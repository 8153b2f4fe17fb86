"""Real-space finite-difference check of the Bloch-space state.

The state equation -div(A(x/eps) grad y) + y = r is discretised in flux form
with coefficients sampled at cell faces on the commensurate torus [0, L)^n,
and compared with the adapted Bloch synthesis of rho * (f + u).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from . import _kernels
from .bandlimited import adaption_synthesize, torus_norm
from .control import exact_bloch, state_map

MIN_CELL_RESOLUTION = 64


class FDSolveError(RuntimeError):
    pass


@dataclass(frozen=True)
class TorusGrid:
    length: float
    per_axis: int
    dimension: int = 1
    min_cell: int = MIN_CELL_RESOLUTION     # required points per eps-cell

    @property
    def h(self):
        return self.length / self.per_axis

    def points(self):
        axes = [np.arange(self.per_axis) * self.h] * self.dimension
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def check(self, eps, oscillating=True):
        ratio = self.length / eps
        if abs(ratio - round(ratio)) > 1e-9 * ratio:
            raise ValueError(f"torus length {self.length:g} is not a multiple of eps={eps:g}")
        if oscillating and eps / self.h < self.min_cell * (1 - 1e-12):
            raise ValueError(f"mesh does not resolve the microstructure: eps/h={eps / self.h:.1f} < {self.min_cell}")


def default_torus(grid, eps):
    """Power-of-two mesh meeting eps/h >= 64 and, in 1D, 2 pi kappa h <= 3e-3."""
    n = grid.dimension
    L = grid.length
    need = max(2 ** 12 // n, MIN_CELL_RESOLUTION * L / eps)
    if n == 1:
        need = max(need, 2 * math.pi * max(grid.box.half_widths) * L / 3e-3)
    return TorusGrid(L, 1 << int(math.ceil(math.log2(need - 1e-9))), n)


@dataclass(frozen=True)
class FDState:
    samples: np.ndarray
    residual: float
    grid: TorusGrid


def _operator_2d(A, eps, grid):
    N, h = grid.per_axis, grid.h
    idx = np.arange(N * N).reshape(N, N)
    x = np.arange(N) * h
    X, Y = np.meshgrid(x, x, indexing="ij")

    def coef(px, py):
        return A.evaluate(np.column_stack([px.ravel(), py.ravel()]) / eps).reshape(N, N, 2, 2)

    ax = coef(X + h / 2, Y)[..., 0, 0]        # east faces
    ay = coef(X, Y + h / 2)[..., 1, 1]        # north faces
    axy = coef(X, Y)[..., 0, 1]               # nodes
    east, west = np.roll(idx, -1, 0), np.roll(idx, 1, 0)
    north, south = np.roll(idx, -1, 1), np.roll(idx, 1, 1)
    ax_w, ay_s = np.roll(ax, 1, 0), np.roll(ay, 1, 1)
    rows, cols, vals = [], [], []

    def add(r, c, v):
        rows.append(r.ravel()), cols.append(c.ravel()), vals.append(np.broadcast_to(v, r.shape).ravel())

    add(idx, idx, 1.0 + (ax + ax_w + ay + ay_s) / h ** 2)
    add(idx, east, -ax / h ** 2)
    add(idx, west, -ax_w / h ** 2)
    add(idx, north, -ay / h ** 2)
    add(idx, south, -ay_s / h ** 2)
    if np.any(axy != 0):
        # -D0x(a12 D0y y) - D0y(a12 D0x y); D0 is skew so the sum is symmetric.
        c = 1.0 / (4 * h * h)
        for sx, sy, sign in ((1, 1, -1), (1, -1, 1), (-1, 1, 1), (-1, -1, -1)):
            tgt = np.roll(np.roll(idx, -sx, 0), -sy, 1)
            a_from_x = np.roll(axy, -sx, 0)
            a_from_y = np.roll(axy, -sy, 1)
            add(idx, tgt, sign * c * (a_from_x + a_from_y))
    mat = scipy.sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                  shape=(N * N, N * N))
    return mat, bool(np.all(axy == 0))


def fd_operator(A, eps, grid):
    """Sparse flux-form matrix of -div(A(x/eps) grad .) + 1 on the torus."""
    if grid.dimension == 1:
        N, h = grid.per_axis, grid.h
        faces = A.evaluate(((np.arange(N) + 0.5) * h / eps)[:, None])[:, 0, 0]
        left = np.roll(faces, 1)
        diag = 1.0 + (faces + left) / h ** 2
        mat = scipy.sparse.diags([diag, -faces[:-1] / h ** 2, -faces[:-1] / h ** 2], [0, 1, -1], format="lil")
        mat[0, N - 1] = -faces[-1] / h ** 2
        mat[N - 1, 0] = -faces[-1] / h ** 2
        return mat.tocsr(), True
    if grid.dimension == 2:
        return _operator_2d(A, eps, grid)
    raise ValueError("finite-difference oracle supports n = 1 and n = 2")


def fd_state_solve(A, eps, rhs, grid, rtol=1e-10):
    grid.check(eps, oscillating=not A.is_constant)
    rhs = np.asarray(rhs)
    if np.iscomplexobj(rhs):
        if np.abs(rhs.imag).max(initial=0.0) > 1e-9 * max(np.abs(rhs).max(), 1e-300):
            raise ValueError("right-hand side must be real")
        rhs = rhs.real
    rhs = rhs.astype(float).ravel()
    mat, m_matrix = fd_operator(A, eps, grid)
    if grid.dimension == 1:
        N, h = grid.per_axis, grid.h
        faces = A.evaluate(((np.arange(N) + 0.5) * h / eps)[:, None])[:, 0, 0]
        left = np.roll(faces, 1)
        bands = (-left / h ** 2, 1.0 + (faces + left) / h ** 2, -faces / h ** 2)

        def direct(b):
            return _kernels.cyclic_tridiag_solve(*bands, b)
    else:
        lu = scipy.sparse.linalg.splu(mat.tocsc())
        direct = lu.solve
    y = direct(rhs)
    anorm = float(abs(mat).sum(axis=1).max())

    def backward_error(y):
        # normwise backward error; the plain relative residual floors near cond * ulp
        denom = anorm * np.linalg.norm(y) + np.linalg.norm(rhs)
        return float(np.linalg.norm(rhs - mat @ y) / denom) if denom > 0 else 0.0

    res = backward_error(y)
    for _ in range(3):
        if res <= 0.01 * rtol:
            break
        y = y + direct(rhs - mat @ y)   # iterative refinement
        res = backward_error(y)
    if res > rtol:
        raise FDSolveError(f"finite-difference residual {res:.2e} above {rtol:.0e}")
    if m_matrix and np.abs(y).max(initial=0.0) > 1.01 * np.abs(rhs).max(initial=0.0):
        raise FDSolveError("discrete maximum principle violated")
    return FDState(y, res, grid)


def bloch_state_samples(A, eps, u, f, torus, trunc=None):
    model = exact_bloch(A, eps, u.grid, trunc)
    y = state_map(model, u, f)
    return adaption_synthesize(y, A, eps, torus.points(), trunc)


def cross_check(A, eps, u, f, torus=None, trunc=None):
    """Relative L^2 gap between the FD torus solve and the Bloch-synthesised state."""
    grid = u.grid
    if torus is None:
        torus = default_torus(grid, eps)
    pts = torus.points()
    rhs = adaption_synthesize(f + u, A, eps, pts, trunc)
    ref = bloch_state_samples(A, eps, u, f, torus, trunc)
    ref_norm = torus_norm(ref, torus.length, torus.per_axis, torus.dimension)
    if ref_norm == 0.0 and np.abs(rhs).max(initial=0.0) == 0.0:
        return 0.0
    fd = fd_state_solve(A, eps, rhs, torus)
    gap = torus_norm(fd.samples - ref, torus.length, torus.per_axis, torus.dimension)
    return gap / ref_norm


def refinement_study(A, eps, u, f, per_axis_list, trunc=None, min_cell=MIN_CELL_RESOLUTION):
    """(h, discrepancy) pairs over the given meshes and the fitted log-log slope."""
    rows = []
    for n_pts in per_axis_list:
        torus = TorusGrid(u.grid.length, int(n_pts), u.grid.dimension, min_cell)
        rows.append((torus.h, cross_check(A, eps, u, f, torus, trunc)))
    hs, ds = np.array(rows).T
    slope = float(np.polyfit(np.log(hs), np.log(ds), 1)[0]) if len(rows) > 1 else math.nan
    return rows, slope

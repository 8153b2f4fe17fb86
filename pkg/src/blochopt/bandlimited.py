"""Band-limited functions on a symmetric frequency grid, and their synthesis.

Functions are stored by their coefficients u_hat(eta_j) on the grid
eta_j = j * d_eta inside a compact box K.  With weight w = d_eta^n the
synthesis

    u(x) = w * sum_j u_hat(eta_j) exp(2 pi i eta_j . x)

is an L-periodic function (L = 1/d_eta) and the discrete Parseval norm
sqrt(w * sum |u_hat|^2) is its L^2 norm over one period box.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .cell_spectral import lowest_eigenpair
from .effective import CompactBox


class GridError(ValueError):
    """Raised for incommensurate (eps, d_eta) pairs or eps too large for K."""


@dataclass(frozen=True, eq=False)
class SpectralGrid:
    box: CompactBox
    d_eta: float
    index: np.ndarray = field(repr=False)          # (J, n) integer multi-indices
    n_per: dict = field(default_factory=dict)      # eps -> periods of length eps per box side

    @property
    def dimension(self):
        return self.box.dimension

    @property
    def nodes(self):
        return self.index * self.d_eta

    @property
    def size(self):
        return self.index.shape[0]

    @property
    def weight(self):
        return self.d_eta ** self.dimension

    @property
    def length(self):
        return 1.0 / self.d_eta

    @property
    def negation(self):
        """Permutation mapping node j to the node at -eta_j."""
        return np.arange(self.size)[::-1]

    def check_eps(self, eps):
        """Number of cell periods per box side for ``eps``; raises if unusable."""
        kmax = max(self.box.half_widths)
        if not kmax < 0.5 / eps:
            raise GridError(f"K is not contained in Z/eps = [-{0.5 / eps:g}, {0.5 / eps:g}) for eps={eps}")
        ratio = self.length / eps
        n_per = round(ratio)
        if n_per < 1 or abs(ratio - n_per) > 1e-9 * ratio:
            raise GridError(f"box length L={self.length:g} is not a multiple of eps={eps:g}")
        return int(n_per)

    def torus_points(self, per_axis):
        """Uniform real-space grid on [0, L)^n with ``per_axis`` points per side, shape (N, n)."""
        axes = [np.arange(per_axis) * (self.length / per_axis)] * self.dimension
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)


def make_grid(K, d_eta, eps_list=()):
    """Symmetric grid {j d_eta} inside ``K``; validates every eps in ``eps_list``."""
    if not isinstance(K, CompactBox):
        K = CompactBox(K)
    if d_eta <= 0:
        raise ValueError("d_eta must be positive")
    axes = []
    for kappa in K.half_widths:
        m = int(math.floor(kappa / d_eta + 1e-9))
        axes.append(np.arange(-m, m + 1))
    mesh = np.meshgrid(*axes, indexing="ij")
    index = np.stack([g.ravel() for g in mesh], axis=-1)
    grid = SpectralGrid(K, float(d_eta), index)
    for eps in eps_list:
        grid.n_per[float(eps)] = grid.check_eps(eps)
    return grid


@dataclass(frozen=True, eq=False)
class SpectralFunction:
    grid: SpectralGrid
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex).reshape(-1)
        if c.shape[0] != self.grid.size:
            raise ValueError(f"expected {self.grid.size} coefficients, got {c.shape[0]}")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.size, complex))

    def _other(self, other):
        if isinstance(other, SpectralFunction):
            if other.grid is not self.grid:
                raise ValueError("spectral functions live on different grids")
            return other.coeffs
        return other

    def __add__(self, other):
        return SpectralFunction(self.grid, self.coeffs + self._other(other))

    def __sub__(self, other):
        return SpectralFunction(self.grid, self.coeffs - self._other(other))

    def __mul__(self, other):
        return SpectralFunction(self.grid, self.coeffs * self._other(other))

    __rmul__ = __mul__

    def __neg__(self):
        return SpectralFunction(self.grid, -self.coeffs)

    def hermitian_defect(self):
        return float(np.abs(self.coeffs - np.conj(self.coeffs[self.grid.negation])).max(initial=0.0))

    def is_hermitian(self, tol=1e-12):
        scale = max(np.abs(self.coeffs).max(initial=0.0), 1.0)
        return self.hermitian_defect() <= tol * scale

    def symmetrized(self):
        """Average u_hat(eta) with conj(u_hat(-eta)) so the synthesis is real."""
        c = 0.5 * (self.coeffs + np.conj(self.coeffs[self.grid.negation]))
        return SpectralFunction(self.grid, c)

    def inner(self, other):
        """Real L^2 inner product w * sum Re[u conj(v)]."""
        return float(self.grid.weight * np.sum((self.coeffs * np.conj(self._other(other))).real))

    def norm(self):
        return parseval_norm(self)


def parseval_norm(u):
    return float(math.sqrt(u.grid.weight * np.sum(np.abs(u.coeffs) ** 2)))


# data profiles -------------------------------------------------------------

def gauss(grid, center, width, amp=1.0):
    """Gaussian bump amp * exp(-|eta - center|^2 / (2 width^2)) truncated to K, symmetrised."""
    center = np.broadcast_to(np.asarray(center, float), (grid.dimension,))
    r2 = np.sum((grid.nodes - center) ** 2, axis=1)
    return SpectralFunction(grid, amp * np.exp(-r2 / (2 * width ** 2))).symmetrized()


def mode(grid, eta0, amp=1.0):
    """Single mode at the node nearest ``eta0``, symmetrised with its mirror."""
    eta0 = np.broadcast_to(np.asarray(eta0, float), (grid.dimension,))
    j = int(np.argmin(np.sum((grid.nodes - eta0) ** 2, axis=1)))
    c = np.zeros(grid.size, complex)
    c[j] = amp
    return SpectralFunction(grid, c).symmetrized()


def table(grid, rows):
    """Explicit (eta..., re, im) rows; unmatched nodes are zero."""
    c = np.zeros(grid.size, complex)
    n = grid.dimension
    for row in rows:
        row = list(np.ravel(row))
        eta = np.asarray(row[:n], float)
        j = np.flatnonzero(np.all(np.abs(grid.nodes - eta) < 1e-9, axis=1))
        if j.size != 1:
            raise ValueError(f"table entry at eta={eta.tolist()} is not a grid node")
        c[j[0]] += complex(row[n], row[n + 1] if len(row) > n + 1 else 0.0)
    return SpectralFunction(grid, c).symmetrized()


def random_hermitian(grid, rng, scale=1.0):
    c = rng.standard_normal(grid.size) + 1j * rng.standard_normal(grid.size)
    return SpectralFunction(grid, scale * c).symmetrized()


# synthesis -----------------------------------------------------------------

def _points(x, n):
    x = np.asarray(x, float)
    return x.reshape(-1, n)


def synthesize(u, x):
    """Plain Fourier synthesis w * sum_j u_hat_j exp(2 pi i eta_j . x)."""
    g = u.grid
    pts = _points(x, g.dimension)
    coeffs = np.ones((g.size, 1), complex)
    kidx = np.zeros((1, g.dimension), np.int64)
    return _kernels.bloch_synthesis(pts, g.nodes, u.coeffs, coeffs, kidx, 1.0, g.weight)


def bloch_coefficients(A, eps, grid, trunc=None):
    """Plane-wave coefficients of Phi_0(.; eps * eta_j) for every node, plus their indices."""
    grid.check_eps(eps)
    pairs = [lowest_eigenpair(A, eps * eta, trunc) for eta in grid.nodes]
    return np.stack([p.coefficients for p in pairs]), pairs[0].indices


def adaption_synthesize(u, A, eps, x, trunc=None):
    """Adapted field w * sum_j u_hat_j Phi_0(x/eps; eps eta_j) exp(2 pi i eta_j . x)."""
    g = u.grid
    if A.dimension != g.dimension:
        raise ValueError("coefficient and grid dimensions differ")
    coeffs, kidx = bloch_coefficients(A, eps, g, trunc)
    pts = _points(x, g.dimension)
    return _kernels.bloch_synthesis(pts, g.nodes, u.coeffs, coeffs, kidx, 1.0 / eps, g.weight)


def torus_norm(samples, length, per_axis, dimension):
    """Trapezoidal L^2 norm over [0, L)^n of uniform periodic samples."""
    cell = (length / per_axis) ** dimension
    return float(math.sqrt(cell * np.sum(np.abs(samples) ** 2)))

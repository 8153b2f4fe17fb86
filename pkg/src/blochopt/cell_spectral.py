"""Plane-wave Galerkin solver for the shifted cell eigenvalue problem.

For a Y-periodic symmetric elliptic matrix field ``A`` and quasimomentum
``eta`` in the Brillouin zone Z = [-1/2, 1/2)^n, the shifted operator

    L(eta) = -(grad + 2 pi i eta) . A (grad + 2 pi i eta)

acting on Y-periodic functions is discretised in the basis exp(2 pi i k.y),
|k|_inf <= N.  Its lowest eigenvalue is the first Bloch band lambda_0(eta).
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

log = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
DENSE_LIMIT = 1025
DEFAULT_NPW = {1: 32, 2: 12}
NPW_CAP = {1: 128, 2: 24}


class EigenSolverError(RuntimeError):
    """Raised when the eigen-solve fails or its residual exceeds tolerance."""


def _as_matrix(value, n):
    arr = np.asarray(value, dtype=complex)
    if arr.ndim == 0:
        return arr * np.eye(n)
    if arr.shape != (n, n):
        raise ValueError(f"coefficient block must be scalar or {n}x{n}, got shape {arr.shape}")
    return arr


def multi_indices(N, n):
    """All integer multi-indices with |k|_inf <= N, in C order (last axis fastest)."""
    rng = np.arange(-N, N + 1)
    return np.array(list(itertools.product(rng, repeat=n)), dtype=np.int64).reshape(-1, n)


class PeriodicCoefficient:
    """A real symmetric Y-periodic coefficient field.

    Build instances with :meth:`from_fourier`, :meth:`laminate` or
    :meth:`constant`.  Instances hash by identity so they can key caches.
    """

    def __init__(self, dimension, *, fourier=None, breakpoints=None, values=None,
                 ellipticity=None, check_grid=256):
        self.dimension = int(dimension)
        if self.dimension < 1:
            raise ValueError("dimension must be positive")
        self.kind = "fourier" if fourier is not None else "laminate"
        self._fourier = None
        self.breakpoints = None
        self.values = None
        if fourier is not None:
            coeffs = {}
            for k, v in fourier.items():
                k = tuple(int(c) for c in np.atleast_1d(k))
                if len(k) != self.dimension:
                    raise ValueError(f"multi-index {k} does not match dimension {self.dimension}")
                coeffs[k] = coeffs.get(k, 0) + _as_matrix(v, self.dimension)
            zero = (0,) * self.dimension
            coeffs.setdefault(zero, np.zeros((self.dimension, self.dimension), complex))
            self._fourier = {k: v for k, v in coeffs.items() if k == zero or np.any(v != 0)}
            self._check_fourier_symmetry()
        else:
            if self.dimension != 1:
                raise ValueError("laminate coefficients are one-dimensional")
            b = np.asarray(breakpoints, dtype=float)
            a = np.asarray(values, dtype=float)
            if b.shape != a.shape or b.ndim != 1 or b.size == 0:
                raise ValueError("breakpoints and values must be 1D arrays of equal length")
            if np.any(b < 0) or np.any(b >= 1) or np.any(np.diff(b) <= 0):
                raise ValueError("breakpoints must be strictly increasing in [0, 1)")
            if np.any(a <= 0):
                raise ValueError("laminate values must be positive")
            self.breakpoints, self.values = b, a
        floor = self._sampled_ellipticity(check_grid)
        if ellipticity is None:
            if floor <= 0:
                raise ValueError(f"coefficient is not uniformly elliptic (min eigenvalue {floor:.3e})")
            ellipticity = floor
        elif floor < ellipticity * (1 - 1e-12):
            raise ValueError(f"ellipticity floor {ellipticity} violated: sampled minimum {floor:.6g}")
        self.ellipticity = float(ellipticity)

    # construction helpers -------------------------------------------------

    @classmethod
    def from_fourier(cls, coeffs, dimension=None, ellipticity=None):
        """``coeffs`` maps integer multi-indices to scalars (times identity) or n x n blocks."""
        if dimension is None:
            dimension = len(np.atleast_1d(next(iter(coeffs))))
        return cls(dimension, fourier=coeffs, ellipticity=ellipticity)

    @classmethod
    def laminate(cls, breakpoints, values, ellipticity=None):
        return cls(1, breakpoints=breakpoints, values=values, ellipticity=ellipticity)

    @classmethod
    def constant(cls, value, dimension=1):
        return cls(dimension, fourier={(0,) * dimension: value})

    @classmethod
    def cosine(cls, mean=2.0, amplitude=1.0, dimension=1):
        """``mean + amplitude * sum_d cos(2 pi y_d)`` times the identity."""
        coeffs = {(0,) * dimension: mean}
        for d in range(dimension):
            for s in (1, -1):
                k = [0] * dimension
                k[d] = s
                coeffs[tuple(k)] = amplitude / 2
        return cls(dimension, fourier=coeffs)

    # properties -----------------------------------------------------------

    @property
    def bandwidth(self):
        """Largest |k|_inf with a nonzero Fourier block (infinite for laminates)."""
        if self._fourier is None:
            return np.inf
        return max(max(abs(c) for c in k) for k in self._fourier)

    @property
    def is_constant(self):
        if self._fourier is not None:
            return self.bandwidth == 0
        return bool(np.all(self.values == self.values[0]))

    @property
    def mean(self):
        """The k = 0 Fourier block, i.e. the cell average of A."""
        if self._fourier is not None:
            return self._fourier[(0,) * self.dimension].real.copy()
        widths = np.diff(np.append(self.breakpoints, self.breakpoints[0] + 1.0))
        return np.array([[np.dot(widths, self.values)]])

    def fourier_coefficient(self, k):
        """Analytic Fourier block A_hat(k)."""
        k = tuple(int(c) for c in np.atleast_1d(k))
        if self._fourier is not None:
            return self._fourier.get(k, np.zeros((self.dimension, self.dimension), complex))
        return np.array([[_piecewise_fourier(self.breakpoints, self.values, k[0])]])

    def _check_fourier_symmetry(self):
        for k, v in self._fourier.items():
            mk = tuple(-c for c in k)
            w = self._fourier.get(mk, np.zeros_like(v))
            if not np.allclose(w, np.conj(v), atol=1e-14, rtol=1e-12):
                raise ValueError(f"A_hat(-k) != conj(A_hat(k)) at k={k}: coefficient is not real")
            if not np.allclose(v.T, w, atol=1e-14, rtol=1e-12):
                raise ValueError(f"A_hat(k)^T != A_hat(-k) at k={k}: coefficient is not symmetric")

    def _sampled_ellipticity(self, m):
        grids = np.meshgrid(*([np.arange(m) / m] * self.dimension), indexing="ij")
        y = np.stack([g.ravel() for g in grids], axis=-1)
        vals = self.evaluate(y)
        return float(np.linalg.eigvalsh(vals).min())

    def evaluate(self, y):
        """A(y) at points ``y`` of shape (npts, n); returns (npts, n, n) real."""
        y = np.asarray(y, dtype=float).reshape(-1, self.dimension)
        if self._fourier is None:
            frac = np.mod(y[:, 0], 1.0)
            b = self.breakpoints
            idx = np.searchsorted(b, frac, side="right") - 1  # -1 wraps to the last piece
            return self.values[idx].reshape(-1, 1, 1)
        out = np.zeros((y.shape[0], self.dimension, self.dimension), complex)
        for k, v in self._fourier.items():
            out += np.exp(2j * np.pi * (y @ np.asarray(k, float)))[:, None, None] * v
        return out.real

    def operator_blocks(self, N):
        """Coefficient operator T[a, b] (shape n, n, P, P) on the truncated basis."""
        return _operator_blocks(self, int(N))

    def __repr__(self):
        if self._fourier is not None:
            return f"PeriodicCoefficient(n={self.dimension}, fourier terms={len(self._fourier)})"
        return f"PeriodicCoefficient(laminate, breakpoints={self.breakpoints.tolist()}, values={self.values.tolist()})"


def _piecewise_fourier(b, a, k):
    ends = np.append(b[1:], b[0] + 1.0)
    if k == 0:
        return complex(np.dot(a, ends - b))
    phase = np.exp(-2j * np.pi * k * ends) - np.exp(-2j * np.pi * k * b)
    return complex(np.dot(a, phase) / (-2j * np.pi * k))


@lru_cache(maxsize=64)
def _operator_blocks(A, N):
    n = A.dimension
    kidx = multi_indices(N, n)
    P = kidx.shape[0]
    diff = kidx[:, None, :] - kidx[None, :, :]
    if A.kind == "laminate":
        # Inverse rule: invert the Toeplitz matrix of 1/a instead of truncating a itself.
        # The flux a u' is continuous across interfaces, so this converges fast and
        # gives the harmonic mean exactly at eta = 0.
        d = diff[:, :, 0]
        span = np.arange(-2 * N, 2 * N + 1)
        inv_hat = np.array([_piecewise_fourier(A.breakpoints, 1.0 / A.values, int(m)) for m in span])
        toep = inv_hat[d + 2 * N]
        T = np.linalg.inv(toep)
        T = 0.5 * (T + T.conj().T)
        return T.reshape(1, 1, P, P), kidx
    T = np.zeros((n, n, P, P), complex)
    for k, v in A._fourier.items():
        mask = np.all(diff == np.asarray(k), axis=-1)
        if mask.any():
            T[:, :, mask] += v[:, :, None]
    return T, kidx


@dataclass(frozen=True)
class PlaneWaveTruncation:
    """Plane-wave basis |k|_inf <= N (matrix dimension (2N+1)^n)."""

    N: int

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("plane-wave half-bandwidth must be positive")

    def size(self, n):
        return (2 * self.N + 1) ** n

    def check(self, A):
        if np.isfinite(A.bandwidth) and self.N < 2 * A.bandwidth:
            raise ValueError(f"N_pw={self.N} < 2 * coefficient bandwidth {A.bandwidth}")


@dataclass(frozen=True)
class BlochEigenpair:
    eta: np.ndarray
    eigenvalue: float
    coefficients: np.ndarray
    indices: np.ndarray = field(repr=False)
    residual: float = 0.0

    def evaluate(self, y):
        """Periodic factor Phi_0(y; eta) at points ``y`` (npts, n)."""
        y = np.asarray(y, float).reshape(-1, self.indices.shape[1])
        return np.exp(2j * np.pi * (y @ self.indices.T.astype(float))) @ self.coefficients


@dataclass(frozen=True)
class BlochBand:
    grid: np.ndarray           # (J, n)
    eigenvalues: np.ndarray    # (J, m_max + 1)
    eigenvectors: tuple | None = None

    @property
    def lambda0(self):
        return self.eigenvalues[:, 0]


def _check_eta(A, eta):
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    if eta.shape != (A.dimension,):
        raise ValueError(f"quasimomentum of shape {eta.shape} does not match dimension {A.dimension}")
    if np.any(eta < -0.5) or np.any(eta >= 0.5):
        raise ValueError(f"quasimomentum {eta} outside the Brillouin zone [-1/2, 1/2)^n")
    return eta


def assemble_bloch_matrix(A, eta, trunc):
    """Galerkin matrix M_{k,k'} = (2 pi)^2 (k+eta) . A_hat(k-k') (k'+eta)."""
    eta = _check_eta(A, eta)
    trunc.check(A)
    T, kidx = A.operator_blocks(trunc.N)
    q = TWO_PI * (kidx + eta)
    M = np.einsum("ia,abij,jb->ij", q, T, q)
    scale = max(np.abs(M).max(), 1.0)
    if np.abs(M - M.conj().T).max() > 1e-12 * scale:
        raise ValueError("assembled Bloch matrix is not Hermitian; coefficient representation is inconsistent")
    return 0.5 * (M + M.conj().T)


def _fix_phase(v):
    zero = v.size // 2  # index of k = 0 in C-ordered symmetric indices
    ref = v[zero]
    if abs(ref) < 1e-8:
        nz = np.flatnonzero(np.abs(v) > 1e-8)
        ref = v[nz[0]]
    return v * (abs(ref) / ref)


def _rayleigh(T, kidx, eta, v):
    # lambda = sum_ab (q_a v)^H T_ab (q_b v); accurate relative to lambda, not to ||M||.
    qv = (TWO_PI * (kidx + eta)).T * v
    return float(np.einsum("ai,abij,bj->", qv.conj(), T, qv).real)


def lowest_eigenpair(A, eta, trunc=None, tol=1e-8):
    """Lowest Bloch eigenpair at ``eta`` (normalised, phase fixed)."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    eta = _check_eta(A, eta)
    if trunc is None:
        trunc = resolve_truncation(A)
    return _lowest_cached(A, tuple(eta.tolist()), trunc.N, float(tol))


@lru_cache(maxsize=200_000)
def _lowest_cached(A, eta_key, N, tol):
    eta = np.asarray(eta_key)
    trunc = PlaneWaveTruncation(N)
    M = assemble_bloch_matrix(A, eta, trunc)
    T, kidx = A.operator_blocks(N)
    P = M.shape[0]
    if A.is_constant:
        diag = M.diagonal().real
        i = int(np.argmin(diag))
        v = np.zeros(P, complex)
        v[i] = 1.0
        return BlochEigenpair(eta, float(diag[i]), v, kidx, 0.0)
    if P <= DENSE_LIMIT:
        w, V = scipy.linalg.eigh(M, subset_by_index=[0, 0])
        v = V[:, 0]
    else:
        try:
            w, V = scipy.sparse.linalg.eigsh(M, k=1, which="SA", tol=1e-14, maxiter=20 * P)
        except scipy.sparse.linalg.ArpackNoConvergence as exc:
            raise EigenSolverError(f"iterative eigensolver did not converge at eta={eta}") from exc
        v = V[:, 0]
    v = _fix_phase(v / np.linalg.norm(v))
    lam = max(_rayleigh(T, kidx, eta, v), 0.0)
    res = float(np.linalg.norm(M @ v - lam * v))
    if res > tol:
        raise EigenSolverError(f"eigen residual {res:.3e} exceeds tol {tol:.1e} at eta={eta}")
    return BlochEigenpair(eta, lam, v, kidx, res)


def resolve_truncation(A, rel_tol=1e-10):
    """Default truncation for ``A``: doubled from the default until lambda_0 settles."""
    return PlaneWaveTruncation(_resolve_N(A, rel_tol))


@lru_cache(maxsize=64)
def _resolve_N(A, rel_tol):
    n = A.dimension
    N = max(DEFAULT_NPW.get(n, 8), 2 * int(A.bandwidth) if np.isfinite(A.bandwidth) else 0)
    cap = NPW_CAP.get(n, N)
    if A.is_constant:
        return N
    probe = np.full(n, 0.375)
    prev = lowest_eigenpair(A, probe, PlaneWaveTruncation(N)).eigenvalue
    change = np.inf
    while 2 * N <= cap:
        cur = lowest_eigenpair(A, probe, PlaneWaveTruncation(2 * N)).eigenvalue
        change = abs(cur - prev) / abs(cur)
        if change <= rel_tol:
            return N
        N, prev = 2 * N, cur
    log.warning("plane-wave truncation hit the cap N=%d for %r (last relative change %.2e)", N, A, change)
    return N


def bloch_band(A, grid, trunc=None, m_max=0, keep_vectors=False):
    """Bands 0..m_max at every node of ``grid`` (sequence of quasimomenta)."""
    if trunc is None:
        trunc = resolve_truncation(A)
    pts = np.asarray(grid, dtype=float).reshape(len(grid), -1)
    vals = np.empty((pts.shape[0], m_max + 1))
    vecs = [] if keep_vectors else None
    for j, eta in enumerate(pts):
        try:
            if m_max == 0:
                pair = lowest_eigenpair(A, eta, trunc)
                vals[j, 0] = pair.eigenvalue
                if keep_vectors:
                    vecs.append(pair.coefficients)
            else:
                M = assemble_bloch_matrix(A, eta, trunc)
                w, V = scipy.linalg.eigh(M, subset_by_index=[0, m_max])
                vals[j] = w
                vals[j, 0] = lowest_eigenpair(A, eta, trunc).eigenvalue
                if keep_vectors:
                    vecs.append(lowest_eigenpair(A, eta, trunc).coefficients)
        except (EigenSolverError, ValueError) as exc:
            raise type(exc)(f"band node {j} (eta={eta}): {exc}") from exc
    vals = np.sort(vals, axis=1)
    return BlochBand(pts, vals, tuple(vecs) if keep_vectors else None)


def rescaled_eigenvalue(A, eta, eps, trunc=None):
    """lambda_0^eps(eta) = lambda_0(eps * eta) / eps^2."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    scaled = eps * np.atleast_1d(np.asarray(eta, dtype=float))
    if np.any(scaled < -0.5) or np.any(scaled >= 0.5):
        raise ValueError(f"eps * eta = {scaled} lies outside Z; eps={eps} is too large for eta={eta}")
    return lowest_eigenpair(A, scaled, trunc).eigenvalue / eps ** 2

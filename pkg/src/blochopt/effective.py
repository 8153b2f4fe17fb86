"""Effective (Taylor) tensors of the lowest Bloch band and derived symbols.

Near eta = 0 the first band is even and analytic,

    lambda_0(eta) = sum_k (2 pi)^(2k) A_2k . eta^(x2k),

so the effective tensors are recovered from a least-squares fit of an even
polynomial to eigenvalue samples on a small symmetric stencil.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .cell_spectral import lowest_eigenpair, resolve_truncation

log = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
MAX_ORDER = {1: 4, 2: 2}
FIT_PAIRS = {1: 8, 2: 4}     # even powers fitted in total (wanted orders + guard terms)
FIT_TOL = 1e-8


@dataclass(frozen=True)
class CompactBox:
    """Symmetric box [-k_1, k_1] x ... x [-k_n, k_n] in frequency space."""

    half_widths: tuple

    def __post_init__(self):
        hw = tuple(float(v) for v in np.atleast_1d(self.half_widths))
        if any(v <= 0 for v in hw):
            raise ValueError("box half-widths must be positive")
        object.__setattr__(self, "half_widths", hw)

    @property
    def dimension(self):
        return len(self.half_widths)

    @property
    def radius(self):
        """sup |eta| over the box."""
        return float(np.linalg.norm(self.half_widths))

    def contains(self, eta):
        eta = np.asarray(eta, float).reshape(-1, self.dimension)
        return np.all(np.abs(eta) <= np.asarray(self.half_widths) * (1 + 1e-12), axis=1)

    def sample(self, total=1024):
        """Tensor-product verification grid with about ``total`` points."""
        per_axis = max(2, int(round(total ** (1.0 / self.dimension))))
        axes = [np.linspace(-k, k, per_axis) for k in self.half_widths]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)


def _exponents(n, degree):
    """Exponent vectors of all monomials of total ``degree`` in n variables."""
    out = []
    for combo in itertools.combinations_with_replacement(range(n), degree):
        e = [0] * n
        for c in combo:
            e[c] += 1
        out.append(tuple(e))
    return out


def _multinomial(e):
    return math.factorial(sum(e)) // math.prod(math.factorial(c) for c in e)


def contract(tensor, eta):
    """T . eta^(x order) for a batch of points ``eta`` of shape (J, n)."""
    eta = np.asarray(eta, float)
    r = np.broadcast_to(tensor, (eta.shape[0],) + tensor.shape)
    for _ in range(tensor.ndim):
        r = np.einsum("j...i,ji->j...", r, eta)
    return r


@dataclass(frozen=True)
class EffectiveTensors:
    dimension: int
    M: int
    tensors: tuple                      # A_2, A_4, ..., A_2M with shapes (n,)*2k
    ellipticity: float                  # smallest eigenvalue of A_2
    boussinesq: tuple | None = None     # (B_2, B_4), n = 1 only
    diagnostics: dict = field(default_factory=dict)

    @property
    def norms(self):
        return tuple(float(np.abs(t).max()) for t in self.tensors)

    def tensor(self, k):
        """A_2k as an array; a float when n = 1."""
        t = self.tensors[k - 1]
        return float(t.ravel()[0]) if self.dimension == 1 else t

    @property
    def A2(self):
        return self.tensor(1)

    @property
    def A4(self):
        return self.tensor(2)

    def as_dict(self):
        return {
            "dimension": self.dimension,
            "M": self.M,
            "tensors": {f"A{2 * k}": t.ravel().tolist() for k, t in enumerate(self.tensors, 1)},
            "ellipticity": self.ellipticity,
            "norms": list(self.norms),
            "boussinesq": None if self.boussinesq is None else {"B2": self.boussinesq[0], "B4": self.boussinesq[1]},
            "diagnostics": self.diagnostics,
        }


def _fit(A, h, pairs, trunc):
    n = A.dimension
    J = 2 * pairs if n == 1 else pairs + 2
    side = np.arange(-J, J + 1) / J
    mesh = np.meshgrid(*([side] * n), indexing="ij")
    s = np.stack([m.ravel() for m in mesh], axis=-1)      # symmetric, ordered so s[-i-1] = -s[i]
    half = (s.shape[0] + 1) // 2
    lam_half = np.array([lowest_eigenpair(A, h * p, trunc).eigenvalue for p in s[:half]])
    lam = np.concatenate([lam_half, lam_half[-2::-1]])
    cols, keys = [], []
    for k in range(1, pairs + 1):
        for e in _exponents(n, 2 * k):
            cols.append(np.prod(s ** np.asarray(e), axis=1))
            keys.append((k, e))
    V = np.column_stack(cols)
    scale = np.linalg.norm(V, axis=0)
    c, *_ = np.linalg.lstsq(V / scale, lam, rcond=None)
    c = c / scale
    resid = float(np.abs(V @ c - lam).max())
    coef = {key: ck for key, ck in zip(keys, c)}
    tensors = []
    for k in range(1, pairs + 1):
        T = np.zeros((n,) * (2 * k))
        for idx in np.ndindex(*T.shape):
            e = tuple(idx.count(d) for d in range(n))
            T[idx] = coef[(k, e)] / (_multinomial(e) * (TWO_PI * h) ** (2 * k))
        tensors.append(T)
    return tensors, resid, float(np.abs(lam).max())


def taylor_tensors(A, M, h=0.1, trunc=None, pairs=None):
    """Fit the effective tensors A_2..A_2M of ``A``'s lowest band.

    The fit uses ``pairs`` even powers in total (default 8 for n = 1 and 4 for
    n = 2); everything above order 2M is a guard term and is discarded.  The
    fit is repeated at ``h/2`` and the relative agreement is recorded.
    """
    n = A.dimension
    if M < 1 or M > MAX_ORDER.get(n, 0):
        raise ValueError(f"order M={M} not supported for dimension {n} (max {MAX_ORDER.get(n, 0)})")
    if not 0 < h <= 0.25:
        raise ValueError("stencil half-width h must lie in (0, 0.25]")
    if trunc is None:
        trunc = resolve_truncation(A)
    if A.is_constant:
        A2 = np.asarray(A.mean, float)
        tensors = [A2] + [np.zeros((n,) * (2 * k)) for k in range(2, M + 1)]
        diag = {"h": h, "residual": 0.0, "exact": True}
    else:
        pairs = pairs or max(FIT_PAIRS.get(n, 4), M + 2)
        tensors, resid, lam_max = _fit(A, h, pairs, trunc)
        if resid > FIT_TOL * lam_max:
            raise ValueError(f"Taylor fit residual {resid:.2e} too large; reduce h or check eigenvalues")
        coarse, _, _ = _fit(A, h / 2, pairs, trunc)
        agree = [float(np.abs(a - b).max() / max(np.abs(a).max(), 1e-300)) for a, b in zip(tensors, coarse)]
        diag = {"h": h, "residual": resid, "pairs": pairs, "guard": pairs - M,
                "half_step_agreement": agree[:M], "exact": False}
        if agree[0] > 1e-6 or (M >= 2 and agree[1] > 1e-4):
            log.warning("Taylor tensors unstable between h and h/2: %s", agree[:M])
        tensors = tensors[:M]
    A2 = 0.5 * (tensors[0] + tensors[0].T)
    ell = float(np.linalg.eigvalsh(A2).min())
    if ell <= 0:
        raise ValueError(f"fitted A_2 is not positive definite (min eigenvalue {ell:.3e})")
    tensors[0] = A2
    out = EffectiveTensors(n, M, tuple(tensors), ell, None, diag)
    if n == 1 and M >= 2:
        out = EffectiveTensors(n, M, out.tensors, ell, boussinesq_split(out), diag)
    return out


def _points(eta, n):
    eta = np.asarray(eta, float)
    scalar = eta.ndim == 0 or (eta.ndim == 1 and n > 1 and eta.shape == (n,))
    return eta.reshape(-1, n), scalar


def eval_PM(tensors, M, eps, eta):
    """P_M^eps(eta) = sum_{k<=M} eps^(2k-2) (2 pi)^(2k) A_2k . eta^(x2k)."""
    if M > tensors.M:
        raise ValueError(f"requested M={M} but only {tensors.M} tensors are available")
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    pts, scalar = _points(eta, tensors.dimension)
    out = np.zeros(pts.shape[0])
    for k in range(1, M + 1):
        out += eps ** (2 * k - 2) * TWO_PI ** (2 * k) * contract(tensors.tensors[k - 1], pts)
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class Threshold:
    """Well-posedness threshold eps_M; ``value`` is the grid-verified bound used by solvers."""

    value: float
    sufficient: float
    M: int

    @property
    def unbounded(self):
        return math.isinf(self.value)


def _sufficient_bound(tensors, M, K):
    n = tensors.dimension
    lam = tensors.ellipticity
    norms = tensors.norms
    rmax = K.radius

    def lhs(eps):
        return TWO_PI ** (2 * M) * sum((eps * rmax) ** (2 * k - 2) * norms[k - 1] * n ** (2 * k)
                                      for k in range(2, M + 1))

    if lhs(1.0) == 0.0:
        return math.inf
    lo, hi = 0.0, 1.0
    while lhs(hi) < lam / 2:
        hi *= 2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if lhs(mid) < lam / 2:
            lo = mid
        else:
            hi = mid
    return lo


def epsilon_threshold(tensors, M, K, n_verify=1024):
    """Largest eps with P_N^eps(eta) >= (lambda/2)|eta|^2 on K for every N <= M."""
    if M > tensors.M:
        raise ValueError(f"requested M={M} but only {tensors.M} tensors are available")
    if M == 1 or all(v == 0.0 for v in tensors.norms[1:M]):
        return Threshold(math.inf, math.inf, M)
    pts = K.sample(n_verify)
    floor = 0.5 * tensors.ellipticity * np.sum(pts ** 2, axis=1)

    def ok(eps):
        return all(np.all(eval_PM(tensors, N, eps, pts) >= floor) for N in range(2, M + 1))

    suff = _sufficient_bound(tensors, M, K)
    lo = suff if math.isfinite(suff) else 0.0
    hi = max(2 * lo, 1e-3)
    while ok(hi):
        lo, hi = hi, 2 * hi
        if hi > 1e8:
            return Threshold(math.inf, suff, M)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    return Threshold(lo, min(suff, lo), M)


def boussinesq_split(tensors, tol=FIT_TOL):
    """(B_2, B_4) with A_4 = -B_2 A_2 + B_4, both nonnegative (n = 1)."""
    if tensors.dimension != 1:
        raise ValueError("Boussinesq decomposition is implemented for n = 1 only")
    if tensors.M < 2:
        raise ValueError("Boussinesq decomposition needs A_4 (M >= 2)")
    a2, a4 = tensors.A2, tensors.A4
    if a4 > tol:
        raise ValueError(f"A_4 = {a4:.3e} > 0 violates negative semidefiniteness")
    if a4 > 0:
        return 0.0, a4
    return -a4 / a2, 0.0


def eval_QR(tensors, eps, eta):
    """Symbols Q_2^eps and R_2^eps of the regularised second-order model (n = 1)."""
    b2, b4 = tensors.boussinesq if tensors.boussinesq is not None else boussinesq_split(tensors)
    pts, scalar = _points(eta, 1)
    e2 = pts[:, 0] ** 2
    q = eps ** 2 * TWO_PI ** 2 * b2 * e2
    r = TWO_PI ** 2 * (tensors.A2 + eps ** 2 * b2) * e2 + eps ** 2 * TWO_PI ** 4 * b4 * e2 ** 2
    if scalar:
        return float(q[0]), float(r[0])
    return q, r

"""Linear-quadratic optimal control in Bloch/Fourier coordinates.

All three problem families (exact Bloch, Taylor-effective of order M, and
the regularised second-order model) share one structure: the state is

    y_hat(eta) = rho(eta) * (f_hat(eta) + u_hat(eta))

for an even positive multiplier ``rho``, and the cost is

    J = mu1/2 w sum |y - yd1|^2 / rho + mu2/2 w sum |y - yd2|^2 + kappa/2 w sum |u|^2.

Every term is diagonal in eta, and each admissible set couples the nodes
only through one scalar, so optima are closed form plus a scalar multiplier
found by bisection.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bandlimited import SpectralFunction
from .cell_spectral import rescaled_eigenvalue
from .effective import epsilon_threshold, eval_PM, eval_QR


class IllPosedError(ValueError):
    """The Taylor-effective symbol is not coercive for this eps."""


class InvariantViolation(AssertionError):
    """A solution violated a certified bound (uniform control bound, KKT)."""


@dataclass(frozen=True, eq=False)
class MultiplierModel:
    kind: str                 # "exact" | "taylor" | "wellposed"
    eps: float
    grid: object
    rho: np.ndarray
    M: int | None = None

    def __post_init__(self):
        rho = np.asarray(self.rho, float)
        if np.any(rho <= 0) or not np.all(np.isfinite(rho)):
            raise ValueError(f"{self.kind} multiplier is not positive on the grid")
        if np.abs(rho - rho[self.grid.negation]).max() > 1e-9 * rho.max():
            raise ValueError(f"{self.kind} multiplier is not even in eta")
        object.__setattr__(self, "rho", rho)

    @property
    def label(self):
        return {"exact": "exact", "taylor": f"M{self.M}", "wellposed": "WP2"}[self.kind]


def exact_bloch(A, eps, grid, trunc=None):
    """rho = 1 / (1 + lambda_0^eps)."""
    grid.check_eps(eps)
    lam = np.array([rescaled_eigenvalue(A, eta, eps, trunc) for eta in grid.nodes])
    return MultiplierModel("exact", float(eps), grid, 1.0 / (1.0 + lam))


def taylor_effective(tensors, M, eps, grid, threshold=None):
    """rho = 1 / (1 + P_M^eps); refused at or above the threshold eps_M."""
    if threshold is None:
        threshold = epsilon_threshold(tensors, M, grid.box)
    limit = threshold.value if hasattr(threshold, "value") else float(threshold)
    if eps >= limit:
        raise IllPosedError(f"eps={eps:g} >= eps_{M}={limit:.6g}: effective order-{M} equation is ill-posed")
    sym = 1.0 + eval_PM(tensors, M, eps, grid.nodes)
    if np.any(sym <= 0):
        raise IllPosedError(f"1 + P_{M}^eps is not positive on the grid at eps={eps:g}")
    return MultiplierModel("taylor", float(eps), grid, 1.0 / sym, M)


def well_posed(tensors, eps, grid):
    """rho = (1 + Q_2^eps) / (1 + R_2^eps); valid for every eps."""
    if tensors.dimension != 1 or grid.dimension != 1:
        raise ValueError("the regularised second-order model is implemented for n = 1 only")
    q, r = eval_QR(tensors, eps, grid.nodes[:, 0])
    return MultiplierModel("wellposed", float(eps), grid, (1.0 + q) / (1.0 + r), 2)


KINDS = ("full", "control_ball", "state_ball", "energy_ball")


@dataclass(frozen=True, eq=False)
class AdmissibleSet:
    """Full space or a ball; ``reference`` supplies the exact multiplier for state/energy balls.

    With ``reference=None`` the state/energy constraint uses the solving model's own
    multiplier, i.e. the approximate admissible set.
    """

    kind: str = "full"
    L: float = math.inf
    reference: MultiplierModel | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown admissible set {self.kind!r}; expected one of {KINDS}")
        if self.kind != "full" and not (0 < self.L < math.inf):
            raise ValueError("ball radius L must be positive and finite")

    def constraint_rho(self, model):
        return (self.reference or model).rho


@dataclass(frozen=True, eq=False)
class ControlProblemSpec:
    mu1: float
    mu2: float
    kappa: float
    f: SpectralFunction
    yd1: SpectralFunction
    yd2: SpectralFunction
    admissible: AdmissibleSet = AdmissibleSet()

    def __post_init__(self):
        if self.mu1 < 0 or self.mu2 < 0:
            raise ValueError("weights mu1, mu2 must be nonnegative")
        if not self.kappa > 0:
            raise ValueError("kappa must be strictly positive")
        for name in ("f", "yd1", "yd2"):
            if not getattr(self, name).is_hermitian(1e-10):
                raise ValueError(f"data {name} is not Hermitian (would synthesise a complex field)")

    def with_admissible(self, admissible):
        return ControlProblemSpec(self.mu1, self.mu2, self.kappa, self.f, self.yd1, self.yd2, admissible)


@dataclass(frozen=True, eq=False)
class OptimalSolution:
    u: SpectralFunction
    y: SpectralFunction
    p: SpectralFunction
    multiplier: float
    cost: float
    residual: float
    constraint: float


def state_map(model, u, f):
    return SpectralFunction(u.grid, model.rho * (f.coeffs + u.coeffs))


# constraint helpers: (t/2) * c_sq(u) is added to the Lagrangian.
def _constraint_weight(model, spec):
    """Return (gamma, shift) with grad of c_sq / 2 = gamma * (u + shift * f)."""
    kind = spec.admissible.kind
    if kind == "control_ball":
        return 1.0, 0.0
    rc = spec.admissible.constraint_rho(model)
    if kind == "state_ball":
        return rc ** 2, 1.0
    if kind == "energy_ball":
        return rc, 1.0
    return 0.0, 0.0


def constraint_value(model, u, spec):
    """||u||, ||y|| or E(y) depending on the admissible set (0 for full space)."""
    kind = spec.admissible.kind
    w = u.grid.weight
    if kind == "control_ball":
        return u.norm()
    z = spec.f.coeffs + u.coeffs
    rc = spec.admissible.constraint_rho(model)
    if kind == "state_ball":
        return math.sqrt(w * np.sum(np.abs(rc * z) ** 2))
    if kind == "energy_ball":
        return float(w * np.sum(rc * np.abs(z) ** 2))
    return 0.0


def _c_sq(model, u, spec):
    c = constraint_value(model, u, spec)
    return c if spec.admissible.kind == "energy_ball" else c * c


def cost(model, u, spec, multiplier=0.0):
    """Reduced cost J(u), plus (t/2) c_sq(u) when ``multiplier`` t > 0."""
    rho, w = model.rho, u.grid.weight
    y = rho * (spec.f.coeffs + u.coeffs)
    j = 0.5 * spec.mu1 * w * np.sum(np.abs(y - spec.yd1.coeffs) ** 2 / rho)
    j += 0.5 * spec.mu2 * w * np.sum(np.abs(y - spec.yd2.coeffs) ** 2)
    j += 0.5 * spec.kappa * w * np.sum(np.abs(u.coeffs) ** 2)
    if multiplier:
        j += 0.5 * multiplier * _c_sq(model, u, spec)
    return float(j)


def gradient(model, u, spec, multiplier=0.0):
    """Riesz representative of the derivative for the inner product w * sum Re[u conj v]."""
    rho = model.rho
    y = rho * (spec.f.coeffs + u.coeffs)
    g = spec.mu1 * (y - spec.yd1.coeffs) + spec.mu2 * rho * (y - spec.yd2.coeffs) + spec.kappa * u.coeffs
    if multiplier:
        gamma, shift = _constraint_weight(model, spec)
        g = g + multiplier * gamma * (u.coeffs + shift * spec.f.coeffs)
    return SpectralFunction(u.grid, g)


def adjoint(model, y, spec):
    """p = mu1 (y - yd1) + mu2 p1 with p1 = rho (y - yd2)."""
    p1 = model.rho * (y.coeffs - spec.yd2.coeffs)
    return SpectralFunction(y.grid, spec.mu1 * (y.coeffs - spec.yd1.coeffs) + spec.mu2 * p1)


def _minimizer(model, spec, t):
    rho = model.rho
    f = spec.f.coeffs
    num = spec.mu1 * (spec.yd1.coeffs - rho * f) + spec.mu2 * rho * (spec.yd2.coeffs - rho * f)
    den = spec.kappa + spec.mu1 * rho + spec.mu2 * rho ** 2
    if t:
        gamma, shift = _constraint_weight(model, spec)
        num = num - t * gamma * shift * f
        den = den + t * gamma
    return SpectralFunction(spec.f.grid, num / den)


def _finish(model, spec, u, t):
    y = state_map(model, u, spec.f)
    p = adjoint(model, y, spec)
    g = gradient(model, u, spec, multiplier=t)
    sol = OptimalSolution(u, y, p, float(t), cost(model, u, spec), g.norm(), constraint_value(model, u, spec))
    check_solution(model, spec, sol)
    return sol


def solve_unconstrained(model, spec):
    if spec.admissible.kind != "full":
        raise ValueError("solve_unconstrained needs the full-space admissible set")
    return _finish(model, spec, _minimizer(model, spec, 0.0), 0.0)


def solve_constrained(model, spec, rtol=1e-14, max_iter=200):
    """KKT solve for a ball constraint via bisection on the scalar multiplier."""
    adm = spec.admissible
    if adm.kind == "full":
        raise ValueError("solve_constrained needs a ball admissible set")
    L = adm.L
    u = _minimizer(model, spec, 0.0)
    if constraint_value(model, u, spec) <= L:
        return _finish(model, spec, u, 0.0)
    hi = 1.0
    for _ in range(max_iter):
        u_hi = _minimizer(model, spec, hi)
        if constraint_value(model, u_hi, spec) <= L:
            break
        hi *= 2.0
    else:
        raise RuntimeError("could not bracket the KKT multiplier: constraint is not decreasing in t")
    lo = 0.0
    for _ in range(max_iter):
        c_hi = constraint_value(model, u_hi, spec)
        if abs(c_hi - L) <= rtol * L:
            break
        mid = 0.5 * (lo + hi)
        u_mid = _minimizer(model, spec, mid)
        if constraint_value(model, u_mid, spec) > L:
            lo = mid
        else:
            hi, u_hi = mid, u_mid
        if hi - lo <= 1e-16 * hi:
            break
    return _finish(model, spec, u_hi, hi)


def solve(model, spec):
    if spec.admissible.kind == "full":
        return solve_unconstrained(model, spec)
    return solve_constrained(model, spec)


def feasibility_witness(spec):
    """0 for the full space and control ball, -f for the state and energy balls."""
    if spec.admissible.kind in ("full", "control_ball"):
        return SpectralFunction.zeros(spec.f.grid)
    return -spec.f


def check_solution(model, spec, sol, tol=1e-8):
    """Uniform control bound, feasibility and complementary slackness."""
    j0 = cost(model, feasibility_witness(spec), spec)
    bound = math.sqrt(2.0 * j0 / spec.kappa)
    if sol.u.norm() > bound * (1 + 1e-10) + 1e-14:
        raise InvariantViolation(f"||u*||={sol.u.norm():.6e} exceeds uniform bound {bound:.6e}")
    if spec.admissible.kind != "full":
        L = spec.admissible.L
        if sol.constraint > L + tol:
            raise InvariantViolation(f"constraint {sol.constraint:.6e} exceeds L={L:.6e}")
        if sol.multiplier * abs(sol.constraint - L) > tol:
            raise InvariantViolation("complementary slackness violated")
        if sol.multiplier < 0:
            raise InvariantViolation("negative KKT multiplier")


def _random_feasible(model, spec, u, rng):
    grid = u.grid
    d = rng.standard_normal(grid.size) + 1j * rng.standard_normal(grid.size)
    d = SpectralFunction(grid, d).symmetrized()
    kind = spec.admissible.kind
    if kind == "full":
        scale = u.norm() + spec.f.norm() + 1.0
        return u + d * (scale * rng.uniform(0.01, 1.0) / d.norm())
    r = spec.admissible.L * rng.uniform() ** 0.5
    if kind == "control_ball":
        return d * (r / d.norm())
    rc = spec.admissible.constraint_rho(model)
    w = grid.weight
    if kind == "state_ball":
        s = r / math.sqrt(w * np.sum(np.abs(rc * d.coeffs) ** 2))
    else:
        s = math.sqrt(r / (w * np.sum(rc * np.abs(d.coeffs) ** 2)))
    return -spec.f + d * s


def vi_residual(model, u, spec, n_probes=64, rng=None):
    """min over random feasible v of w * sum Re[g(u) conj(v - u)] (>= 0 at an optimum)."""
    rng = np.random.default_rng(rng)
    g = gradient(model, u, spec)
    vals = [g.inner(_random_feasible(model, spec, u, rng) - u) for _ in range(n_probes)]
    return float(min(vals))

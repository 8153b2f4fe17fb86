"""eps-sweep convergence studies and their CSV/JSON output."""
from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import config as cfg
from . import control as ctl
from .bandlimited import parseval_norm
from .effective import epsilon_threshold, taylor_tensors

log = logging.getLogger(__name__)

ERROR_FLOOR = 1e-13
DEGENERATE = 1e-12
SLOPE_MARGIN = 0.2
QUANTITIES = ("u", "y", "p")


class StudyError(RuntimeError):
    pass


@dataclass
class StudyConfig:
    coefficient: object
    grid: object
    eps: list
    M: list = field(default_factory=lambda: [1, 2])
    well_posed: bool = False
    mu1: float = 1.0
    mu2: float = 0.0
    kappa: float = 1.0
    profiles: dict = field(default_factory=dict)   # name -> profile block
    admissible: dict = field(default_factory=lambda: {"kind": "full"})
    trunc: object = None
    h: float = 0.1
    seed: int = 0
    threads: int = 1
    out: str | None = None

    @classmethod
    def from_dict(cls, data, seed=None, threads=None, out=None):
        eps = cfg.eps_list(data)
        if not eps:
            raise cfg.ConfigError("study needs a nonempty 'eps' list")
        problem = data.get("problem", {})
        models = data.get("models", {})
        return cls(
            coefficient=cfg.coefficient(data.get("coefficient")),
            grid=cfg.grid(data.get("grid"), eps),
            eps=eps,
            M=[int(m) for m in models.get("M", [1, 2])],
            well_posed=bool(models.get("well_posed", False)),
            mu1=float(problem.get("mu1", 1.0)),
            mu2=float(problem.get("mu2", 0.0)),
            kappa=float(problem.get("kappa", 1.0)),
            profiles={k: problem.get(k) for k in ("f", "yd1", "yd2")},
            admissible=dict(problem.get("admissible", {"kind": "full"})),
            trunc=cfg.truncation(data.get("numerics")),
            h=float((data.get("numerics") or {}).get("h", 0.1)),
            seed=int(data.get("seed", 0) if seed is None else seed),
            threads=int(data.get("threads", 1) if threads is None else threads),
            out=out or data.get("out"),
        )

    def data(self):
        rng = np.random.default_rng(self.seed)
        return {k: cfg.profile(self.profiles.get(k), self.grid, rng) for k in ("f", "yd1", "yd2")}


@dataclass
class RateFit:
    quantity: str
    model: str
    slope: float
    r2: float
    target: float
    passed: bool
    dropped: int = 0
    degenerate: bool = False


@dataclass
class RateReport:
    rows: list                  # (quantity, model, eps, error)
    fits: list
    thresholds: dict
    invariants_ok: bool = True
    notes: list = field(default_factory=list)

    @property
    def passed(self):
        return self.invariants_ok and all(f.passed for f in self.fits)

    def table(self, quantity, model):
        return [(e, err) for q, m, e, err in self.rows if q == quantity and m == model]

    def fit(self, quantity, model):
        for f in self.fits:
            if f.quantity == quantity and f.model == model:
                return f
        raise KeyError((quantity, model))

    def as_dict(self):
        return {
            "passed": self.passed,
            "invariants_ok": self.invariants_ok,
            "thresholds": self.thresholds,
            "fits": [vars(f) for f in self.fits],
            "notes": self.notes,
        }


def fit_rate(pairs, floor=ERROR_FLOOR):
    """Least-squares slope and R^2 of log2(error) against log2(eps).

    Returns (slope, r2, dropped) where ``dropped`` counts pairs below ``floor``.
    """
    pairs = [(float(e), float(err)) for e, err in pairs]
    if any(e <= 0 for e, _ in pairs):
        raise ValueError("eps values must be positive")
    kept = [(e, err) for e, err in pairs if err >= floor]
    dropped = len(pairs) - len(kept)
    if dropped:
        log.info("fit_rate: dropped %d pair(s) below %.0e", dropped, floor)
    if not kept:
        raise ValueError("all points dropped below the error floor")
    if len(kept) < 2:
        raise ValueError("need at least two points above the error floor")
    x = np.log2([e for e, _ in kept])
    y = np.log2([err for _, err in kept])
    slope, icpt = np.polyfit(x, y, 1)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum((y - (slope * x + icpt)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(r2), dropped


def _target(model):
    return 3.8 if model == "WP2" else 2 * int(model[1:]) - SLOPE_MARGIN


def _admissible(conf, spec, exact_models):
    """Resolve the radius L once, at the largest eps, so it is shared by the sweep."""
    adm = conf.admissible
    kind = adm.get("kind", "full")
    if kind == "full":
        return kind, math.inf
    if "L" in adm:
        return kind, float(adm["L"])
    rel = float(adm.get("L_relative", 0.5))
    model = exact_models[conf.eps[0]]
    probe = spec.with_admissible(ctl.AdmissibleSet(kind, 1.0, model))
    free = ctl.solve(model, spec)
    return kind, rel * ctl.constraint_value(model, free.u, probe)


def _solve_checked(model, spec, rng):
    sol = ctl.solve(model, spec)          # re-validates bound and slackness
    if spec.admissible.kind != "full":
        vi = ctl.vi_residual(model, sol.u, spec, rng=rng)
        if vi < -1e-8:
            raise ctl.InvariantViolation(f"{model.label} at eps={model.eps:g}: VI residual {vi:.3e}")
    return sol


def run_study(conf):
    A, grid = conf.coefficient, conf.grid
    if conf.well_posed and grid.dimension != 1:
        raise StudyError("the well-posed model is available for n = 1 only")
    M_need = max(conf.M + ([2] if conf.well_posed else []) + [1])
    tensors = taylor_tensors(A, M_need, h=conf.h, trunc=conf.trunc)
    thresholds = {}
    for M in conf.M:
        th = epsilon_threshold(tensors, M, grid.box)
        thresholds[f"M{M}"] = {"value": th.value, "sufficient": th.sufficient}
        bad = [e for e in conf.eps if e >= th.value]
        if bad:
            raise StudyError(f"eps {bad} >= eps_{M} = {th.value:.6g}: order-{M} model is ill-posed there")
    data = conf.data()
    base = ctl.ControlProblemSpec(conf.mu1, conf.mu2, conf.kappa, data["f"], data["yd1"], data["yd2"])

    def exact(eps):
        try:
            return ctl.exact_bloch(A, eps, grid, conf.trunc)
        except Exception as exc:
            raise StudyError(f"exact Bloch model failed at eps={eps:g}: {exc}") from exc

    with ThreadPoolExecutor(max_workers=max(1, conf.threads)) as pool:
        exact_models = dict(zip(conf.eps, pool.map(exact, conf.eps)))
    kind, L = _admissible(conf, base, exact_models)
    approximate = bool(conf.admissible.get("approximate", False))

    def one(i):
        eps = conf.eps[i]
        rng = np.random.default_rng([conf.seed, i])
        ref = exact_models[eps]
        models = [ctl.taylor_effective(tensors, M, eps, grid, thresholds[f"M{M}"]["value"]) for M in conf.M]
        if conf.well_posed:
            models.append(ctl.well_posed(tensors, eps, grid))
        spec_ref = base.with_admissible(ctl.AdmissibleSet(kind, L, ref)) if kind != "full" else base
        s_ref = _solve_checked(ref, spec_ref, rng)
        out = []
        for m in models:
            spec = spec_ref
            if kind != "full" and approximate:
                spec = base.with_admissible(ctl.AdmissibleSet(kind, L, None))
            s = _solve_checked(m, spec, rng)
            for q in QUANTITIES:
                out.append((q, m.label, eps, parseval_norm(getattr(s, q) - getattr(s_ref, q))))
        return out

    with ThreadPoolExecutor(max_workers=max(1, conf.threads)) as pool:
        rows = [r for block in pool.map(one, range(len(conf.eps))) for r in block]

    report = RateReport(rows, [], thresholds)
    report.notes.append(f"admissible={kind} L={L:.17g} approximate={approximate}")
    labels = [f"M{M}" for M in conf.M] + (["WP2"] if conf.well_posed else [])
    for label in labels:
        for q in QUANTITIES:
            pairs = report.table(q, label)
            target = _target(label)
            if max(err for _, err in pairs) <= DEGENERATE:
                report.fits.append(RateFit(q, label, math.nan, math.nan, target, True, len(pairs), True))
                report.notes.append(f"degenerate: exact agreement for {q}/{label}")
                continue
            if len(pairs) < 4:
                raise StudyError("rate fits need at least 4 eps values")
            slope, r2, dropped = fit_rate(pairs)
            report.fits.append(RateFit(q, label, slope, r2, target, slope >= target, dropped))
    return report


# writers ------------------------------------------------------------------------

def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def _clean(obj):
    # JSON has no inf/nan; write them as strings
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def write_json(path, obj):
    Path(path).write_text(json.dumps(_clean(obj), indent=2, default=_json_default) + "\n")


def write_rates(out, report):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "rates.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["quantity", "M", "eps", "error"])
        for q, m, e, err in report.rows:
            w.writerow([q, m, repr(e), repr(err)])
    write_json(out / "report.json", report.as_dict())


def write_band(path, grid, eigenvalues):
    grid = np.asarray(grid, float).reshape(len(eigenvalues), -1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"eta_{i + 1}" for i in range(grid.shape[1])]
                   + [f"lambda_{m}" for m in range(eigenvalues.shape[1])])
        for eta, lam in zip(grid, eigenvalues):
            w.writerow([repr(float(v)) for v in eta] + [repr(float(v)) for v in lam])


def write_solution(path, sol):
    nodes = sol.u.grid.nodes
    n = nodes.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow((["eta"] if n == 1 else [f"eta_{i + 1}" for i in range(n)])
                   + ["re_u", "im_u", "re_y", "im_y", "re_p", "im_p"])
        for j in range(nodes.shape[0]):
            vals = []
            for f in (sol.u, sol.y, sol.p):
                vals += [f.coeffs[j].real, f.coeffs[j].imag]
            w.writerow([repr(float(v)) for v in nodes[j]] + [repr(float(v)) for v in vals])

"""Command line entry point: ``blochopt <band|tensors|solve|study|oracle-check>``."""
from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import config as cfg
from . import control as ctl
from . import harness
from .cell_spectral import bloch_band
from .effective import epsilon_threshold, taylor_tensors
from .oracle import refinement_study

log = logging.getLogger("blochopt")

ORACLE_SLOPE = 1.9


def _band(data, out, args):
    A = cfg.coefficient(data.get("coefficient"))
    block = data.get("band", {})
    if "eta" in block:
        pts = np.asarray(block["eta"], float).reshape(-1, A.dimension)
    else:
        n_pts = int(block.get("n_points", 33))
        axis = np.linspace(-0.5, 0.5, n_pts)
        mesh = np.meshgrid(*([axis] * A.dimension), indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
    wrapped = (pts + 0.5) % 1.0 - 0.5       # bands are 1-periodic in eta
    band = bloch_band(A, wrapped, cfg.truncation(data.get("numerics")), int(block.get("m_max", 0)))
    harness.write_band(out / "band.csv", pts, band.eigenvalues)
    return True


def _tensors(data, out, args):
    A = cfg.coefficient(data.get("coefficient"))
    block = data.get("tensors", {})
    M = int(block.get("M", 2 if A.dimension == 1 else 1))
    t = taylor_tensors(A, M, h=float(block.get("h", 0.1)), trunc=cfg.truncation(data.get("numerics")))
    rep = t.as_dict()
    if data.get("grid"):
        K = cfg.grid(data["grid"]).box
        rep["eps_M"] = {}
        for m in range(1, M + 1):
            th = epsilon_threshold(t, m, K)
            rep["eps_M"][f"M{m}"] = {"value": th.value, "sufficient": th.sufficient}
    harness.write_json(out / "tensors.json", rep)
    return True


def _model(data, grid, eps):
    block = data.get("model", {})
    kind = block.get("type", "exact")
    A = cfg.coefficient(data.get("coefficient"))
    trunc = cfg.truncation(data.get("numerics"))
    if kind == "exact":
        return ctl.exact_bloch(A, eps, grid, trunc), A, trunc
    h = float((data.get("numerics") or {}).get("h", 0.1))
    if kind == "taylor":
        M = int(block.get("M", 2))
        return ctl.taylor_effective(taylor_tensors(A, M, h=h, trunc=trunc), M, eps, grid), A, trunc
    if kind == "well_posed":
        return ctl.well_posed(taylor_tensors(A, 2, h=h, trunc=trunc), eps, grid), A, trunc
    raise cfg.ConfigError(f"unknown model type {kind!r}")


def _problem(data, grid, seed):
    problem = data.get("problem", {})
    rng = np.random.default_rng(seed)
    f, yd1, yd2 = (cfg.profile(problem.get(k), grid, rng) for k in ("f", "yd1", "yd2"))
    return problem, ctl.ControlProblemSpec(float(problem.get("mu1", 1.0)), float(problem.get("mu2", 0.0)),
                                           float(problem.get("kappa", 1.0)), f, yd1, yd2), rng


def _solve(data, out, args):
    eps = float(data.get("model", {}).get("eps", (data.get("eps") or [None])[0] or math.nan))
    if not eps > 0:
        raise cfg.ConfigError("solve needs model.eps")
    grid = cfg.grid(data.get("grid"), [eps])
    model, A, trunc = _model(data, grid, eps)
    problem, spec, rng = _problem(data, grid, args.seed)
    adm = problem.get("admissible", {"kind": "full"})
    kind = adm.get("kind", "full")
    if kind != "full":
        if "L" not in adm:
            raise cfg.ConfigError("solve needs an explicit admissible.L")
        ref = None if adm.get("approximate") or kind == "control_ball" else ctl.exact_bloch(A, eps, grid, trunc)
        spec = spec.with_admissible(ctl.AdmissibleSet(kind, float(adm["L"]), ref))
    sol = ctl.solve(model, spec)
    vi = ctl.vi_residual(model, sol.u, spec, rng=rng) if kind != "full" else 0.0
    harness.write_solution(out / "solution.csv", sol)
    summary = {"model": model.label, "eps": eps, "cost": sol.cost, "multiplier": sol.multiplier,
               "constraint": sol.constraint, "gradient_residual": sol.residual, "vi_residual": vi,
               "u_norm": sol.u.norm(), "y_norm": sol.y.norm(), "p_norm": sol.p.norm()}
    harness.write_json(out / "summary.json", summary)
    return vi >= -1e-8


def _study(data, out, args):
    conf = harness.StudyConfig.from_dict(data, seed=args.seed, threads=args.threads, out=str(out))
    report = harness.run_study(conf)
    harness.write_rates(out, report)
    for f in report.fits:
        print(f"{f.quantity:>2} {f.model:>4} slope={f.slope:7.4f} r2={f.r2:.5f} "
              f"target={f.target:.1f} {'PASS' if f.passed else 'FAIL'}")
    return report.passed


def _oracle(data, out, args):
    block = data.get("oracle", {})
    eps = float(block.get("eps", 0.125))
    grid = cfg.grid(data.get("grid"), [eps])
    A = cfg.coefficient(data.get("coefficient"))
    problem, spec, rng = _problem(data, grid, args.seed)
    u = cfg.profile(block.get("control"), grid, rng)
    meshes = [int(m) for m in block.get("meshes", [4096, 8192, 16384])]
    rows, slope = refinement_study(A, eps, u, spec.f, meshes, cfg.truncation(data.get("numerics")))
    with open(out / "oracle.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["h", "discrepancy"])
        w.writerows([repr(h), repr(d)] for h, d in rows)
    C = max(d / h ** 2 for h, d in rows)
    print(f"slope={slope:.4f} C={C:.4g}")
    return len(rows) < 2 or slope >= ORACLE_SLOPE


COMMANDS = {"band": _band, "tensors": _tensors, "solve": _solve, "study": _study, "oracle-check": _oracle}


def build_parser():
    p = argparse.ArgumentParser(prog="blochopt", description=__doc__)
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="YAML or JSON configuration file")
    p.add_argument("--out", default=None, help="output directory (default: config 'out' or .)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        data = cfg.load(args.config)
        if args.seed is None:
            args.seed = int(data.get("seed", 0))
        if args.seed < 0 or args.seed >= 2 ** 64:
            raise cfg.ConfigError("seed must be an unsigned 64-bit integer")
        out = Path(args.out or data.get("out") or ".")
        out.mkdir(parents=True, exist_ok=True)
        ok = COMMANDS[args.command](data, out, args)
    except (cfg.ConfigError, harness.StudyError, ctl.IllPosedError, ctl.InvariantViolation,
            ValueError, RuntimeError, OSError) as exc:
        print(f"blochopt {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())

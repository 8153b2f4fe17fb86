"""Acceptance suite: one PASS/FAIL line per criterion.

Desk-scale setup unless noted: n = 1, K = [-2, 2], d_eta = 1/8,
A(y) = 2 + cos(2 pi y), eps in {2^-3, ..., 2^-7}.  Every criterion builds
fresh coefficient objects so eigenpair caches cannot flatter the timings.

Run directly (``python tests/test_acceptance.py``) for the summary alone.
"""
import math
import sys
import time

import numpy as np
import pytest

from blochopt import control as ctl
from blochopt import harness
from blochopt.bandlimited import (
    SpectralFunction, adaption_synthesize, gauss, make_grid, mode, random_hermitian, torus_norm,
)
from blochopt.cell_spectral import PeriodicCoefficient, bloch_band, rescaled_eigenvalue
from blochopt.effective import epsilon_threshold, eval_PM, taylor_tensors
from blochopt.oracle import refinement_study

EPS = [2.0 ** -k for k in range(3, 8)]
K_HALF = 2.0
D_ETA = 0.125
SEED = 20240611
RESULTS = {}


def cosine():
    return PeriodicCoefficient.cosine()


def acceptance_grid():
    return make_grid([K_HALF], D_ETA, EPS)


def slope(pairs):
    return harness.fit_rate(pairs)[0]


def report(num, title, passed, detail, elapsed, limit=None):
    timing = f"{elapsed:.2f}s" + (f" (limit {limit:g}s)" if limit else "")
    ok = passed and (limit is None or elapsed < limit)
    line = f"[{num:>2}] {'PASS' if ok else 'FAIL'}  {title}: {detail}; {timing}"
    RESULTS[num] = line
    return ok, line


def emit(capsys, ok, line):
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


def problem(grid, rng, admissible=ctl.AdmissibleSet()):
    return ctl.ControlProblemSpec(1.0, 0.5, 0.1, gauss(grid, 0.5, 0.6), mode(grid, 1.0, 0.5),
                                  random_hermitian(grid, rng, 0.3), admissible)


# criteria -------------------------------------------------------------------

def criterion_1():
    t0 = time.perf_counter()
    unit = PeriodicCoefficient.constant(1.0)
    eta = np.arange(-16, 17) / 33.0       # 33 symmetric nodes inside the zone
    lam = bloch_band(unit, eta).lambda0
    err = float(np.abs(lam - 4 * np.pi ** 2 * eta ** 2).max())
    return report(1, "constant-coefficient band", err <= 1e-10, f"max |err| = {err:.2e} on 33 nodes",
                  time.perf_counter() - t0, 1.0)


def criterion_2():
    t0 = time.perf_counter()
    a2c = taylor_tensors(cosine(), 2).A2
    a2l = taylor_tensors(PeriodicCoefficient.laminate([0.0, 0.5], [1.0, 4.0]), 2).A2
    ec, el = abs(a2c - math.sqrt(3)), abs(a2l - 1.6)
    return report(2, "homogenized coefficient", ec <= 1e-7 and el <= 1e-6,
                  f"|A2 - sqrt3| = {ec:.1e}, |A2 - 1.6| = {el:.1e}", time.perf_counter() - t0, 5.0)


def criterion_3():
    t0 = time.perf_counter()
    a4c = taylor_tensors(cosine(), 2).A4
    a4l = taylor_tensors(PeriodicCoefficient.laminate([0.0, 0.5], [1.0, 4.0]), 2).A4
    return report(3, "fourth-order sign", a4c <= 1e-8 and a4l <= 1e-8,
                  f"A4 = {a4c:.4e} (cosine), {a4l:.4e} (laminate)", time.perf_counter() - t0)


def criterion_4():
    t0 = time.perf_counter()
    A, grid = cosine(), acceptance_grid()
    t = taylor_tensors(A, 2)
    eta = grid.nodes[:, 0]
    slopes = {}
    for M in (1, 2):
        pairs = []
        for e in EPS:
            lam = np.array([rescaled_eigenvalue(A, x, e) for x in eta])
            pairs.append((e, float(np.abs(lam - eval_PM(t, M, e, eta)).max())))
        slopes[M] = slope(pairs)
    ok = slopes[1] >= 1.8 and slopes[2] >= 3.8
    return report(4, "symbol rate", ok, f"slopes M1 = {slopes[1]:.3f}, M2 = {slopes[2]:.3f}",
                  time.perf_counter() - t0, 30.0)


def _study(admissible, models):
    return harness.StudyConfig(
        coefficient=cosine(), grid=acceptance_grid(), eps=list(EPS), M=models, well_posed=False,
        mu1=1.0, mu2=0.5, kappa=0.1,
        profiles={"f": {"type": "gauss", "center": 0.5, "width": 0.6},
                  "yd1": {"type": "mode", "eta0": 1.0, "amp": 0.5},
                  "yd2": {"type": "random", "scale": 0.3}},
        admissible=admissible, seed=SEED)


def criterion_5():
    t0 = time.perf_counter()
    parts, ok = [], True
    for adm in ({"kind": "full"}, {"kind": "control_ball", "L_relative": 0.5}):
        rep = harness.run_study(_study(adm, [1, 2]))
        # the ball must be active at the largest eps
        if adm["kind"] != "full":
            A, grid = cosine(), acceptance_grid()
            m = ctl.exact_bloch(A, EPS[0], grid)
            L = float(rep.notes[0].split("L=")[1].split()[0])
            spec = problem(grid, np.random.default_rng(SEED), ctl.AdmissibleSet("control_ball", L))
            ok &= ctl.solve(m, spec).multiplier > 0
        for f in rep.fits:
            ok &= f.passed
        worst = min(rep.fits, key=lambda f: f.slope - f.target)
        parts.append(f"{adm['kind']}: min margin {worst.slope - worst.target:+.3f} ({worst.quantity}/{worst.model})")
    return report(5, "control/state/adjoint rates", ok, "; ".join(parts), time.perf_counter() - t0, 120.0)


def criterion_6():
    t0 = time.perf_counter()
    conf = _study({"kind": "full"}, [2])
    conf.well_posed = True
    rep = harness.run_study(conf)
    s_wp = rep.fit("u", "WP2").slope
    A, grid = cosine(), acceptance_grid()
    t = taylor_tensors(A, 2)
    eps2 = epsilon_threshold(t, 2, grid.box).value
    refused = False
    try:
        ctl.taylor_effective(t, 2, 2 * eps2, grid)
    except ctl.IllPosedError:
        refused = True
    wp = ctl.well_posed(t, 2 * eps2, grid)
    sol = ctl.solve(wp, problem(grid, np.random.default_rng(SEED)))   # check_solution runs inside
    solved = bool(np.all(np.isfinite(sol.u.coeffs)) and sol.residual < 1e-12)
    ok = s_wp >= 3.8 and refused and solved
    return report(6, "well-posed variant", ok,
                  f"WP2 control slope = {s_wp:.3f}; at eps = 2*eps2 = {2 * eps2:.4f}: "
                  f"M2 refused = {refused}, WP2 solved = {solved}", time.perf_counter() - t0)


def criterion_7():
    t0 = time.perf_counter()
    A, grid = cosine(), acceptance_grid()
    t = taylor_tensors(A, 2)
    eps = EPS[1]
    exact = ctl.exact_bloch(A, eps, grid)
    models = [exact, ctl.taylor_effective(t, 2, eps, grid), ctl.well_posed(t, eps, grid)]
    rng = np.random.default_rng(SEED)
    worst, count = 0.0, 0
    for _ in range(20):
        f, yd1, yd2 = (random_hermitian(grid, rng) for _ in range(3))
        u, d = random_hermitian(grid, rng), random_hermitian(grid, rng)
        for m in models:
            for kind in ctl.KINDS:
                adm = ctl.AdmissibleSet(kind, 1.0, exact) if kind != "full" else ctl.AdmissibleSet()
                spec = ctl.ControlProblemSpec(1.0, 0.7, 0.3, f, yd1, yd2, adm)
                mult = 0.0 if kind == "full" else float(rng.uniform(0.1, 3.0))
                h = 1e-4
                fd = (ctl.cost(m, u + d * h, spec, mult) - ctl.cost(m, u - d * h, spec, mult)) / (2 * h)
                an = ctl.gradient(m, u, spec, mult).inner(d)
                worst = max(worst, abs(fd - an) / max(abs(an), 1e-300))
                count += 1
    return report(7, "gradient check", worst <= 1e-6, f"max rel. deviation {worst:.1e} over {count} cases",
                  time.perf_counter() - t0)


def criterion_8():
    t0 = time.perf_counter()
    A, grid = cosine(), acceptance_grid()
    t = taylor_tensors(A, 2)
    rng = np.random.default_rng(SEED)
    base = problem(grid, rng)
    worst_slack, worst_vi, n = 0.0, math.inf, 0
    for eps in EPS:
        exact = ctl.exact_bloch(A, eps, grid)
        for m in (exact, ctl.taylor_effective(t, 1, eps, grid), ctl.taylor_effective(t, 2, eps, grid),
                  ctl.well_posed(t, eps, grid)):
            for kind in ctl.KINDS[1:]:
                probe = base.with_admissible(ctl.AdmissibleSet(kind, 1.0, exact))
                free = ctl.constraint_value(m, ctl.solve(m, base).u, probe)
                witness = ctl.constraint_value(m, ctl.feasibility_witness(probe), probe)
                spec = base.with_admissible(ctl.AdmissibleSet(kind, 0.5 * (free + witness), exact))
                sol = ctl.solve(m, spec)
                worst_slack = max(worst_slack, abs(sol.constraint - spec.admissible.L) * sol.multiplier)
                worst_vi = min(worst_vi, ctl.vi_residual(m, sol.u, spec, n_probes=64, rng=rng))
                n += 1
    ok = worst_slack <= 1e-8 and worst_vi >= -1e-8
    return report(8, "KKT/VI certificates", ok,
                  f"max |c-L| t* = {worst_slack:.1e}, min VI residual = {worst_vi:.1e} over {n} optima",
                  time.perf_counter() - t0)


def criterion_9():
    t0 = time.perf_counter()
    A, grid = cosine(), acceptance_grid()
    rng = np.random.default_rng(SEED)
    n_pts = 8192
    x = grid.torus_points(n_pts)
    worst = 0.0
    for _ in range(10):
        u = random_hermitian(grid, rng)
        s = adaption_synthesize(u, A, 0.125, x)
        worst = max(worst, abs(torus_norm(s, grid.length, n_pts, 1) / u.norm() - 1.0))
    return report(9, "adaption norm preservation", worst <= 1e-6, f"max rel. gap {worst:.1e} on 10 functions",
                  time.perf_counter() - t0)


def criterion_10():
    t0 = time.perf_counter()
    A, grid = cosine(), acceptance_grid()
    rng = np.random.default_rng(SEED)
    f, u = gauss(grid, 0.5, 0.6), random_hermitian(grid, rng, 0.2)
    rows, s = refinement_study(A, 0.125, u, f, [4096, 8192, 16384])
    detail = ", ".join(f"{d:.2e}" for _, d in rows)
    return report(10, "FD oracle refinement", s >= 1.9, f"discrepancies {detail}; slope {s:.3f}",
                  time.perf_counter() - t0, 120.0)


def criterion_11():
    t0 = time.perf_counter()
    A = cosine()
    big = make_grid([3.0], D_ETA, [0.125])
    inside = np.abs(big.nodes[:, 0]) <= K_HALF + 1e-12
    rng = np.random.default_rng(SEED)
    m = ctl.exact_bloch(A, 0.125, big)

    def in_k(v):
        return SpectralFunction(big, np.where(inside, v.coeffs, 0))

    spec = ctl.ControlProblemSpec(1.0, 0.5, 0.1, in_k(random_hermitian(big, rng)),
                                  in_k(random_hermitian(big, rng)), in_k(random_hermitian(big, rng)))
    worst = -math.inf
    for _ in range(20):
        u = random_hermitian(big, rng)
        worst = max(worst, ctl.cost(m, in_k(u), spec) - ctl.cost(m, u, spec))
    return report(11, "projection optimality", worst <= 0.0, f"max J(u_K) - J(u) = {worst:.3e} over 20 controls",
                  time.perf_counter() - t0)


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8, criterion_9, criterion_10, criterion_11]


@pytest.mark.parametrize("crit", CRITERIA, ids=[f"criterion_{i}" for i in range(1, 12)])
def test_acceptance(crit, capsys):
    emit(capsys, *crit())


if __name__ == "__main__":
    lines = [c()[1] for c in CRITERIA]
    print("\n".join(lines))
    sys.exit(0 if all("PASS" in line for line in lines) else 1)

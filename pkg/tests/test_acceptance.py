"""Acceptance criteria, each run at its stated tolerance and runtime budget.

Every test prints one ``[PASS]``/``[FAIL]`` line; the lines are repeated
in the pytest terminal summary.
"""

import math
import time

import numpy as np
import pytest

from quatma.baston import identity_constant
from quatma.grid import Domain, quad_norm2
from quatma.solver import DirichletProblem, SolveConfig, dirichlet_solve, hessian_det
from quatma.suites import ExperimentConfig, moore_route_sweep, run_suite

pytestmark = pytest.mark.slow


def _hard_failures(rep):
    return [c.check for c in rep.failures()]


def _value(rep, check):
    (c,) = [c for c in rep.checks if c.check == check]
    return c.value


def test_criterion_1_moore_routes(record):
    t0 = time.perf_counter()
    out = moore_route_sweep(10_000, np.random.default_rng(2024))
    dt = time.perf_counter() - t0
    dev = max(r["deviation"] for r in out.values())
    psd = min(r["psd_min"] for r in out.values())
    total = sum(r["count"] for r in out.values())
    ok = total >= 10_000 and dev <= 1e-10 and psd >= 0 and dt < 60
    assert record(1, "Moore determinant routes agree", ok,
                  f"{total} matrices, max rel deviation {dev:.2e} <= 1e-10, min PSD det {psd:.2e} >= 0", dt)


def test_criterion_2_normalization_identity(record):
    t0 = time.perf_counter()
    reps = {n: identity_constant(n, trials=50, seed=n) for n in (1, 2, 3)}
    dt = time.perf_counter() - t0
    ok = dt < 60 and all(r.spread < 1e-8 and len(r.ratios) >= 50
                         and abs(r.c_n - math.factorial(n)) <= 1e-10 * math.factorial(n)
                         for n, r in reps.items())
    detail = ", ".join(f"c_{n} = {r.c_n:.12g} (spread {r.spread:.1e})" for n, r in reps.items())
    assert record(2, "normalization identity c_n = n!", ok, detail, dt)


def test_criterion_3_operator_identities(record, tmp_path):
    t0 = time.perf_counter()
    reps = [run_suite(ExperimentConfig("identity", n, R, trials=50, out=str(tmp_path / str(n))))
            for n, R in ((1, 17), (2, 5))]
    dt = time.perf_counter() - t0
    orders = [_value(reps[0], f"Stokes d{a}: observed order (h -> h/2)") for a in (0, 1)]
    fails = [f for r in reps for f in _hard_failures(r)]
    ok = not fails and min(orders) >= 1.9 and dt < 300
    assert record(3, "operator identities and Stokes order", ok,
                  f"symbolic exact, FD <= 1e-12 x scale, Stokes orders {orders[0]:.3f}, {orders[1]:.3f} >= 1.9"
                  + (f"; failures {fails}" if fails else ""), dt)


def test_criterion_4_inequality_sweeps(record, tmp_path):
    t0 = time.perf_counter()
    rep = run_suite(ExperimentConfig("inequality", 4, 5, trials=1000, tol=1e-9, out=str(tmp_path)))
    dt = time.perf_counter() - t0
    fails = _hard_failures(rep)
    slacks = [c.value for c in rep.checks if "min slack" in c.check]
    eq = max(_value(rep, f"n={n} |q|^2: {s} side") for n in (2, 3, 4) for s in ("quaternionic", "real"))
    ok = not fails and dt < 300
    assert record(4, "inequality sweeps (1000 trials, n = 2..4)", ok,
                  f"{len(slacks)} sweeps, worst slack {min(slacks):.2e} >= -1e-9, |q|^2 sides = 8 +- {eq:.0e}"
                  + (f"; failures {fails}" if fails else ""), dt)


def _field(D, fn):
    return np.array(np.broadcast_to(fn(D.coords()), D.shape), dtype=float)


def test_criterion_5_manufactured_solutions(record):
    t0 = time.perf_counter()
    cfg = SolveConfig(tol_fp=1e-10, tol_lin=1e-11)
    D1 = Domain.ball(1, 33)
    q2 = _field(D1, quad_norm2)
    r1 = dirichlet_solve(DirichletProblem(D1, q2, 8.0), cfg)
    err1 = float(np.max(np.abs(r1.u - q2)[D1.closure]))

    D2 = Domain.box(2, 5)
    u2 = _field(D2, lambda x: sum(x[i] ** 2 for i in range(4)) + 2 * sum(x[i] ** 2 for i in range(4, 8))
                + 0.3 * x[0] * x[4])
    det, _ = hessian_det(u2, D2)
    g2 = float(np.mean(det[D2.interior]))
    const = float(np.ptp(det[D2.interior])) <= 1e-9 * g2
    r2 = dirichlet_solve(DirichletProblem(D2, u2, g2), cfg)
    err2 = float(np.max(np.abs(r2.u - u2)[D2.closure]))

    hom = {}
    conv = r1.converged and r2.converged
    for n, D, g in ((1, D1, _field(D1, lambda x: 1.0 + quad_norm2(x))), (2, D2, 1.0)):
        base = dirichlet_solve(DirichletProblem(D, 0.0, g), cfg)
        conv &= base.converged
        worst = 0.0
        for lam in (0.25, 0.5, 2.0, 4.0):
            s = dirichlet_solve(DirichletProblem(D, 0.0, lam * np.asarray(g)), cfg)
            conv &= s.converged
            worst = max(worst, float(np.max(np.abs(s.u - lam ** (1 / n) * base.u)[D.closure])))
        hom[n] = worst
    dt = time.perf_counter() - t0
    ok = conv and const and err1 <= 1e-6 and err2 <= 1e-5 and max(hom.values()) <= 10 * cfg.tol_fp
    assert record(5, "solver manufactured solutions", ok,
                  f"n=1 ball 33^4 err {err1:.1e} <= 1e-6, n=2 box 5^8 err {err2:.1e} <= 1e-5, "
                  f"homogeneity {hom[1]:.1e} / {hom[2]:.1e} <= {10 * cfg.tol_fp:.0e}", dt)


def test_criterion_6_stability_bounds(record, tmp_path):
    t0 = time.perf_counter()
    rep = run_suite(ExperimentConfig("stability", 1, 21, trials=20, out=str(tmp_path)))
    dt = time.perf_counter() - t0
    fails = _hard_failures(rep)
    ok = not fails and dt < 3600
    k = rep.constants
    assert record(6, "L-infinity bounds, stability, superadditivity, comparison", ok,
                  f"C_fit {k['C_fit']:.4f} on 20 calibration cases; 20 held-out cases and "
                  f"{k['pairs_checked']} pairs, 0 violations" + (f"; failures {fails}" if fails else ""), dt)


def test_criterion_7_subsolution_pipeline(record, tmp_path):
    t0 = time.perf_counter()
    rep = run_suite(ExperimentConfig("subsolution", 1, 33, out=str(tmp_path)))
    dt = time.perf_counter() - t0
    fails = _hard_failures(rep)
    sc = rep.constants["smooth-selfconsistency"]
    ok = not fails and sc["sup_error"] <= 1e-3 and 0.9 <= sc["mass_ratio"] <= 1.1 and dt < 3600
    assert record(7, "subsolution pipeline self-consistency", ok,
                  f"sup|u - v| {sc['sup_error']:.2e} <= 1e-3, mass ratio {sc['mass_ratio']:.4f} in [0.9, 1.1], "
                  "half-mass and corollary-sum bounds never violated"
                  + (f"; failures {fails}" if fails else ""), dt)


def test_criterion_8_weak_convergence_and_cln(record, tmp_path):
    t0 = time.perf_counter()
    rep = run_suite(ExperimentConfig("convergence", 1, 33, out=str(tmp_path)))
    dt = time.perf_counter() - t0
    fails = _hard_failures(rep)
    gaps = [c.value for c in rep.checks if c.check.endswith("final relative mass gap")]
    stab = _value(rep, "CLN constant: max(C_hold/C_fit, C_fit/C_hold)")
    ok = not fails and max(gaps) < 1e-2 and stab <= 2 and dt < 600
    assert record(8, "weak convergence and CLN constant", ok,
                  f"monotone mass gaps, final max {max(gaps):.1e} < 1e-2, CLN factor {stab:.3f} <= 2"
                  + (f"; failures {fails}" if fails else ""), dt)

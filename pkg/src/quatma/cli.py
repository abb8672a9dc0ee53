"""Command line: ``quatma <suite> --n N --grid R [...]`` and ``quatma solve``.

Exit status is 0 iff every hard check passes (for ``solve``: the fixed
point converged).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import sympy as sp

from .grid import Domain, sample, write_grid
from .solver import (DirichletProblem, SolveConfig, config_dict, dirichlet_solve,
                     write_convergence_csv)
from .suites import SUITES, ExperimentConfig, SuiteReport, run_suite


def _load_config(path) -> dict:
    if path is None:
        return {}
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict) or any(isinstance(v, (dict, list)) for v in data.values()):
        raise SystemExit("config must be a flat JSON object of key/value pairs")
    return data


def _merge(args) -> dict:
    data = _load_config(args.config)
    for key, val in (("n", args.n), ("grid", args.grid), ("seed", args.seed), ("tol", args.tol),
                     ("out", args.out), ("trials", getattr(args, "trials", None)),
                     ("domain", getattr(args, "domain", None))):
        if val is not None:
            data[key] = val
    return data


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat JSON file of key/value settings")
    p.add_argument("--out", help="output directory for CSV, JSON and grid files")
    p.add_argument("--seed", type=int)
    p.add_argument("--n", type=int, help="quaternionic dimension (required here or in the config)")
    p.add_argument("--grid", type=int, help="nodes per axis (required here or in the config)")
    p.add_argument("--tol", type=float, help="suite tolerance (slack for inequalities, tol_fp for solve)")
    p.add_argument("--domain", choices=("ball", "box"))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="quatma", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in SUITES:
        p = sub.add_parser(name, help=f"run the {name} suite")
        _common(p)
        p.add_argument("--trials", type=int)
    p = sub.add_parser("solve", help="solve det(quaternionic Hessian u) = g with u = phi on the boundary")
    _common(p)
    p.add_argument("--phi", required=True, help="boundary data, sympy expression in x0, x1, ...")
    p.add_argument("--g", required=True, help="nonnegative density, sympy expression in x0, x1, ...")
    p.add_argument("--dump-grid", action="store_true", help="write the solution in the grid format")
    p.add_argument("--exact", help="optional exact solution for an error report")
    return ap


def expression_field(text: str, domain: Domain, mask=None) -> np.ndarray:
    syms = sp.symbols(f"x0:{domain.dim}")
    expr = sp.sympify(text, locals={str(s): s for s in syms})
    extra = expr.free_symbols - set(syms)
    if extra:
        raise SystemExit(f"unknown symbols in {text!r}: {sorted(map(str, extra))}")
    fn = sp.lambdify(syms, expr, "numpy")
    return sample(lambda x: fn(*x), domain, mask)


def _domain(data: dict) -> Domain:
    n, R = int(data["n"]), int(data["grid"])
    kind = data.get("domain") or ("ball" if n == 1 else "box")
    if kind == "ball":
        return Domain.ball(n, R, radius=float(data.get("radius", 1.0)), pad=int(data.get("pad", 2)))
    return Domain.box(n, R, float(data.get("lower", -1.0)), float(data.get("upper", 1.0)))


def run_solve(args) -> int:
    data = _merge(args)
    for k in ("n", "grid"):
        if data.get(k) is None:
            raise SystemExit(f"--{k} is required (no default)")
    D = _domain(data)
    tol_fp = float(data.get("tol", 1e-8))
    cfg = SolveConfig(tol_fp=tol_fp, tol_lin=min(1e-11, tol_fp),
                      max_iter=int(data.get("max_iter", 200)), theta=float(data.get("theta", 1.0)))
    phi = expression_field(args.phi, D)
    g = expression_field(args.g, D, D.interior)
    res = dirichlet_solve(DirichletProblem(D, phi, g), cfg)
    rep = SuiteReport("solve")
    rep.add("fixed point converged", "Dirichlet problem", float(res.converged), 1, "==")
    rep.add("Monge-Ampere residual sup", "Dirichlet problem", res.residual.sup, float("inf"), hard=False)
    rep.add("Monge-Ampere residual L1", "Dirichlet problem", res.residual.l1, float("inf"), hard=False)
    if args.exact:
        ex = expression_field(args.exact, D)
        err = float(np.max(np.abs(res.u - ex)[D.closure]))
        rep.add("sup error against exact", "Dirichlet problem", err, float("inf"), hard=False)
    rep.constants.update(iterations=res.iterations, projections=res.projections,
                         solver=config_dict(cfg), domain=D.describe())
    out = Path(data["out"]) if data.get("out") else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_convergence_csv(out / "convergence.csv", res)
        rep.write_csv(out / "solve.csv")
        rep.write_summary(out / "solve_summary.json")
        if args.dump_grid:
            write_grid(out / "u.bin", res.u, D, {"phi": args.phi, "g": args.g})
    print("\n".join(rep.lines()))
    return 0 if rep.passed else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "solve":
        return run_solve(args)
    data = _merge(args)
    try:
        cfg = ExperimentConfig.from_mapping(args.command, data)
    except ValueError as exc:
        raise SystemExit(str(exc)) from None
    rep = run_suite(cfg)
    print("\n".join(rep.lines()))
    print(f"{cfg.suite}: {'PASS' if rep.passed else 'FAIL'} "
          f"({len(rep.failures())} hard failures, {rep.runtimes.get('total', 0):.1f} s)")
    return 0 if rep.passed else 1


if __name__ == "__main__":
    sys.exit(main())

"""Run every experiment suite at its production setting and collect the reports.

    python scripts/run_suites.py --out results [--only identity stability]
"""

import argparse
import time
from pathlib import Path

from quatma.suites import ExperimentConfig, run_suite

PRODUCTION = {
    "identity": [dict(n=1, resolution=17, trials=50), dict(n=2, resolution=5, trials=50)],
    "inequality": [dict(n=4, resolution=5, trials=1000)],
    "stability": [dict(n=1, resolution=21, trials=20)],
    "convergence": [dict(n=1, resolution=33)],
    "subsolution": [dict(n=1, resolution=33)],
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--only", nargs="*", choices=sorted(PRODUCTION))
    args = ap.parse_args()
    ok = True
    for suite, runs in PRODUCTION.items():
        if args.only and suite not in args.only:
            continue
        for kw in runs:
            out = Path(args.out) / f"{suite}_n{kw['n']}"
            t0 = time.perf_counter()
            rep = run_suite(ExperimentConfig(suite, seed=args.seed, out=str(out), **kw))
            ok &= rep.passed
            print(f"{suite:12s} n={kw['n']} grid={kw['resolution']:3d}: "
                  f"{'PASS' if rep.passed else 'FAIL'} in {time.perf_counter() - t0:6.1f} s -> {out}")
    raise SystemExit(0 if ok else 1)


if __name__ == "__main__":
    main()

"""Run the full identity suite over the catalog and print one summary line per entry.

    python3 scripts/run_catalog_suite.py --grid 4
    python3 scripts/run_catalog_suite.py --random 10 --seed 3 --report reports/
"""
from __future__ import annotations

import argparse
import time
from pathlib import Path

from nambugeom import verify as vf
from nambugeom.embedding import resolve

ENTRIES = ["catalog:sphere?r=1", "catalog:torus?R=2,r=1", "catalog:graph2?f=u1^2-u2^2",
           "catalog:clifford", "catalog:s3?r=1", "catalog:graph3", "catalog:plane"]


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grid", type=int, default=4)
    ap.add_argument("--random", type=int)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--report", type=Path, help="directory for one JSON report per entry")
    args = ap.parse_args()

    failed = 0
    t_all = time.perf_counter()
    for ref in ENTRIES:
        spec = resolve(ref)
        if args.random:
            pts = vf.random_points(spec, args.random, args.seed)
        else:
            pts = vf.grid_points(spec, args.grid)
        t0 = time.perf_counter()
        rep = vf.run_suite(spec, pts)
        dt = time.perf_counter() - t0
        failed += not rep.all_passed
        worst = max((c.residual for c in rep.checks if c.residual is not None), default=0.0)
        print(f"{rep.summary_line()}  (max residual {worst:.1e}, {dt:.1f} s)")
        if args.report:
            args.report.mkdir(parents=True, exist_ok=True)
            (args.report / f"{spec.name}.json").write_text(rep.to_json(), encoding="utf-8")
    print(f"total {time.perf_counter() - t_all:.1f} s")
    return 1 if failed else 0


if __name__ == "__main__":
    raise SystemExit(main())

#!/usr/bin/env python3
"""Failure / recovery / coordination benchmark on the weight-corruption workload.

Runs the baseline, full-MSTH and regulators-only arms over N seeds, escalates
the corruption magnitude until the baseline fails, then compares regulator
FLOPs with the coordinator on and off. Writes a JSON record to --out.

    python3 scripts/failure_benchmark.py --seeds 20 --out runs/failure_benchmark.json
"""
import argparse
import json
import time
from dataclasses import asdict
from pathlib import Path

from msth.benchmarks import DEFAULT_LADDER, coordination_benchmark, failure_benchmark


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--ladder", type=float, nargs="+", default=list(DEFAULT_LADDER))
    ap.add_argument("--out", type=Path, default=Path("runs/failure_benchmark.json"))
    args = ap.parse_args()

    t0 = time.perf_counter()
    fb = failure_benchmark(seeds=args.seeds, ladder=tuple(args.ladder))
    print(f"{'magnitude':>10} {'arm':>16} {'failures':>9} {'recovered':>10}")
    for arms in (fb.nominal, fb.escalated):
        for label, arm in arms.items():
            print(f"{arm.magnitude:>10g} {label:>16} {arm.failures:>9d} {arm.recovered_fraction:>10.2f}")
    print("baseline ladder (magnitude, failures):", fb.ladder_trace)

    coord = {}
    mags = [args.ladder[0]] + ([fb.escalated_magnitude] if fb.escalated_magnitude not in (None, args.ladder[0]) else [])
    for mag in mags:
        cb = coordination_benchmark(mag, seeds=args.seeds)
        coord[str(mag)] = {**asdict(cb), "reductions": cb.reductions, "mean_reduction": cb.mean_reduction}
        print(f"magnitude {mag:g}: coordinated FLOPs <= uncoordinated on "
              f"{sum(a <= b for a, b in zip(cb.flops_on, cb.flops_off))}/{args.seeds} seeds, "
              f"mean reduction {100 * cb.mean_reduction:.1f}%")

    args.out.parent.mkdir(parents=True, exist_ok=True)
    record = {
        "seeds": args.seeds,
        "ladder_trace": fb.ladder_trace,
        "escalated_magnitude": fb.escalated_magnitude,
        "nominal": {k: {**asdict(v), "recovered_fraction": v.recovered_fraction} for k, v in fb.nominal.items()},
        "escalated": {k: {**asdict(v), "recovered_fraction": v.recovered_fraction} for k, v in fb.escalated.items()},
        "coordination": coord,
    }
    args.out.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    print(f"wrote {args.out} ({time.perf_counter() - t0:.0f}s)")


if __name__ == "__main__":
    main()

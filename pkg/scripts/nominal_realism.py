#!/usr/bin/env python3
"""Unperturbed full-MSTH run: intervention ratios against the expected profile.

    python3 scripts/nominal_realism.py --steps 2000
"""
import argparse

from msth.benchmarks import nominal_realism, nominal_spec
from msth.health import EXPECTED_RATIOS


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args()

    s = nominal_realism(nominal_spec(max_steps=args.steps, seed=args.seed))
    print(f"val accuracy {s.final_val_mean:.3f}, failures {s.failures}")
    print(f"{'scale':<8} {'count':>6} {'ratio':>7} {'expected':>9} {'in band':>8}")
    for (label, count), exp in zip(s.counts.items(), EXPECTED_RATIOS):
        r = s.ratios[label]
        print(f"{label:<8} {count:>6} {r:>7.3f} {exp:>9.2f} {str(abs(r - exp) <= 0.15):>8}")
    print(f"coordination events {s.coordination_events}, realism score {s.realism_score:.3f}")
    print("enhancement estimate (telemetry only):", s.enhancement)


if __name__ == "__main__":
    main()

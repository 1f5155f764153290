#!/usr/bin/env python3
"""Scale-combination ablation on the weight-corruption workload.

Cells: unregulated baseline plus every scale preset, each at the chosen
corruption magnitude, replicated over seeds. Writes ablation.{csv,json}.

    python3 scripts/scale_ablation.py --magnitude 80 --replicates 20 --workers 4
"""
import argparse

from msth.benchmarks import perturbation_spec
from msth.harness import ablate
from msth.network import SCALE_PRESETS


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--magnitude", type=float, default=80.0)
    ap.add_argument("--replicates", type=int, default=20)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="runs/scale_ablation")
    args = ap.parse_args()

    base = perturbation_spec(args.magnitude, output_dir=args.out)
    matrix = [{"regulation": "false", "adaptive_lr": "false", "scales": "none"}]
    matrix += [{"scales": name} for name in SCALE_PRESETS if name != "none"]
    matrix += [{"scales": "full", "adaptive_lr": "false"}, {"scales": "full", "coordination": "false"}]
    rows = ablate(base, matrix, replicates=args.replicates, workers=args.workers)
    print(f"{'cell':<48} {'fail':>5} {'recov':>6} {'val':>6} {'flops':>10}")
    for r in rows:
        label = ",".join(f"{k}={v}" for k, v in r["overrides"].items())
        rec = "" if r["recovered_fraction"] is None else f"{r['recovered_fraction']:.2f}"
        print(f"{label:<48} {r['failures']:>5} {rec:>6} {r['final_val_mean']:>6.3f} {r['regulator_flops_mean']:>10.0f}")


if __name__ == "__main__":
    main()

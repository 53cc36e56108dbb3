"""End-to-end iso-compute scaling study with the synthetic high-fidelity oracle.

Builds the nested levels and the holdout, trains the surrogate families over
several seeds, writes the MSE records and the fitted report.
"""
import argparse
from pathlib import Path

from ddscale import dataset, scaling, surrogate


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--levels", type=int, nargs="+", default=[1, 2, 3, 4])
    ap.add_argument("--seeds", type=int, default=6)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--families", nargs="+", default=["pointwise-linear"], choices=surrogate.FAMILIES)
    ap.add_argument("--out", default="scaling_out")
    args = ap.parse_args()

    built = dataset.nested_levels(args.levels, jobs=args.jobs)
    _, holdout = dataset.build_holdout(16, seed=1, jobs=args.jobs)
    levels = {}
    for manifest, snaps in built.values():
        dataset.attach_synthetic_hf(snaps)
        levels[manifest.snapshot_count] = snaps
    dataset.attach_synthetic_hf(holdout)

    confs = [surrogate.SurrogateConfig(family=f) for f in args.families]
    records = surrogate.run_scaling_experiment(levels, holdout, confs, seeds=range(args.seeds), jobs=args.jobs)
    out = Path(args.out)
    surrogate.write_mse_csv(out / "mse.csv", records)
    stats = scaling.aggregate(records)
    for (n, d), s in stats.items():
        print(f"N={n:3d} D={d:4d}: mean {s.mean:.4e}  std {s.std:.1e}  min {s.min:.4e}  max {s.max:.4e}")
    if len({d for _, d in stats if scaling.SMALL_MAX <= d <= scaling.POWER_MAX}) >= 3:
        report = scaling.build_report(stats)
        scaling.write_report_csv(out / "report.csv", report)
        scaling.plot_report(out, stats, report)
        for n, fit in report.fits.items():
            print(f"N={n}: a2 {fit.a2:.4g}  beta {fit.beta:.4f}  R2 {fit.r_squared:.3f}")


if __name__ == "__main__":
    main()

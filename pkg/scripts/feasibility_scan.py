"""Tip-chord feasibility of every Saltelli level and of LHS holdouts over a range of seeds."""
import argparse

from ddscale import doe, geom


def infeasible(samples):
    out = []
    for cs, row in zip(samples.call_signs, samples.scaled_samples):
        p = geom.solve_planform(geom.DesignVector.from_array(row))
        if p.tip_chord < 0:
            out.append((cs, p.tip_chord))
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=10)
    args = ap.parse_args()
    for level in range(1, 7):
        bad = infeasible(doe.saltelli_level(level))
        names = sorted({cs for cs, _ in bad})
        print(f"level {level}: {len(bad)} rows with negative tip chord, distinct {names}")
    for seed in range(args.seeds):
        bad = infeasible(doe.lhs_holdout(16, seed=seed))
        print(f"holdout seed {seed}: {len(bad)} infeasible")


if __name__ == "__main__":
    main()

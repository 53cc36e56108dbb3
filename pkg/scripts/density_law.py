"""Average nearest-neighbour distance per Saltelli level and the fitted density law."""
import argparse

from ddscale import scaling


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--skip", type=int, default=16)
    ap.add_argument("--with-duplicates", action="store_true", help="keep repeated rows in the distance average")
    args = ap.parse_args()
    g, h = scaling.level_density(range(1, 7), skip=args.skip, unique=not args.with_duplicates)
    for level, (gi, hi) in enumerate(zip(g, h), start=1):
        print(f"level {level}: G = {gi:4d}  h = {hi:.4f}")
    fit = scaling.fit_density(g, h)
    print(f"fit: h = {fit.c:.4f} G^-{fit.m:.4f}")
    for gstar in (49, 52, 63):
        pd = scaling.per_dim_density(gstar, 6, fit)
        print(f"G* = {gstar}: h* = {pd['hstar']:.3f}  grid {pd['grid_equivalent']:.2f}  "
              f"spacing {pd['spacing_equivalent']}  Saltelli P {pd['saltelli_base']:.2f} -> {pd['saltelli_base_level']}")


if __name__ == "__main__":
    main()

"""Optimal dataset size, geometry count and sampling distance from the published fits."""
from ddscale import scaling


def main():
    print(f"{'model':>12s} {'N':>10s} {'a2':>7s} {'beta':>7s} {'target':>9s} {'D*':>5s} {'G*':>6s} {'h*':>6s}")
    for r in scaling.reproduce_dstar():
        print(f"{r['model']:>12s} {r['N']:>10.3g} {r['a2']:>7.4f} {r['beta']:>7.4f} {r['target_mse']:>9.2e} "
              f"{r['dstar']:>5d} {r['gstar']:>6.1f} {r['hstar']:>6.3f}")
    trend = scaling.fit_beta_vs_n(scaling.PUBLISHED_N, scaling.PUBLISHED_BETA, exclude=(3,))
    print(f"beta vs N log-log slope (largest model excluded): {trend.slope:.4f}")
    print(f"largest residual with all models: index {trend.largest_residual}")


if __name__ == "__main__":
    main()

"""Aggregation, power-law fitting and dataset-size inversion for scaling studies."""
from __future__ import annotations

import csv
import logging
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

AOAS_PER_GEOMETRY = 5
SMALL_MAX = 80
POWER_MAX = 320

# published reduced-form coefficients, target MSEs and model sizes
PUBLISHED_MODELS = ("small", "medium", "intermediate", "large")
PUBLISHED_A2 = (1.2617, 1.7354, 2.4044, 1.7778)
PUBLISHED_BETA = (0.5484, 0.6220, 0.6654, 0.6128)
PUBLISHED_TARGET_MSE = (5.97e-2, 5.66e-2, 5.21e-2, 5.88e-2)
PUBLISHED_N = (0.103e6, 0.538e6, 1.144e6, 2.411e6)
PUBLISHED_DENSITY = (0.62, 0.15)


class FitError(RuntimeError):
    """Non-convergent or ill-posed fit; ``last`` holds the final iterate when available."""

    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


@dataclass
class GroupStats:
    model_size: int
    dataset_size: int
    mean: float
    std: float
    min: float
    max: float
    count: int
    single: bool = False


@dataclass
class PowerLawFit:
    a2: float
    beta: float
    r_squared: float
    covariance: np.ndarray
    iterations: int = 0
    dataset_sizes: tuple = ()
    a1: float | None = None
    alpha: float | None = None
    eps0: float | None = None

    def predict(self, d):
        return self.a2 * np.asarray(d, dtype=float) ** (-self.beta)


@dataclass
class DensityFit:
    c: float
    m: float

    def h(self, g):
        return self.c * np.asarray(g, dtype=float) ** (-self.m)


@dataclass
class BetaTrend:
    slope: float
    intercept: float
    residuals: dict
    outliers: list
    largest_residual: float


@dataclass
class ScalingReport:
    region: tuple[int, int]
    fits: dict
    dstar: dict
    gstar: dict
    hstar: dict
    per_dim: dict
    beta_trend: BetaTrend | None = None
    density: DensityFit | None = None
    regions: dict = field(default_factory=dict)


# --------------------------------------------------------------------------
# Aggregation
# --------------------------------------------------------------------------

def aggregate(records) -> dict[tuple[int, int], GroupStats]:
    """Per (N, D) sample statistics; std uses n-1 and is 0 for a single trial."""
    groups = defaultdict(list)
    for r in records:
        groups[(int(r.model_size), int(r.dataset_size))].append(float(r.test_mse))
    out = {}
    for key in sorted(groups):
        v = np.array(groups[key])
        single = len(v) == 1
        std = 0.0 if single else float(np.std(v, ddof=1))
        if single:
            log.warning("group N=%d D=%d has a single record; std set to 0", *key)
        out[key] = GroupStats(key[0], key[1], float(v.mean()), std, float(v.min()), float(v.max()), len(v), single)
    return out


def stats_for_model(stats: dict, model_size: int) -> list[GroupStats]:
    return [s for (n, _), s in sorted(stats.items()) if n == model_size]


# --------------------------------------------------------------------------
# Power-law fit
# --------------------------------------------------------------------------

def _loglog_ols(x, y) -> tuple[float, float]:
    """Slope and intercept of log y against log x."""
    lx, ly = np.log(x), np.log(y)
    A = np.column_stack([lx, np.ones_like(lx)])
    (slope, intercept), *_ = np.linalg.lstsq(A, ly, rcond=None)
    return float(slope), float(intercept)


def _levenberg_marquardt(residual, jacobian, p0, max_iter=500, rtol=1e-10):
    p = np.asarray(p0, dtype=float)
    lam = 1e-3
    r = residual(p)
    cost = float(r @ r)
    for it in range(1, max_iter + 1):
        J = jacobian(p)
        JtJ = J.T @ J
        g = J.T @ r
        while True:
            step = np.linalg.solve(JtJ + lam * np.diag(np.diag(JtJ)), -g)
            trial = p + step
            r_new = residual(trial)
            cost_new = float(r_new @ r_new)
            if np.all(np.isfinite(r_new)) and cost_new <= cost:
                lam = max(lam / 10.0, 1e-12)
                break
            lam *= 10.0
            if lam > 1e12:
                # no descent direction left: at the optimum to machine precision
                return p, it, JtJ
        done = np.all(np.abs(step) <= rtol * np.maximum(np.abs(p), 1e-300))
        p, r, cost = trial, r_new, cost_new
        if done:
            return p, it, J.T @ J
    raise FitError(f"Levenberg-Marquardt did not converge in {max_iter} iterations", last=p)


def fit_power_law(d, eps, std=None, max_iter: int = 500) -> PowerLawFit:
    """Weighted damped least squares for eps = a2 * D**(-beta).

    Residuals are divided by the trial standard deviations; when any std is
    zero, or none are given, the weights are uniform. The start point comes
    from a log-log line fit.
    """
    d = np.asarray(d, dtype=float)
    eps = np.asarray(eps, dtype=float)
    if len(np.unique(d)) < 3:
        raise FitError("need at least three distinct dataset sizes")
    if np.any(eps <= 0) or np.any(d <= 0):
        raise FitError("dataset sizes and errors must be positive")
    if std is None or np.any(np.asarray(std) <= 0):
        w = np.ones_like(eps)
    else:
        w = 1.0 / np.asarray(std, dtype=float)
    slope, intercept = _loglog_ols(d, eps)
    p0 = np.array([math.exp(intercept), -slope])
    logd = np.log(d)

    def residual(p):
        return w * (p[0] * d ** (-p[1]) - eps)

    def jacobian(p):
        f = d ** (-p[1])
        return np.column_stack([w * f, -w * p[0] * f * logd])

    p, iters, JtJ = _levenberg_marquardt(residual, jacobian, p0, max_iter)
    r = residual(p)
    ybar = np.sum(w**2 * eps) / np.sum(w**2)
    sst = float(np.sum((w * (eps - ybar)) ** 2))
    sse = float(r @ r)
    r2 = 1.0 - sse / sst if sst > 0 else 1.0
    dof = max(len(d) - 2, 1)
    try:
        cov = np.linalg.inv(JtJ) * (sse / dof)
    except np.linalg.LinAlgError:
        cov = np.full((2, 2), np.nan)
    return PowerLawFit(float(p[0]), float(p[1]), float(r2), cov, iters, tuple(d.tolist()))


def fit_stats(stats: list[GroupStats], region=(SMALL_MAX, POWER_MAX)) -> PowerLawFit:
    lo, hi = region
    sel = [s for s in stats if lo <= s.dataset_size <= hi]
    return fit_power_law([s.dataset_size for s in sel], [s.mean for s in sel], [s.std for s in sel])


def fit_full_form(model_sizes, dataset_sizes, eps, max_iter: int = 2000) -> dict:
    """Joint fit of eps = a1 N^-alpha + a2 D^-beta + eps0 across model sizes."""
    n = np.asarray(model_sizes, dtype=float)
    d = np.asarray(dataset_sizes, dtype=float)
    e = np.asarray(eps, dtype=float)
    if len(e) < 5:
        raise FitError("need at least five observations for the five-parameter form")
    slope, intercept = _loglog_ols(d, e)
    p0 = np.array([0.1 * e.mean() * n.mean() ** 0.3, 0.3, math.exp(intercept), max(-slope, 0.1), 0.5 * e.min()])
    ln, ld = np.log(n), np.log(d)

    def residual(p):
        return p[0] * n ** (-p[1]) + p[2] * d ** (-p[3]) + p[4] - e

    def jacobian(p):
        fn, fd = n ** (-p[1]), d ** (-p[3])
        return np.column_stack([fn, -p[0] * fn * ln, fd, -p[2] * fd * ld, np.ones_like(e)])

    p, iters, _ = _levenberg_marquardt(residual, jacobian, p0, max_iter)
    return dict(zip(("a1", "alpha", "a2", "beta", "eps0"), map(float, p)), iterations=iters)


def invert_dstar(a2: float, beta: float, target_mse: float,
                 aoas_per_geometry: int = AOAS_PER_GEOMETRY) -> tuple[int, float]:
    """D* = round((target / a2) ** (-1 / beta)); also returns G* = D* / aoas."""
    if not target_mse > 0:
        raise ValueError("target_mse must be positive")
    if not (a2 > 0 and beta > 0):
        raise ValueError("a2 and beta must be positive")
    dstar = int(round((target_mse / a2) ** (-1.0 / beta)))
    return dstar, dstar / aoas_per_geometry


def invert_fit(fit: PowerLawFit, target_mse: float, aoas_per_geometry: int = AOAS_PER_GEOMETRY):
    return invert_dstar(fit.a2, fit.beta, target_mse, aoas_per_geometry)


def reproduce_dstar() -> list[dict]:
    """D*, G* and h* for the published coefficients and target errors."""
    dens = DensityFit(*PUBLISHED_DENSITY)
    rows = []
    for name, a2, beta, target, n in zip(PUBLISHED_MODELS, PUBLISHED_A2, PUBLISHED_BETA,
                                         PUBLISHED_TARGET_MSE, PUBLISHED_N):
        dstar, gstar = invert_dstar(a2, beta, target)
        rows.append({"model": name, "N": n, "a2": a2, "beta": beta, "target_mse": target,
                     "dstar": dstar, "gstar": gstar, "hstar": float(dens.h(gstar))})
    return rows


# --------------------------------------------------------------------------
# Sampling density
# --------------------------------------------------------------------------

def fit_density(g, h) -> DensityFit:
    """Log-log least squares for h = c * G**(-m)."""
    g = np.asarray(g, dtype=float)
    h = np.asarray(h, dtype=float)
    if len(g) < 3:
        raise FitError("need at least three levels")
    if np.any(h <= 0):
        raise FitError("average nearest-neighbour distances must be positive")
    slope, intercept = _loglog_ols(g, h)
    return DensityFit(math.exp(intercept), -slope)


def level_density(levels=range(1, 7), space=None, skip: int = 16, unique: bool = True) -> tuple[list, list]:
    """(G, h) for each Saltelli level.

    G is the nominal row count. With ``unique`` the distance is computed over
    distinct rows, since a coordinate shared by A and B repeats a design
    verbatim and would otherwise contribute a zero distance.
    """
    from . import doe

    gs, hs = [], []
    for level in levels:
        s = doe.saltelli_level(level, space, skip)
        u = np.unique(s.unit_samples, axis=0) if unique else s.unit_samples
        gs.append(len(s))
        hs.append(doe.avg_nn_distance(u))
    return gs, hs


def per_dim_density(gstar: float, dims: int, fit: DensityFit, reference_count: int = 8) -> dict:
    """Three readings of a per-dimension sample count, reported side by side."""
    if gstar < 1:
        raise ValueError("G* must be >= 1")
    hstar = float(fit.h(gstar))
    grid = gstar ** (1.0 / dims)
    spacing = math.ceil(1.0 / (2.0 * hstar / math.sqrt(dims))) + 1
    p_raw = gstar / (dims + 2)
    p_level = 1 << max(0, math.ceil(math.log2(p_raw))) if p_raw > 0 else 1
    out = {
        "hstar": hstar,
        "grid_equivalent": grid,
        "spacing_equivalent": spacing,
        "saltelli_base": p_raw,
        "saltelli_base_level": p_level,
    }
    out["matches"] = [k for k in ("grid_equivalent", "spacing_equivalent", "saltelli_base_level")
                      if round(out[k]) == reference_count]
    return out


# --------------------------------------------------------------------------
# Exponent trend and regions
# --------------------------------------------------------------------------

def fit_beta_vs_n(n, beta, exclude=()) -> BetaTrend:
    """Log-log line of beta against model size with residual outlier flags."""
    n = np.asarray(n, dtype=float)
    beta = np.asarray(beta, dtype=float)
    keep = np.array([i not in set(exclude) for i in range(len(n))])
    if keep.sum() < 2:
        raise FitError("need at least two points after exclusion")
    slope, intercept = _loglog_ols(n[keep], beta[keep])
    pred = np.exp(intercept) * n ** slope
    res = np.log(beta) - np.log(pred)
    fit_res = res[keep]
    sigma = float(np.std(fit_res, ddof=2)) if keep.sum() > 2 else 0.0
    outliers = [i for i in range(len(n)) if sigma > 0 and abs(res[i]) > 3.0 * sigma]
    largest = int(np.argmax(np.abs(res)))
    return BetaTrend(slope, intercept, {i: float(r) for i, r in enumerate(res)}, outliers, largest)


def classify_regions(dataset_sizes, small_max: int = SMALL_MAX, power_max: int = POWER_MAX) -> dict:
    """Region labels per D; the boundary sizes belong to both neighbouring regions."""
    out = {}
    for d in dataset_sizes:
        labels = []
        if d <= small_max:
            labels.append("small-data")
        if small_max <= d <= power_max:
            labels.append("power-law")
        if d >= power_max:
            labels.append("asymptotic")
        out[int(d)] = labels
    return out


# --------------------------------------------------------------------------
# Report
# --------------------------------------------------------------------------

def build_report(stats: dict, target_mse: dict | None = None, region=(SMALL_MAX, POWER_MAX),
                 density: DensityFit | None = None, dims: int = 6) -> ScalingReport:
    density = density or DensityFit(*PUBLISHED_DENSITY)
    sizes = sorted({n for n, _ in stats})
    fits, dstar, gstar, hstar, per_dim = {}, {}, {}, {}, {}
    for n in sizes:
        fit = fit_stats(stats_for_model(stats, n), region)
        fits[n] = fit
        target = (target_mse or {}).get(n)
        if target is None:
            target = min(s.mean for s in stats_for_model(stats, n))
        d, g = invert_dstar(fit.a2, fit.beta, target)
        dstar[n], gstar[n] = d, g
        hstar[n] = float(density.h(g))
        per_dim[n] = per_dim_density(g, dims, density)
    trend = fit_beta_vs_n(sizes, [fits[n].beta for n in sizes]) if len(sizes) >= 2 else None
    regions = classify_regions(sorted({d for _, d in stats}), *region)
    return ScalingReport(tuple(region), fits, dstar, gstar, hstar, per_dim, trend, density, regions)


def write_report_csv(path, report: ScalingReport) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["N", "a2", "beta", "r_squared", "dstar", "gstar", "hstar", "region_lo", "region_hi"])
        for n, fit in report.fits.items():
            w.writerow([n, repr(fit.a2), repr(fit.beta), repr(fit.r_squared), report.dstar[n],
                        repr(report.gstar[n]), repr(report.hstar[n]), *report.region])
    return path


def write_stats_csv(path, stats: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        cols = list(asdict(next(iter(stats.values()))).keys())
        w.writerow(cols)
        for s in stats.values():
            w.writerow([repr(v) if isinstance(v, float) else v for v in asdict(s).values()])
    return path


def plot_report(directory, stats: dict, report: ScalingReport) -> list[Path]:
    """Learning curves with region shading, fit overlays and the beta-vs-N trend as SVG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    plt.rcParams["svg.hashsalt"] = "ddscale"
    fig, ax = plt.subplots(figsize=(6, 4))
    lo, hi = report.region
    all_d = sorted({d for _, d in stats})
    ax.axvspan(min(all_d) * 0.9, lo, color="0.92")
    ax.axvspan(hi, max(all_d) * 1.1, color="0.85")
    for n, fit in report.fits.items():
        st = stats_for_model(stats, n)
        d = [s.dataset_size for s in st]
        ax.errorbar(d, [s.mean for s in st], yerr=[s.std for s in st], fmt="o", capsize=3, label=f"N={n}")
        dd = np.geomspace(lo, hi, 50)
        ax.plot(dd, fit.predict(dd), "-", lw=1)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("D (graphs)")
    ax.set_ylabel("holdout MSE")
    ax.legend(fontsize=8)
    fig.tight_layout()
    p = directory / "learning_curves.svg"
    fig.savefig(p, metadata={"Date": None})
    plt.close(fig)
    paths.append(p)
    if report.beta_trend is not None and len(report.fits) >= 2:
        fig, ax = plt.subplots(figsize=(5, 4))
        ns = np.array(sorted(report.fits), dtype=float)
        ax.loglog(ns, [report.fits[int(n)].beta for n in ns], "o")
        nn = np.geomspace(ns.min(), ns.max(), 50)
        ax.loglog(nn, np.exp(report.beta_trend.intercept) * nn ** report.beta_trend.slope, "-")
        ax.set_xlabel("N (parameters)")
        ax.set_ylabel("beta")
        fig.tight_layout()
        p = directory / "beta_vs_n.svg"
        fig.savefig(p, metadata={"Date": None})
        plt.close(fig)
        paths.append(p)
    return paths

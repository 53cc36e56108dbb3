import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import curve_fit

from ddscale import scaling as sc
from ddscale.surrogate import MseRecord

DS = np.array([40.0, 80.0, 160.0, 320.0])


def test_aggregate_examples():
    recs = [MseRecord(11, 40, s, v) for s, v in enumerate([1.0, 2.0, 3.0])]
    recs.append(MseRecord(11, 80, 0, 0.5))
    stats = sc.aggregate(recs)
    g = stats[(11, 40)]
    assert (g.mean, g.std, g.min, g.max, g.count) == (2.0, 1.0, 1.0, 3.0, 3)
    assert not g.single


def test_aggregate_single_record_flagged(caplog):
    with caplog.at_level(logging.WARNING, logger="ddscale.scaling"):
        stats = sc.aggregate([MseRecord(11, 80, 0, 0.5)])
    assert stats[(11, 80)].std == 0.0 and stats[(11, 80)].single
    assert "single record" in caplog.text


@given(a2=st.floats(0.1, 10.0), beta=st.floats(0.1, 1.5))
@settings(max_examples=60, deadline=None)
def test_exact_power_law_recovered(a2, beta):
    fit = sc.fit_power_law(DS, a2 * DS ** (-beta))
    assert fit.a2 == pytest.approx(a2, rel=1e-6)
    assert fit.beta == pytest.approx(beta, rel=1e-6)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-9)


def test_weighted_fit_matches_reference_solver():
    rng = np.random.default_rng(3)
    eps = 1.3 * DS ** -0.55 * (1 + 0.05 * rng.normal(size=4))
    std = np.array([0.02, 0.01, 0.004, 0.002])
    fit = sc.fit_power_law(DS, eps, std)
    ref, _ = curve_fit(lambda d, a, b: a * d ** (-b), DS, eps, p0=[1.0, 0.5], sigma=std, absolute_sigma=False)
    np.testing.assert_allclose([fit.a2, fit.beta], ref, rtol=1e-6)


def test_weights_pull_fit_toward_precise_points():
    # grid-search oracle of the weighted objective
    eps = np.array([0.30, 0.18, 0.14, 0.08])
    std = np.array([1.0, 1.0, 1.0, 1e-3])
    fit = sc.fit_power_law(DS, eps, std)
    assert fit.predict(320.0) == pytest.approx(0.08, rel=1e-3)
    a, b = np.meshgrid(np.linspace(0.5, 5, 451), np.linspace(0.2, 1.2, 501), indexing="ij")
    obj = (((a[..., None] * DS ** (-b[..., None]) - eps) / std) ** 2).sum(-1)
    i, j = np.unravel_index(np.argmin(obj), obj.shape)
    assert fit.beta == pytest.approx(b[i, j], abs=5e-3)


def test_zero_std_falls_back_to_uniform():
    eps = 2.0 * DS ** -0.6
    a = sc.fit_power_law(DS, eps, [0.0, 0.1, 0.1, 0.1])
    b = sc.fit_power_law(DS, eps)
    assert (a.a2, a.beta) == (b.a2, b.beta)


@pytest.mark.parametrize("d,eps", [([40, 80, 40, 80], [1, 0.9, 1, 0.9]), ([40, 80, 160], [1, 0, 0.5])])
def test_fit_errors(d, eps):
    with pytest.raises(sc.FitError):
        sc.fit_power_law(d, eps)


def test_nonconvergence_reports_last_iterate():
    rng = np.random.default_rng(0)
    eps = 1.0 * DS ** -0.5 * (1 + 0.2 * rng.normal(size=4))
    with pytest.raises(sc.FitError) as info:
        sc.fit_power_law(DS, eps, max_iter=1)
    assert info.value.last is not None and len(info.value.last) == 2


def test_r_squared_drops_with_noise():
    rng = np.random.default_rng(1)
    clean = 1.5 * DS ** -0.6
    r2 = []
    for noise in (0.01, 0.1, 0.3):
        vals = [sc.fit_power_law(DS, clean * np.exp(noise * rng.normal(size=4))).r_squared for _ in range(200)]
        r2.append(np.median(vals))
    assert r2[0] > r2[1] > r2[2]


@given(a2=st.floats(0.5, 5.0), beta=st.floats(0.2, 1.2), d=st.integers(10, 100000))
@settings(max_examples=100, deadline=None)
def test_inversion_identity(a2, beta, d):
    target = a2 * d ** (-beta)
    dstar, gstar = sc.invert_dstar(a2, beta, target)
    assert abs(dstar - d) <= max(1, 1e-9 * d)
    assert gstar == dstar / 5


def test_inversion_validation():
    with pytest.raises(ValueError):
        sc.invert_dstar(1.0, 0.5, 0.0)
    with pytest.raises(ValueError):
        sc.invert_dstar(1.0, -0.5, 0.1)


def test_reproduce_published_dataset_sizes():
    rows = sc.reproduce_dstar()
    assert [r["dstar"] for r in rows] == [261, 245, 317, 261]
    for r in rows:
        raw = (r["target_mse"] / r["a2"]) ** (-1 / r["beta"])
        assert r["dstar"] == round(raw)
        assert r["hstar"] == pytest.approx(0.62 * r["gstar"] ** -0.15, rel=1e-12)


@given(c=st.floats(0.1, 5.0), m=st.floats(0.01, 0.8))
@settings(max_examples=50, deadline=None)
def test_density_exact_fit(c, m):
    g = np.array([8.0, 16.0, 32.0, 64.0, 128.0])
    fit = sc.fit_density(g, c * g ** (-m))
    assert fit.c == pytest.approx(c, rel=1e-9)
    assert fit.m == pytest.approx(m, rel=1e-9, abs=1e-12)


def test_density_scale_invariance():
    g = np.array([8.0, 16.0, 32.0, 64.0])
    h = np.array([0.45, 0.40, 0.36, 0.33])
    a = sc.fit_density(g, h)
    b = sc.fit_density(g, 3.0 * h)
    assert b.m == pytest.approx(a.m, rel=1e-12)
    assert b.c == pytest.approx(3.0 * a.c, rel=1e-12)
    with pytest.raises(sc.FitError):
        sc.fit_density(g, [0.4, 0.0, 0.3, 0.2])


def test_level_density_near_published():
    g, h = sc.level_density(range(1, 7))
    fit = sc.fit_density(g, h)
    assert fit.c == pytest.approx(0.62, abs=0.05)
    assert fit.m == pytest.approx(0.15, abs=0.02)


def test_per_dimension_conventions():
    out = sc.per_dim_density(261 / 5, 6, sc.DensityFit(0.62, 0.15))
    assert out["grid_equivalent"] == pytest.approx((261 / 5) ** (1 / 6))
    assert out["saltelli_base"] == pytest.approx(261 / 5 / 8)
    assert out["saltelli_base_level"] == 8
    assert "saltelli_base_level" in out["matches"]
    with pytest.raises(ValueError):
        sc.per_dim_density(0.5, 6, sc.DensityFit(0.62, 0.15))


def test_beta_trend_on_published_values():
    trend = sc.fit_beta_vs_n(sc.PUBLISHED_N, sc.PUBLISHED_BETA, exclude=(3,))
    assert trend.slope == pytest.approx(0.0796, abs=5e-4)
    assert trend.largest_residual == 3
    assert trend.residuals[3] < 0


def test_regions_inclusive_boundaries():
    r = sc.classify_regions([40, 80, 160, 320, 640])
    assert r[40] == ["small-data"]
    assert r[80] == ["small-data", "power-law"]
    assert r[160] == ["power-law"]
    assert r[320] == ["power-law", "asymptotic"]
    assert r[640] == ["asymptotic"]


def test_full_form_recovers_synthetic_surface():
    n = np.repeat([11.0, 21.0, 41.0, 81.0], 4)
    d = np.tile(DS, 4)
    truth = dict(a1=0.5, alpha=0.8, a2=1.2, beta=0.6, eps0=0.01)
    eps = truth["a1"] * n ** -truth["alpha"] + truth["a2"] * d ** -truth["beta"] + truth["eps0"]
    fit = sc.fit_full_form(n, d, eps)
    for k, v in truth.items():
        assert fit[k] == pytest.approx(v, rel=1e-4)
    with pytest.raises(sc.FitError):
        sc.fit_full_form(n[:4], d[:4], eps[:4])


def _synthetic_stats():
    recs = []
    for n, a2, beta in ((11, 1.2, 0.55), (21, 1.7, 0.62)):
        for d in (40, 80, 160, 320):
            for seed in range(4):
                recs.append(MseRecord(n, d, seed, a2 * d ** -beta * (1 + 0.01 * (seed - 1.5))))
    return sc.aggregate(recs)


def test_report_outputs(tmp_path):
    stats = _synthetic_stats()
    report = sc.build_report(stats, target_mse={11: 0.06, 21: 0.06})
    assert report.fits[11].beta == pytest.approx(0.55, rel=0.02)
    assert report.dstar[11] == sc.invert_fit(report.fits[11], 0.06)[0]
    csv_path = sc.write_report_csv(tmp_path / "report.csv", report)
    lines = csv_path.read_text().splitlines()
    assert lines[0].startswith("N,a2,beta") and len(lines) == 3
    sc.write_stats_csv(tmp_path / "stats.csv", stats)
    paths = sc.plot_report(tmp_path, stats, report)
    assert {p.name for p in paths} == {"learning_curves.svg", "beta_vs_n.svg"}
    first = [p.read_bytes() for p in paths]
    sc.plot_report(tmp_path, stats, report)
    assert [p.read_bytes() for p in paths] == first


def test_exact_three_point_recovery():
    d = np.array([80.0, 160.0, 320.0])
    fit = sc.fit_power_law(d, 2.0 * d ** -0.5, std=[0.01, 0.02, 0.03])
    assert abs(fit.a2 - 2.0) < 1e-9 and abs(fit.beta - 0.5) < 1e-9
    assert abs(fit.r_squared - 1.0) < 1e-12


def test_tripled_std_moves_fit_toward_other_points():
    d = np.array([80.0, 160.0, 320.0])
    eps = np.array([0.22, 0.14, 0.11])
    base = sc.fit_power_law(d, eps, [0.01, 0.01, 0.01])
    loose = sc.fit_power_law(d, eps, [0.01, 0.01, 0.03])
    # grid-search oracle on the two-parameter weighted objective
    a, b = np.meshgrid(np.linspace(1.0, 4.0, 601), np.linspace(0.3, 0.9, 601), indexing="ij")
    obj = (((a[..., None] * d ** (-b[..., None]) - eps) / np.array([0.01, 0.01, 0.03])) ** 2).sum(-1)
    i, j = np.unravel_index(np.argmin(obj), obj.shape)
    assert loose.beta == pytest.approx(b[i, j], abs=2e-3)
    r_base = abs(base.predict(d[:2]) - eps[:2]).sum()
    r_loose = abs(loose.predict(d[:2]) - eps[:2]).sum()
    assert r_loose < r_base


def test_trivial_inversion():
    assert sc.invert_dstar(1.0, 1.0, 0.5)[0] == 2


def test_published_density_at_optimal_counts():
    fit = sc.DensityFit(*sc.PUBLISHED_DENSITY)
    assert [round(float(fit.h(g)), 3) for g in (49, 52, 63)] == [0.346, 0.343, 0.333]


def test_two_point_trend_interpolates():
    trend = sc.fit_beta_vs_n([1e5, 1e6], [0.5, 0.6])
    assert trend.slope == pytest.approx(math.log(0.6 / 0.5) / math.log(10.0), rel=1e-12)
    with pytest.raises(sc.FitError):
        sc.fit_beta_vs_n([1e5, 1e6], [0.5, 0.6], exclude=(0,))

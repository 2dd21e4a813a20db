import math

import numpy as np
import pytest
from scipy import integrate, stats

from flutterlife.errors import DataError, DomainError, NumericalFailure
from flutterlife.lifecycle import (GridPdf, SiteWindModel, critical_speed_pdf, failure_probability,
                                   fit_gumbel_return_periods, kolmogorov_distance, lifecycle_curve,
                                   mc_critical_speed)
from flutterlife.surrogate import DEFAULT_BOX, VARIABLES, SurrogateModel
from flutterlife.trend import DampingScenario, DeteriorationModel, FluctuationModel

# coefficients of the order produced by the flat-plate fit
SURR = SurrogateModel(140.0, 610.0, 95.0, 330.0, -94.0)
WIND = SiteWindModel(24.18195, 5.71461)
NORMALS = {"f_v1": stats.norm(0.095, 3e-4), "f_t1": stats.norm(0.232, 6e-4),
           "zeta_v1": stats.norm(0.008, 1e-3), "zeta_t1": stats.norm(0.0065, 8e-4)}
MIXED = {"f_v1": stats.genextreme(0.25, loc=0.095, scale=3e-4),
         "f_t1": stats.genextreme(-0.1, loc=0.232, scale=6e-4),
         "zeta_v1": stats.gamma(9, scale=0.0009), "zeta_t1": stats.gamma(4, scale=0.0016)}


def _mean_of(pdfs):
    return SURR.c + sum(c * pdfs[v].mean() for c, v in zip(SURR.coefficients, VARIABLES))


def test_gumbel_two_point_closed_form():
    w = fit_gumbel_return_periods([(50, 46.48), (100, 50.47)])
    y50, y100 = -math.log(-math.log(1 - 1 / 50)), -math.log(-math.log(1 - 1 / 100))
    sigma = (50.47 - 46.48) / (y100 - y50)
    assert w.sigma == pytest.approx(sigma, rel=1e-14)
    assert w.mu == pytest.approx(46.48 - sigma * y50, rel=1e-14)
    assert (w.mu, w.sigma) == pytest.approx((24.18195, 5.71461), abs=1e-5)
    assert w.return_speed(100) == pytest.approx(50.47, abs=1e-12)
    assert w.return_speed(10) == pytest.approx(37.042, abs=1e-3)


def test_gumbel_least_squares_and_errors():
    truth = SiteWindModel(24.0, 5.7)
    pts = [(T, float(truth.return_speed(T))) for T in (10, 50, 100)]
    w = fit_gumbel_return_periods(pts)
    assert (w.mu, w.sigma) == pytest.approx((24.0, 5.7), rel=1e-12)
    with pytest.raises(DataError):
        fit_gumbel_return_periods([(50, 46.0), (50, 47.0)])
    with pytest.raises(DataError):
        fit_gumbel_return_periods([(50, 46.0)])
    with pytest.raises(DomainError):
        SiteWindModel(1.0, 0.0)


def test_point_masses_give_point_mass():
    pts = {v: float(NORMALS[v].mean()) for v in VARIABLES}
    pdf = critical_speed_pdf(SURR, pts)
    assert pdf.is_point_mass
    assert pdf.x[0] == pytest.approx(_mean_of(NORMALS), rel=1e-14)


def test_single_normal_input():
    pdfs = {v: float(NORMALS[v].mean()) for v in VARIABLES}
    pdfs["f_t1"] = NORMALS["f_t1"]
    pdf = critical_speed_pdf(SURR, pdfs)
    sd = SURR.alpha_t1 * NORMALS["f_t1"].std()
    ref = stats.norm(_mean_of(NORMALS), sd)
    assert pdf.mean() == pytest.approx(ref.mean(), rel=1e-10)
    assert pdf.std() == pytest.approx(sd, rel=1e-4)
    s = np.linspace(ref.ppf(0.001), ref.ppf(0.999), 50)
    assert np.max(np.abs(pdf.cdf(s) - ref.cdf(s))) < 1e-4


def test_negative_coefficient_reflects():
    model = SurrogateModel(-140.0, 0.0, 0.0, 0.0, 100.0)
    pdfs = {v: 0.01 for v in VARIABLES}
    pdfs["f_v1"] = stats.gamma(4, scale=0.01)
    pdf = critical_speed_pdf(model, pdfs)
    ref = 100 - 140 * stats.gamma(4, scale=0.01).rvs(10**5, random_state=0)
    assert kolmogorov_distance(pdf, ref) < 0.01


def test_mean_and_variance_additivity():
    pdf = critical_speed_pdf(SURR, MIXED)
    assert pdf.total() == pytest.approx(1.0, abs=1e-6)
    assert pdf.mean() == pytest.approx(_mean_of(MIXED), rel=1e-6)
    var = sum(c**2 * MIXED[v].var() for c, v in zip(SURR.coefficients, VARIABLES))
    assert pdf.var() == pytest.approx(var, rel=1e-4)


def test_convolution_matches_monte_carlo():
    pdf = critical_speed_pdf(SURR, MIXED)
    draws = mc_critical_speed(SURR, MIXED, n=10**6, seed=5)
    assert kolmogorov_distance(pdf, draws) < 0.01
    se = draws.std() / math.sqrt(draws.size)
    assert abs(draws.mean() - pdf.mean()) < 3 * se


def test_mc_determinism_and_points():
    a = mc_critical_speed(SURR, MIXED, n=10**4, seed=1)
    b = mc_critical_speed(SURR, MIXED, n=10**4, seed=1)
    assert np.array_equal(a, b)
    pts = mc_critical_speed(SURR, {v: 0.01 for v in VARIABLES}, n=10**4)
    assert np.ptp(pts) == 0
    with pytest.raises(DomainError):
        mc_critical_speed(SURR, MIXED, n=100)


def test_grid_inputs_accepted():
    x = np.linspace(0.2, 0.26, 6001)
    grid = GridPdf(x, NORMALS["f_t1"].pdf(x))
    a = critical_speed_pdf(SURR, dict(NORMALS, f_t1=grid))
    b = critical_speed_pdf(SURR, NORMALS)
    assert a.mean() == pytest.approx(b.mean(), rel=1e-6)
    assert a.std() == pytest.approx(b.std(), rel=1e-3)


def test_coarse_grid_is_reported():
    with pytest.raises(NumericalFailure, match="grid points"):
        critical_speed_pdf(SURR, MIXED, n_points=8, pad=0.0)


def test_negative_support_truncated():
    model = SurrogateModel(0.0, 0.0, 0.0, 0.0, 0.0)
    pdfs = {v: 0.0 for v in VARIABLES}
    model.alpha_v1 = 1.0
    pdfs["f_v1"] = stats.norm(0.5, 1.0)
    pdf = critical_speed_pdf(model, pdfs)
    assert pdf.x[0] >= 0
    assert pdf.total() == pytest.approx(1.0, abs=1e-12)


def test_gridpdf_cdf_is_exact_for_linear_density():
    x = np.linspace(0, 2, 5)
    pdf = GridPdf(x, x / 2)
    s = np.array([-1, 0.3, 1.0, 1.7, 3])
    assert pdf.cdf(s) == pytest.approx(np.clip(s, 0, 2) ** 2 / 4, abs=1e-15)


def test_pf_point_mass_at_location():
    assert failure_probability(GridPdf.point_mass(WIND.mu), WIND) == pytest.approx(1 - math.exp(-1),
                                                                                   rel=1e-14)


def test_pf_far_tail():
    r0 = WIND.mu + 11.99 * WIND.sigma
    pf = failure_probability(GridPdf.point_mass(r0), WIND)
    assert pf == pytest.approx(-math.expm1(-math.exp(-11.99)), rel=1e-9)
    assert pf == pytest.approx(6.2e-6, rel=0.01)


def test_pf_against_direct_quadrature():
    pdf = critical_speed_pdf(SURR, NORMALS)
    R = stats.norm(pdf.mean(), pdf.std())
    ref, _ = integrate.quad(lambda s: R.cdf(s) * WIND.dist.pdf(s), 0, 200, points=[R.mean()],
                            epsabs=1e-13, limit=200)
    assert failure_probability(pdf, WIND) == pytest.approx(ref, rel=1e-3)


def test_pf_decreases_under_right_shift():
    pdf = critical_speed_pdf(SURR, MIXED)
    shifted = GridPdf(pdf.x + 5.0, pdf.density)
    assert failure_probability(shifted, WIND) < failure_probability(pdf, WIND)


def test_pf_grid_refinement():
    a = failure_probability(critical_speed_pdf(SURR, MIXED, n_points=8192), WIND)
    b = failure_probability(critical_speed_pdf(SURR, MIXED, n_points=16384), WIND)
    assert abs(a - b) < 0.01 * a


def _models(b_v=-2.7201e-5, b_t=-2.605e-5):
    def freq(a, b, s):
        return DeteriorationModel(a, b, FluctuationModel("gev", {"k": -0.1, "mu": a, "sigma": s}, 0.5))

    def damp(a, shape):
        fl = FluctuationModel("gamma", {"a": shape, "b": a / shape}, 0.5)
        return DeteriorationModel(a, 0.0, fl, kind="damping")

    fm = {"f_v1": freq(0.0953, b_v, 3e-4), "f_t1": freq(0.2372, b_t, 6e-4)}
    dm = {"zeta_v1": damp(0.008, 12.0), "zeta_t1": damp(0.0065, 8.0)}
    return fm, dm


def test_lifecycle_properties():
    fm, dm = _models()
    box_model = SurrogateModel(*SURR.coefficients, SURR.c, doe_box=DEFAULT_BOX)
    curves = {s: lifecycle_curve(fm, dm, box_model, WIND, range(0, 101, 10), s)
              for s in DampingScenario}
    none = np.array([r.p_f for r in curves[DampingScenario.NONE]])
    inc = np.array([r.p_f for r in curves[DampingScenario.INCREASE_30]])
    dec = np.array([r.p_f for r in curves[DampingScenario.DECREASE_30]])
    assert np.all(np.diff(none) >= 0)
    assert np.all(dec >= none) and np.all(none >= inc)
    assert np.max(np.abs(np.r_[inc, dec] - np.r_[none, none])) < 0.5 * (none[-1] - none[0])
    sds = [r.vr_pdf.std() for r in curves[DampingScenario.NONE]]
    assert np.ptp(sds) < 1e-6 * sds[0]
    assert all(0 <= p <= 1 for p in none)


def test_frozen_trends_are_stationary():
    fm, dm = _models(0.0, 0.0)
    pf = [r.p_f for r in lifecycle_curve(fm, dm, SURR, WIND, range(0, 101, 25))]
    assert np.ptp(pf) == 0


def test_extrapolation_flag(caplog):
    fm, dm = _models(-2e-4, -2e-4)
    with caplog.at_level("WARNING"):
        rows = lifecycle_curve(fm, dm, SURR, WIND, range(0, 101, 20))
    # f_t1 starts at 0.2372 and leaves the box once it drops below 0.226
    assert not rows[0].extrapolation and rows[-1].extrapolation
    assert caplog.text.count("leave the surrogate box") == 1
    assert set(rows[0].row()) == {"year", "p_f", "vr_mean", "vr_std", "extrapolation_flag"}

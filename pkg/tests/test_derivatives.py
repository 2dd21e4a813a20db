import numpy as np
import pytest
from numpy.polynomial import Polynomial
from scipy import special

from flutterlife.derivatives import (DEFAULT_ORDERS, NAMES, TheodorsenDerivatives,
                                     fit_derivatives, read_derivative_csv, sample_derivatives,
                                     theodorsen, write_derivative_csv)
from flutterlife.errors import DataError, DomainError


def _bessel_theodorsen(k):
    # C(k) = H1(2)/(H1(2) + i H0(2)) with H(2) = J - iY, expanded into real Bessel functions
    J0, J1, Y0, Y1 = special.j0(k), special.j1(k), special.y0(k), special.y1(k)
    num = J1 - 1j * Y1
    den = (J1 + Y0) + 1j * (J0 - Y1)
    return num / den


def test_theodorsen_limits():
    assert abs(theodorsen(1e-8) - 1) < 1e-6
    assert theodorsen(1e6).real == pytest.approx(0.5, abs=1e-6)
    with pytest.raises(DomainError):
        theodorsen(0.0)


@pytest.mark.parametrize("k", [0.1, 0.5])
def test_theodorsen_matches_bessel_form(k):
    assert abs(theodorsen(k) - _bessel_theodorsen(k)) < 1e-8


def test_theodorsen_tabulated_values():
    # classical table: C(0.1) = 0.8319 - 0.1723i, C(0.5) = 0.5979 - 0.1507i
    assert theodorsen(0.1) == pytest.approx(0.8319 - 0.1723j, abs=5e-4)
    assert theodorsen(0.5) == pytest.approx(0.5979 - 0.1507j, abs=5e-4)


def test_exact_quadratic_recovered():
    ur = np.linspace(4, 16, 9)
    truth = {name: Polynomial([0.5 * i, -0.3, 0.02 * (i + 1)]) for i, name in enumerate(NAMES)}
    meas = {name: (ur, p(ur)) for name, p in truth.items()}
    fit = fit_derivatives(meas, orders={"H2": 2})
    for name in NAMES:
        got = fit.polynomials[name].convert().coef
        assert got == pytest.approx(truth[name].coef, rel=1e-10, abs=1e-10)
        assert fit.rms[name] < 1e-10


def test_orders_echoed():
    meas = sample_derivatives(TheodorsenDerivatives(), np.linspace(4, 16, 13))
    fit = fit_derivatives(meas)
    assert fit.orders == DEFAULT_ORDERS
    assert fit.orders["H2"] == 4
    assert {d["order"] for n, d in fit.to_dict().items() if n != "H2"} == {2}


def test_exclusion_removes_planted_outlier():
    meas = sample_derivatives(TheodorsenDerivatives(), np.linspace(4, 16, 13))
    ur, val = meas["A2"]
    val = val.copy()
    val[6] += 5.0
    meas["A2"] = (ur, val)
    plain = fit_derivatives(meas)
    cleaned = fit_derivatives(meas, exclusions={"A2": [6]})
    assert cleaned.rms["A2"] < 0.1 * plain.rms["A2"]


def test_insufficient_points():
    meas = sample_derivatives(TheodorsenDerivatives(), np.linspace(4, 16, 5))
    with pytest.raises(DataError, match="H2"):
        fit_derivatives(meas)


def test_range_is_enforced():
    fit = fit_derivatives(sample_derivatives(TheodorsenDerivatives(), np.linspace(4, 16, 13)))
    assert fit.ur_range == (4.0, 16.0)
    fit.evaluate(2 * np.pi / 10)
    with pytest.raises(DomainError, match="4, 16"):
        fit.evaluate(2 * np.pi / 17)
    fit.allow_extrapolation = True
    fit.evaluate(2 * np.pi / 17)


def test_csv_round_trip(tmp_path):
    meas = sample_derivatives(TheodorsenDerivatives(), np.linspace(4, 16, 7))
    write_derivative_csv(tmp_path / "d.csv", meas)
    back = read_derivative_csv(tmp_path / "d.csv")
    for name in NAMES:
        assert np.array_equal(back[name][0], meas[name][0])
        assert np.array_equal(back[name][1], meas[name][1])


def test_csv_bad_row(tmp_path):
    (tmp_path / "d.csv").write_text("derivative,ur,value\nH1,4,1.0\nH9,5,2.0\n")
    with pytest.raises(DataError) as info:
        read_derivative_csv(tmp_path / "d.csv")
    assert info.value.row == 3

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flutterlife.errors import DataError, DomainError, NoFlutterInRange
from flutterlife.flutter import solve_flutter
from flutterlife.surrogate import (DEFAULT_BOX, VARIABLES, SurrogateModel, doe_grid, evaluate_doe,
                                   fit_surrogate, predict)

TRUE = np.array([310.0, 420.0, 150.0, 900.0])


def test_corner_grid():
    g = doe_grid(levels=2)
    assert g.shape == (16, 4)
    assert g[0].tolist() == [DEFAULT_BOX[v][0] for v in VARIABLES]
    assert g[-1].tolist() == [DEFAULT_BOX[v][1] for v in VARIABLES]
    # lexicographic: the last variable varies fastest
    assert g[1, 3] == DEFAULT_BOX["zeta_t1"][1] and g[1, 0] == DEFAULT_BOX["f_v1"][0]


def test_default_grid_levels():
    g = doe_grid()
    assert g.shape == (625, 4)
    assert np.unique(g[:, 0]) == pytest.approx([0.090, 0.0925, 0.095, 0.0975, 0.100], abs=1e-15)


def test_degenerate_box():
    box = dict(DEFAULT_BOX, f_t1=(0.23, 0.23))
    with pytest.raises(DomainError, match="f_t1"):
        doe_grid(box)
    with pytest.raises(DomainError):
        doe_grid(levels=1)


def test_exact_linear_recovery():
    X = doe_grid(levels=3)
    y = X @ TRUE + 12.5
    m = fit_surrogate(X, y)
    assert m.coefficients == pytest.approx(TRUE, rel=1e-10)
    assert m.c == pytest.approx(12.5, rel=1e-8)
    assert m.r_squared == pytest.approx(1.0, abs=1e-12)


def test_permutation_invariance():
    X = doe_grid(levels=3)
    y = X @ TRUE + 12.5 + np.sin(np.arange(len(X)))
    a = fit_surrogate(X, y)
    perm = np.random.default_rng(0).permutation(len(X))
    b = fit_surrogate(X[perm], y[perm])
    assert b.coefficients == pytest.approx(a.coefficients, rel=1e-10)
    assert b.r_squared == pytest.approx(a.r_squared, rel=1e-12)


def test_rank_deficient_and_exclusions():
    X = doe_grid(levels=3)
    X[:, 2] = 0.008
    with pytest.raises(DataError, match="rank"):
        fit_surrogate(X, np.arange(len(X), dtype=float))
    X = doe_grid(levels=3)
    y = X @ TRUE
    y[:4] = np.nan  # 4/81 < 5%
    assert fit_surrogate(X, y).n_excluded == 4
    y[:5] = np.nan  # 5/81 > 5%
    with pytest.raises(DataError, match="no flutter"):
        fit_surrogate(X, y)


def test_constant_model_and_flag():
    m = SurrogateModel(0, 0, 0, 0, 77.0)
    u, inside = predict(m, 0.095, 0.23, 0.008, 0.005)
    assert u == 77.0 and inside
    u, inside = predict(m, 0.2, 0.23, 0.008, 0.005)
    assert u == 77.0 and not inside


@given(st.lists(st.floats(0, 1), min_size=4, max_size=4),
       st.lists(st.floats(0, 1), min_size=4, max_size=4), st.floats(0, 1))
@settings(max_examples=50, deadline=None)
def test_predict_is_affine(u, v, t):
    m = SurrogateModel(*TRUE, c=12.5)
    lo = np.array([DEFAULT_BOX[k][0] for k in VARIABLES])
    hi = np.array([DEFAULT_BOX[k][1] for k in VARIABLES])
    x, y = lo + np.array(u) * (hi - lo), lo + np.array(v) * (hi - lo)
    px, py = predict(m, *x)[0], predict(m, *y)[0]
    pz, inside = predict(m, *(t * x + (1 - t) * y))
    assert pz == pytest.approx(t * px + (1 - t) * py, rel=1e-12)
    assert inside


def test_save_load(tmp_path):
    X = doe_grid(levels=3)
    m = fit_surrogate(X, X @ TRUE + 1.0)
    m.save(tmp_path / "s.json")
    assert SurrogateModel.load(tmp_path / "s.json") == m


def test_evaluate_doe_marks_no_flutter():
    class Sol:
        U_cr = 5.0

    def solver(fv, ft, zv, zt):
        if fv > 0.095:
            raise NoFlutterInRange("none")
        return Sol()

    out = evaluate_doe(solver, doe_grid(levels=2), workers=2)
    assert np.isnan(out[8:]).all() and (out[:8] == 5.0).all()


@pytest.fixture(scope="module")
def flat_plate_surrogate(bridge, flat_plate):
    X = doe_grid(levels=3)
    y = evaluate_doe(lambda *p: solve_flutter(bridge, flat_plate, *p), X)
    return fit_surrogate(X, y, box=DEFAULT_BOX)


def test_flat_plate_fit(flat_plate_surrogate, bridge, flat_plate):
    m = flat_plate_surrogate
    assert m.r_squared >= 0.98
    assert m.max_residual < 0.03 * m.mean_response
    assert m.alpha_t1 > 0
    centre = [np.mean(DEFAULT_BOX[v]) for v in VARIABLES]
    direct = solve_flutter(bridge, flat_plate, *centre).U_cr
    assert predict(m, *centre)[0] == pytest.approx(direct, rel=0.015)


def test_torsional_frequency_sign_by_direct_sweep(bridge, flat_plate):
    lo, hi = DEFAULT_BOX["f_t1"]
    u = [solve_flutter(bridge, flat_plate, 0.095, f, 0.008, 0.0065).U_cr for f in (lo, hi)]
    assert u[1] > u[0]

"""Linear response surface for the flutter critical speed over the modal-property box."""

import itertools
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DomainError, NoFlutterInRange

log = logging.getLogger(__name__)

VARIABLES = ("f_v1", "f_t1", "zeta_v1", "zeta_t1")
DEFAULT_BOX = {
    "f_v1": (0.090, 0.100),
    "f_t1": (0.226, 0.238),
    "zeta_v1": (0.004, 0.012),
    "zeta_t1": (0.003, 0.010),
}
MAX_EXCLUDED_FRACTION = 0.05


def doe_grid(box=None, levels=5):
    """Full-factorial grid in lexicographic order, shape ``(n_points, 4)``."""
    box = box or DEFAULT_BOX
    if isinstance(levels, int):
        levels = {v: levels for v in VARIABLES}
    axes = []
    for v in VARIABLES:
        lo, hi = box[v]
        n = int(levels[v])
        if n < 2:
            raise DomainError(f"{v}: at least two levels are required")
        if not lo < hi:
            raise DomainError(f"{v}: degenerate range ({lo}, {hi})")
        axes.append(np.linspace(lo, hi, n))
    return np.array(list(itertools.product(*axes)))


@dataclass
class SurrogateModel:
    alpha_v1: float
    alpha_t1: float
    beta_v1: float
    beta_t1: float
    c: float
    r_squared: float = 1.0
    doe_box: dict = field(default_factory=lambda: dict(DEFAULT_BOX))
    n_points: int = 0
    n_excluded: int = 0
    max_residual: float = 0.0
    mean_response: float = float("nan")
    holdout_r_squared: float = None

    @property
    def coefficients(self):
        return np.array([self.alpha_v1, self.alpha_t1, self.beta_v1, self.beta_t1])

    def in_box(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        lo = np.array([self.doe_box[v][0] for v in VARIABLES])
        hi = np.array([self.doe_box[v][1] for v in VARIABLES])
        return np.all((x >= lo) & (x <= hi), axis=1)

    def to_dict(self):
        return {
            "alpha_v1": self.alpha_v1, "alpha_t1": self.alpha_t1,
            "beta_v1": self.beta_v1, "beta_t1": self.beta_t1, "c": self.c,
            "r_squared": self.r_squared,
            "doe_box": {v: list(self.doe_box[v]) for v in VARIABLES},
            "n_points": self.n_points, "n_excluded": self.n_excluded,
            "max_residual": self.max_residual, "mean_response": self.mean_response,
            "holdout_r_squared": self.holdout_r_squared,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["doe_box"] = {v: tuple(r) for v, r in d["doe_box"].items()}
        return cls(**d)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def predict(model, f_v1, f_t1, zeta_v1, zeta_t1):
    """Surrogate critical speed and whether the point lies inside the DOE box."""
    x = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (f_v1, f_t1, zeta_v1, zeta_t1)))
    u = (model.alpha_v1 * x[0] + model.alpha_t1 * x[1]
         + model.beta_v1 * x[2] + model.beta_t1 * x[3] + model.c)
    inside = model.in_box(np.stack([a.ravel() for a in x], axis=1)).reshape(x[0].shape)
    if u.ndim == 0:
        return float(u), bool(inside)
    return u, inside


def _ols(X, y):
    A = np.column_stack([X, np.ones(len(X))])
    if np.linalg.matrix_rank(A) < A.shape[1]:
        raise DataError("rank-deficient design: the points do not span all four variables")
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    return coef, resid, float(r2)


def fit_surrogate(points, responses, box=None, holdout_fraction=0.2, seed=0):
    """Ordinary least squares for ``U = a_v f_v + a_t f_t + b_v z_v + b_t z_t + c``.

    ``responses`` entries that are NaN mark DOE points without flutter in
    range; they are dropped, and the fit fails if they exceed 5% of the grid.
    """
    X = np.asarray(points, dtype=float)
    y = np.asarray(responses, dtype=float)
    if X.ndim != 2 or X.shape[1] != 4 or len(X) != len(y):
        raise DataError("points must be (n, 4) with one response per point")
    ok = np.isfinite(y)
    n_excluded = int(np.sum(~ok))
    if n_excluded > MAX_EXCLUDED_FRACTION * len(y):
        raise DataError(f"{n_excluded} of {len(y)} DOE points have no flutter in range "
                        f"(limit {MAX_EXCLUDED_FRACTION:.0%}); check the box against the derivative range")
    X, y = X[ok], y[ok]
    if len(y) < 6:
        raise DataError("surrogate fit needs at least 6 points")
    coef, resid, r2 = _ols(X, y)
    holdout = None
    if holdout_fraction and len(y) >= 30:
        rng = np.random.default_rng(seed)
        test = rng.permutation(len(y))[: int(round(holdout_fraction * len(y)))]
        train = np.setdiff1d(np.arange(len(y)), test)
        c_tr, _, _ = _ols(X[train], y[train])
        pred = np.column_stack([X[test], np.ones(test.size)]) @ c_tr
        ss_tot = np.sum((y[test] - y[test].mean()) ** 2)
        holdout = float(1 - np.sum((y[test] - pred) ** 2) / ss_tot) if ss_tot > 0 else 1.0
    if box is None:
        box = {v: (float(X[:, i].min()), float(X[:, i].max())) for i, v in enumerate(VARIABLES)}
    return SurrogateModel(*map(float, coef), r_squared=r2, doe_box=dict(box),
                          n_points=int(len(y)), n_excluded=n_excluded,
                          max_residual=float(np.max(np.abs(resid))),
                          mean_response=float(np.mean(y)), holdout_r_squared=holdout)


def evaluate_doe(solver, points, workers=1):
    """Critical speeds at each DOE point; NaN where the solver finds no flutter in range.

    ``solver(f_v1, f_t1, zeta_v1, zeta_t1)`` returns a ``FlutterSolution``.
    """
    def one(p):
        try:
            return solver(*p).U_cr
        except NoFlutterInRange:
            return np.nan

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(workers) as pool:
            out = list(pool.map(one, points))
    else:
        out = [one(p) for p in points]
    return np.array(out, dtype=float)

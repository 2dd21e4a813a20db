"""Critical-speed distribution, site wind model and time-variant failure probability."""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, signal, stats

from .errors import DataError, DomainError, NumericalFailure
from .surrogate import VARIABLES
from .trend import DampingScenario, project

log = logging.getLogger(__name__)

TAIL = 1e-12
DEFAULT_GRID_POINTS = 8192
PAD = 5.0
RESOLUTION = 0.1  # maximum lattice step as a fraction of the output std


@dataclass(frozen=True)
class SiteWindModel:
    """Gumbel distribution of the annual maximum wind speed."""

    mu: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise DomainError("Gumbel scale must be positive")

    @property
    def dist(self):
        return stats.gumbel_r(loc=self.mu, scale=self.sigma)

    def return_speed(self, T):
        return self.mu - self.sigma * np.log(-np.log(1 - 1 / np.asarray(T, dtype=float)))

    def to_dict(self):
        return {"mu": self.mu, "sigma": self.sigma}


def fit_gumbel_return_periods(points):
    """Gumbel ``(mu, sigma)`` from ``(T, speed)`` pairs: exact for two, least squares otherwise."""
    T = np.array([p[0] for p in points], dtype=float)
    v = np.array([p[1] for p in points], dtype=float)
    if T.size < 2:
        raise DataError("at least two return-period points are required")
    if np.unique(T).size != T.size:
        raise DataError("return periods must be distinct")
    if np.any(T <= 1):
        raise DomainError("return periods must exceed one year")
    y = -np.log(-np.log(1 - 1 / T))
    if T.size == 2:
        sigma = (v[1] - v[0]) / (y[1] - y[0])
        mu = v[0] - sigma * y[0]
    else:
        sigma, mu = np.polyfit(y, v, 1)
    return SiteWindModel(float(mu), float(sigma))


@dataclass
class GridPdf:
    """Density tabulated on a uniform grid; a single node denotes a point mass."""

    x: np.ndarray
    density: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.density = np.asarray(self.density, dtype=float)
        if self.x.shape != self.density.shape or self.x.ndim != 1:
            raise DomainError("grid and density must be 1-D arrays of equal length")
        if np.any(self.density < 0):
            raise DomainError("densities must be non-negative")

    @classmethod
    def point_mass(cls, value):
        return cls(np.array([float(value)]), np.array([1.0]))

    @property
    def is_point_mass(self):
        return self.x.size == 1

    @property
    def h(self):
        return self.x[1] - self.x[0] if self.x.size > 1 else 0.0

    def total(self):
        if self.is_point_mass:
            return float(self.density[0])
        return float(integrate.trapezoid(self.density, self.x))

    def normalized(self):
        return GridPdf(self.x, self.density / self.total())

    def mean(self):
        if self.is_point_mass:
            return float(self.x[0])
        return float(integrate.trapezoid(self.x * self.density, self.x) / self.total())

    def var(self):
        if self.is_point_mass:
            return 0.0
        m = self.mean()
        return float(integrate.trapezoid((self.x - m) ** 2 * self.density, self.x) / self.total())

    def std(self):
        return math.sqrt(self.var())

    def cdf_nodes(self):
        if self.is_point_mass:
            return np.ones(1)
        return integrate.cumulative_trapezoid(self.density, self.x, initial=0.0)

    def cdf(self, s):
        """CDF of the piecewise-linear density (exact quadratic within each cell)."""
        s = np.asarray(s, dtype=float)
        if self.is_point_mass:
            return (s >= self.x[0]).astype(float)
        x, d, h = self.x, self.density, self.h
        C = self.cdf_nodes()
        i = np.clip(np.floor((s - x[0]) / h).astype(int), 0, x.size - 2)
        u = np.clip(s - x[i], 0.0, h)
        slope = (d[i + 1] - d[i]) / h
        out = C[i] + d[i] * u + 0.5 * slope * u**2
        out = np.where(s < x[0], 0.0, out)
        return np.where(s >= x[-1], C[-1], out)

    def ppf(self, q):
        C = self.cdf_nodes() / self.total()
        return np.interp(q, C, self.x)

    def to_rows(self):
        return np.column_stack([self.x, self.density])


def _as_component(dist):
    """Normalize a property input to (kind, object): point, grid or scipy distribution."""
    if isinstance(dist, GridPdf):
        return ("point", dist.x[0]) if dist.is_point_mass else ("grid", dist)
    if np.isscalar(dist):
        return ("point", float(dist))
    return ("dist", dist)


def _component_mean(kind, obj):
    if kind == "point":
        return obj
    return obj.mean()


def _component_bounds(kind, obj):
    if kind == "grid":
        return obj.x[0], obj.x[-1]
    lo, hi = obj.ppf(TAIL), obj.ppf(1 - TAIL)
    return float(lo), float(hi)


def _component_cdf(kind, obj, x):
    if kind == "grid":
        return obj.cdf(x) / obj.total()
    return obj.cdf(x)


def _lattice_masses(kind, obj, coef, h):
    """Cell masses of ``coef * X`` on the lattice ``origin + j*h`` anchored at the scaled mean.

    Anchoring at the mean makes the discretization exactly translation
    equivariant, so shifting a property's location only shifts the output.
    """
    lo, hi = _component_bounds(kind, obj)
    origin = coef * _component_mean(kind, obj)
    ylo, yhi = sorted((coef * lo, coef * hi))
    j0 = int(math.floor((ylo - origin) / h)) - 1
    j1 = int(math.ceil((yhi - origin) / h)) + 1
    y = origin + np.arange(j0, j1 + 1) * h
    edges = np.concatenate([y - 0.5 * h, [y[-1] + 0.5 * h]])
    F = _component_cdf(kind, obj, edges / coef)
    mass = np.diff(F) if coef > 0 else -np.diff(F)
    return origin + j0 * h, np.clip(mass, 0.0, None)


def critical_speed_pdf(model, pdfs, n_points=DEFAULT_GRID_POINTS, pad=PAD, drift_tol=1e-4):
    """Density of ``c + sum_i coef_i X_i`` for independent properties ``X_i``.

    ``pdfs`` maps the four surrogate variables to a scipy distribution, a
    ``GridPdf`` or a scalar (point mass).  Each scaled property is binned by
    CDF differences onto a common lattice and the bins are convolved.
    """
    coefs = dict(zip(VARIABLES, model.coefficients))
    offset = model.c
    comps = []
    for v in VARIABLES:
        kind, obj = _as_component(pdfs[v])
        if kind == "point" or coefs[v] == 0:
            offset += coefs[v] * (obj if kind == "point" else _component_mean(kind, obj))
            continue
        comps.append((kind, obj, coefs[v]))
    if not comps:
        return GridPdf.point_mass(offset)
    widths = []
    for kind, obj, coef in comps:
        lo, hi = _component_bounds(kind, obj)
        widths.append(abs(coef) * (hi - lo))
    h = (sum(widths) + 2 * pad) / (n_points - 1)
    start, mass = offset, np.ones(1)
    for kind, obj, coef in comps:
        o, m = _lattice_masses(kind, obj, coef, h)
        start += o
        mass = signal.fftconvolve(mass, m)
    mass = np.clip(mass, 0.0, None)
    drift = abs(mass.sum() - 1.0)
    if drift > drift_tol:
        raise NumericalFailure(f"critical-speed grid too coarse (mass drift {drift:.2e}); "
                               "increase the number of grid points")
    # cell masses conserve probability by construction, so also guard resolution
    y = np.arange(mass.size) * h
    m1 = mass @ y / mass.sum()
    sd = math.sqrt(max(mass @ (y - m1) ** 2 / mass.sum(), 0.0))
    if h > RESOLUTION * sd:
        raise NumericalFailure(f"critical-speed grid too coarse (step {h:.3g} m/s against a "
                               f"spread of {sd:.3g} m/s); increase the number of grid points")
    n_pad = int(round(pad / h))
    mass = np.concatenate([np.zeros(n_pad), mass, np.zeros(n_pad)])
    x = start - n_pad * h + np.arange(mass.size) * h
    dens = mass / h
    if x[0] < 0:
        # critical speeds are physically non-negative
        keep = x >= 0
        x, dens = x[keep], dens[keep]
    pdf = GridPdf(x, dens)
    return pdf.normalized()


def _sample(dist, n, rng):
    kind, obj = _as_component(dist)
    if kind == "point":
        return np.full(n, obj)
    if kind == "grid":
        return obj.ppf(rng.random(n))
    return obj.rvs(size=n, random_state=rng)


def mc_critical_speed(model, pdfs, n=1_000_000, seed=0):
    """Monte Carlo draws of the surrogate critical speed under independent properties."""
    if n < 10_000:
        raise DomainError("Monte Carlo validation needs at least 1e4 draws")
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(len(VARIABLES))]
    x = [_sample(pdfs[v], n, r) for v, r in zip(VARIABLES, rngs)]
    return model.c + sum(c * xi for c, xi in zip(model.coefficients, x))


def kolmogorov_distance(pdf, samples):
    """Sup distance between a grid CDF and the empirical CDF of ``samples``."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    F = pdf.cdf(x) / pdf.total()
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


def failure_probability(vr_pdf, wind, tol=1e-9, max_halvings=20):
    """Annual failure probability ``int F_R(s) f_S(s) ds``.

    Above the critical-speed support ``F_R = 1`` and the integral is the
    Gumbel survival function there; inside the support composite Simpson
    rules on the grid cells are refined by step halving until successive
    estimates agree to ``tol``.
    """
    S = wind.dist
    if vr_pdf.is_point_mass:
        return float(S.sf(vr_pdf.x[0]))
    pdf = vr_pdf.normalized()
    lo, hi = pdf.x[0], pdf.x[-1]
    upper = float(S.sf(hi))
    # below mu - 12 sigma f_S is negligible (< 1e-70); skip that part of the grid
    lo = max(lo, wind.mu - 12 * wind.sigma)
    if lo >= hi:
        return upper

    def simpson(m):
        s = np.linspace(lo, hi, m + 1)
        return integrate.simpson(pdf.cdf(s) * S.pdf(s), x=s)

    m = 2 * max(2, int(math.ceil((hi - lo) / pdf.h)))
    prev = simpson(m)
    for _ in range(max_halvings):
        m *= 2
        cur = simpson(m)
        if abs(cur - prev) < tol:
            return float(min(max(cur + upper, 0.0), 1.0))
        prev = cur
    raise NumericalFailure("failure-probability quadrature did not reach the error bound")


@dataclass
class YearlyReliability:
    year: int
    vr_pdf: GridPdf = field(repr=False)
    p_f: float
    scenario: str
    extrapolation: bool = False

    def row(self):
        return {"year": self.year, "p_f": self.p_f, "vr_mean": self.vr_pdf.mean(),
                "vr_std": self.vr_pdf.std(), "extrapolation_flag": int(self.extrapolation)}


def lifecycle_curve(freq_models, damping_models, surrogate, wind, years=range(101),
                    scenario=DampingScenario.NONE, n_points=DEFAULT_GRID_POINTS):
    """Failure probability for each year under one damping scenario.

    ``freq_models`` maps ``f_v1``/``f_t1`` and ``damping_models`` maps
    ``zeta_v1``/``zeta_t1`` to ``DeteriorationModel`` instances.
    """
    scenario = DampingScenario(scenario)
    models = {**freq_models, **damping_models}
    horizon = max(years)
    out = []
    for year in years:
        pdfs = {v: project(models[v], year, scenario, horizon=max(horizon, 100)) for v in VARIABLES}
        means = [pdfs[v].mean() for v in VARIABLES]
        outside = not bool(surrogate.in_box(means)[0])
        vr = critical_speed_pdf(surrogate, pdfs, n_points=n_points)
        out.append(YearlyReliability(year, vr, failure_probability(vr, wind), scenario.value, outside))
    flagged = [r.year for r in out if r.extrapolation]
    if flagged:
        log.warning("scenario %s: projected property means leave the surrogate box in %d year(s), "
                    "first in year %d", scenario.value, len(flagged), flagged[0])
    return out

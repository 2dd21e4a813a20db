"""Monthly averaging, exponential deterioration trends and fluctuation distributions."""

import enum
import math
from dataclasses import dataclass, field
from datetime import timezone

import numpy as np
from scipy import special, stats

from .errors import DataError, DomainError

FAMILIES = {
    "normal": stats.norm,
    "gev": stats.genextreme,
    "lognormal": stats.lognorm,
    "gamma": stats.gamma,
}
FREQUENCY_FAMILIES = ("normal", "gev")
DAMPING_FAMILIES = ("lognormal", "gamma", "gev")
JUNE = 5


class DampingScenario(str, enum.Enum):
    NONE = "none"
    INCREASE_30 = "increase-30%"
    DECREASE_30 = "decrease-30%"

    def factor(self, year):
        """Multiplier on the damping mean after ``year`` years (exponential, +-30% at 100)."""
        rate = math.log(1.3) / 100
        sign = {"none": 0, "increase-30%": 1, "decrease-30%": -1}[self.value]
        return math.exp(sign * rate * year)


@dataclass
class MonthlySeries:
    t: np.ndarray
    value: np.ndarray
    count: np.ndarray
    start_month: tuple = None

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=int)
        self.value = np.asarray(self.value, dtype=float)
        self.count = (np.ones(self.t.size, dtype=int) if self.count is None
                      else np.asarray(self.count, dtype=int))
        if not self.t.shape == self.value.shape == self.count.shape:
            raise DataError("monthly series arrays differ in length")
        if np.any(self.count < 1):
            raise DataError("monthly counts must be at least one")

    def __len__(self):
        return self.t.size

    def at_least(self, min_count):
        keep = self.count >= min_count
        return MonthlySeries(self.t[keep], self.value[keep], self.count[keep], self.start_month)


def monthly_average(estimates, attribute="f"):
    """Mean MPV of ``attribute`` per calendar month (UTC) across unflagged estimates."""
    groups = {}
    for est in estimates:
        if est.flagged:
            continue
        t = est.segment_time
        if t is None:
            raise DataError("estimate without a segment timestamp")
        t = t.astimezone(timezone.utc)
        groups.setdefault((t.year, t.month), []).append(float(getattr(est.mpv, attribute)))
    if not groups:
        return MonthlySeries(np.array([], int), np.array([]), np.array([], int))
    keys = sorted(groups)
    y0, m0 = keys[0]
    t = [(y - y0) * 12 + (m - m0) for y, m in keys]
    return MonthlySeries(np.array(t), np.array([np.mean(groups[k]) for k in keys]),
                         np.array([len(groups[k]) for k in keys]), (y0, m0))


def fit_exponential_trend(series, min_count=10, min_months=12, max_iter=20):
    """Least-squares fit of ``a * exp(b t)`` to the monthly series.

    Starts from a straight-line fit to ``ln(value)`` and refines with
    Gauss-Newton steps on the original scale.  Months holding fewer than
    ``min_count`` segments are ignored.
    """
    s = series.at_least(min_count)
    if len(s) < min_months:
        raise DataError(f"trend fit needs at least {min_months} months with "
                        f">= {min_count} segments, got {len(s)}")
    t, y = s.t.astype(float), s.value
    if np.any(y <= 0):
        raise DataError("exponential trend requires positive monthly values")
    b, ln_a = np.polyfit(t, np.log(y), 1)
    a = math.exp(ln_a)
    for _ in range(max_iter):
        e = np.exp(b * t)
        r = y - a * e
        J = np.column_stack([e, a * t * e])
        step, *_ = np.linalg.lstsq(J, r, rcond=None)
        a, b = a + step[0], b + step[1]
        if abs(step[0]) <= 1e-14 * abs(a) and abs(step[1]) <= 1e-14 * max(abs(b), 1e-12):
            break
    return float(a), float(b)


def ks_test(samples, cdf):
    """One-sample Kolmogorov-Smirnov statistic and asymptotic p-value.

    ``cdf`` is any callable returning model CDF values; the p-value is the
    Kolmogorov survival function at ``sqrt(n) * D`` (no correction for
    parameters estimated from the same sample).
    """
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n == 0:
        raise DataError("KS test needs at least one sample")
    F = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    D = float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))
    p = float(special.kolmogorov(math.sqrt(n) * D))
    return D, p


def _fit_family(name, x):
    dist = FAMILIES[name]
    if name == "normal":
        return dist.fit(x)
    if name == "gev":
        # seed with the method-of-moments Gumbel to keep the optimizer away from c extremes
        scale0 = np.std(x) * math.sqrt(6) / math.pi
        loc0 = np.mean(x) - 0.5772156649 * scale0
        return dist.fit(x, 0.1, loc=loc0, scale=scale0)
    if np.any(x <= 0):
        raise DataError(f"{name} fit requires positive samples")
    return dist.fit(x, floc=0)


def _param_dict(name, params):
    if name == "normal":
        return {"mu": params[0], "sigma": params[1]}
    if name == "gev":
        # scipy's shape c is the negative of the usual GEV shape k
        return {"k": -params[0], "mu": params[1], "sigma": params[2]}
    if name == "lognormal":
        return {"mu": math.log(params[2]), "sigma": params[0]}
    return {"a": params[0], "b": params[2]}


def _scipy_params(name, p):
    if name == "normal":
        return (p["mu"], p["sigma"])
    if name == "gev":
        return (-p["k"], p["mu"], p["sigma"])
    if name == "lognormal":
        return (p["sigma"], 0.0, math.exp(p["mu"]))
    return (p["a"], 0.0, p["b"])


@dataclass
class FluctuationModel:
    family: str
    params: dict
    ks_p: float
    candidates: dict = field(default_factory=dict)
    loc_shift: float = 0.0

    def distribution(self):
        args = _scipy_params(self.family, self.params)
        *shape, loc, scale = args
        return FAMILIES[self.family](*shape, loc=loc + self.loc_shift, scale=scale)

    def to_dict(self):
        return {"family": self.family, "params": self.params, "ks_p": self.ks_p,
                "candidates": self.candidates, "loc_shift": self.loc_shift}

    @classmethod
    def from_dict(cls, d):
        return cls(d["family"], dict(d["params"]), d["ks_p"], dict(d.get("candidates", {})),
                   d.get("loc_shift", 0.0))


def fit_fluctuation(samples, families=FREQUENCY_FAMILIES, alpha=0.05, force=None, min_samples=24):
    """Fit each family by maximum likelihood and keep the one with the largest KS p-value.

    Raises ``DataError`` listing every p-value if none exceeds ``alpha``,
    unless ``force`` names the family to use regardless.
    """
    x = np.asarray(samples, dtype=float)
    if x.size < min_samples:
        raise DataError(f"fluctuation fit needs at least {min_samples} samples, got {x.size}")
    if np.ptp(x) == 0:
        raise DataError("fluctuation samples have zero variance")
    candidates, fitted = {}, {}
    for name in families:
        if name not in FAMILIES:
            raise DomainError(f"unknown distribution family {name!r}")
        try:
            params = _fit_family(name, x)
        except DataError as exc:
            candidates[name] = {"p": None, "D": None, "error": str(exc)}
            continue
        D, p = ks_test(x, FAMILIES[name](*params).cdf)
        fitted[name] = params
        candidates[name] = {"p": p, "D": D, "params": _param_dict(name, params)}
    if force is not None:
        if force not in fitted:
            raise DataError(f"forced family {force!r} could not be fitted")
        best = force
    else:
        ok = {k: v["p"] for k, v in candidates.items() if v["p"] is not None and v["p"] > alpha}
        if not ok:
            listing = ", ".join(f"{k}: p={v['p']}" for k, v in candidates.items())
            raise DataError(f"no distribution family passes the KS test at {alpha} ({listing})")
        best = max(ok, key=ok.get)
    return FluctuationModel(best, _param_dict(best, fitted[best]), candidates[best]["p"], candidates)


def correlation_check(x, y, threshold=0.1):
    """Pearson correlation of paired estimates and whether independence is justified."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size != y.size:
        raise DataError("correlation needs paired samples of equal length")
    if x.size < 10:
        raise DataError(f"correlation needs at least 10 pairs, got {x.size}")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise DataError("correlation undefined for a constant series")
    r = float(np.corrcoef(x, y)[0, 1])
    return r, abs(r) < threshold


@dataclass
class DeteriorationModel:
    """Trend ``a * exp(b t)`` (t in months) plus a time-invariant fluctuation distribution."""

    a: float
    b: float
    fluctuation: FluctuationModel
    kind: str = "frequency"

    def __post_init__(self):
        if not self.a > 0:
            raise DomainError("trend amplitude a must be positive")
        if self.kind not in ("frequency", "damping"):
            raise DomainError("kind must be 'frequency' or 'damping'")

    def trend(self, t):
        return self.a * np.exp(self.b * np.asarray(t, dtype=float))

    def to_dict(self):
        return {"a": self.a, "b": self.b, "kind": self.kind,
                "fluctuation": self.fluctuation.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["a"], d["b"], FluctuationModel.from_dict(d["fluctuation"]), d.get("kind", "frequency"))


def detrended(series, a, b):
    """Monthly values with the trend removed and re-centered on ``a``."""
    return series.value - a * np.exp(b * series.t) + a


def fit_deterioration(series, kind="frequency", families=None, min_count=10, force=None):
    """Trend plus fluctuation model for one modal property.

    Frequencies get an exponential trend; damping ratios a constant trend at
    the sample mean.  The fluctuation distribution is fitted to the detrended
    monthly values.
    """
    if kind == "frequency":
        a, b = fit_exponential_trend(series, min_count=min_count)
        families = families or FREQUENCY_FAMILIES
    else:
        s = series.at_least(min_count)
        if len(s) == 0:
            raise DataError("no months with enough segments for the damping model")
        a, b = float(np.mean(s.value)), 0.0
        families = families or DAMPING_FAMILIES
    s = series.at_least(min_count)
    fluct = fit_fluctuation(detrended(s, a, b), families, force=force)
    return DeteriorationModel(a, b, fluct, kind)


def project(model, year, scenario=DampingScenario.NONE, horizon=100):
    """Property distribution for June of ``year``: the fluctuation shifted to the trend mean."""
    if not 0 <= year <= horizon:
        raise DomainError(f"year must lie in [0, {horizon}]")
    scenario = DampingScenario(scenario)
    if model.kind == "frequency":
        target = float(model.trend(12 * year + JUNE))
    else:
        target = model.a * scenario.factor(year)
    base = FluctuationModel(model.fluctuation.family, model.fluctuation.params, model.fluctuation.ks_p)
    shift = target - float(base.distribution().mean())
    return FluctuationModel(base.family, base.params, base.ks_p, loc_shift=shift).distribution()

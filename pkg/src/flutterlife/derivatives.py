"""Flutter derivative sets (Scanlan H1*-H4*, A1*-A4*).

Curves are functions of the reduced velocity ``U_r = 2*pi/K = U/(f*B)``
with the reduced frequency ``K = omega*B/U`` based on the full deck width.
"""

import csv
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial
from scipy import special

from .errors import DataError, DomainError

NAMES = ("H1", "H2", "H3", "H4", "A1", "A2", "A3", "A4")
DEFAULT_ORDERS = {name: 2 for name in NAMES} | {"H2": 4}


class FlutterDerivativeSet:
    """Common interface: ``evaluate(K)`` returns the eight derivatives at ``K``.

    The returned array has shape ``(8,) + np.shape(K)`` ordered as ``NAMES``.
    """

    ur_range = (0.0, np.inf)
    allow_extrapolation = False

    def _values(self, K):
        raise NotImplementedError

    def check_range(self, K):
        K = np.asarray(K, dtype=float)
        if np.any(K <= 0):
            raise DomainError("reduced frequency K must be positive")
        if self.allow_extrapolation:
            return
        ur = 2 * np.pi / K
        lo, hi = self.ur_range
        # small slack so that grid endpoints computed through 2*pi/K round-trip
        tol = 1e-9 * max(1.0, hi if np.isfinite(hi) else 1.0)
        if np.any(ur < lo - tol) or np.any(ur > hi + tol):
            raise DomainError(
                f"reduced velocity outside the valid derivative range [{lo:g}, {hi:g}]"
            )

    def evaluate(self, K):
        self.check_range(K)
        return self._values(np.asarray(K, dtype=float))

    def as_dict(self, K):
        values = self.evaluate(K)
        return dict(zip(NAMES, values))


def theodorsen(k):
    """Theodorsen circulation function ``C(k) = F + iG`` at half-chord reduced frequency ``k``."""
    k = np.asarray(k, dtype=float)
    if np.any(k <= 0):
        raise DomainError("Theodorsen function requires k > 0")
    h1 = special.hankel2(1, k)
    h0 = special.hankel2(0, k)
    return h1 / (h1 + 1j * h0)


class TheodorsenDerivatives(FlutterDerivativeSet):
    """Closed-form flat-plate derivatives (thin airfoil, rotation about mid-chord).

    Valid for every ``K > 0``; there is no polynomial range restriction.
    """

    def __init__(self, ur_range=(0.0, np.inf)):
        self.ur_range = tuple(ur_range)

    def _values(self, K):
        c = theodorsen(K / 2)
        F, G = c.real, c.imag
        pi = np.pi
        H1 = -2 * pi * F / K
        H2 = -pi / (2 * K) * (1 + F + 4 * G / K)
        H3 = -2 * pi / K**2 * (F - K * G / 4)
        H4 = pi / 2 * (1 + 4 * G / K)
        A1 = pi * F / (2 * K)
        A2 = -pi / (2 * K**2) * (K / 4 - G - K * F / 4)
        A3 = pi / (2 * K**2) * (K**2 / 32 + F - K * G / 4)
        A4 = -pi * G / (2 * K)
        return np.array([H1, H2, H3, H4, A1, A2, A3, A4])


@dataclass
class PolynomialDerivatives(FlutterDerivativeSet):
    """Least-squares polynomial fits of measured derivative curves in ``U_r``."""

    polynomials: dict
    ranges: dict
    orders: dict
    rms: dict = field(default_factory=dict)
    allow_extrapolation: bool = False

    @property
    def ur_range(self):
        lo = max(r[0] for r in self.ranges.values())
        hi = min(r[1] for r in self.ranges.values())
        return (lo, hi)

    def _values(self, K):
        ur = 2 * np.pi / K
        return np.array([self.polynomials[name](ur) for name in NAMES])

    def to_dict(self):
        return {
            name: {
                "coefficients": self.polynomials[name].convert().coef.tolist(),
                "ur_range": list(self.ranges[name]),
                "order": self.orders[name],
                "rms": self.rms.get(name),
            }
            for name in NAMES
        }


def fit_derivatives(measurements, orders=None, exclusions=None, allow_extrapolation=False):
    """Fit one polynomial per derivative curve.

    Parameters
    ----------
    measurements : dict
        ``name -> (ur, value)`` arrays for each of the eight derivatives.
    orders : dict, optional
        Polynomial order per curve; defaults to quadratic, quartic for H2*.
    exclusions : dict, optional
        ``name -> indices`` of points to drop before fitting.
    """
    orders = {**DEFAULT_ORDERS, **(orders or {})}
    exclusions = exclusions or {}
    polys, ranges, rms = {}, {}, {}
    for name in NAMES:
        if name not in measurements:
            raise DataError(f"missing measurements for derivative {name}")
        ur, value = (np.asarray(a, dtype=float) for a in measurements[name])
        keep = np.ones(ur.size, dtype=bool)
        keep[list(exclusions.get(name, []))] = False
        ur, value = ur[keep], value[keep]
        order = int(orders[name])
        if ur.size < order + 2:
            raise DataError(
                f"derivative {name}: {ur.size} points retained, need at least {order + 2}"
            )
        poly = Polynomial.fit(ur, value, order)
        polys[name] = poly
        ranges[name] = (float(ur.min()), float(ur.max()))
        rms[name] = float(np.sqrt(np.mean((poly(ur) - value) ** 2)))
    return PolynomialDerivatives(polys, ranges, orders, rms, allow_extrapolation)


def read_derivative_csv(path):
    """Read ``derivative,ur,value`` rows into the ``measurements`` mapping."""
    data = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"derivative", "ur", "value"} <= set(reader.fieldnames):
            raise DataError(f"{path}: expected columns derivative,ur,value")
        for lineno, row in enumerate(reader, start=2):
            name = row["derivative"].strip().upper().rstrip("*")
            if name not in NAMES:
                raise DataError(f"{path}: unknown derivative {row['derivative']!r}", row=lineno)
            try:
                ur, value = float(row["ur"]), float(row["value"])
            except (TypeError, ValueError):
                raise DataError(f"{path}: non-numeric value at row {lineno}", row=lineno) from None
            data.setdefault(name, ([], []))
            data[name][0].append(ur)
            data[name][1].append(value)
    return {k: (np.array(u), np.array(v)) for k, (u, v) in data.items()}


def write_derivative_csv(path, measurements):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["derivative", "ur", "value"])
        for name in NAMES:
            for ur, value in zip(*measurements[name]):
                writer.writerow([name, repr(float(ur)), repr(float(value))])


def sample_derivatives(derivs, ur):
    """Tabulate a derivative set at reduced velocities ``ur`` (measurement mapping)."""
    ur = np.asarray(ur, dtype=float)
    values = derivs.evaluate(2 * np.pi / ur)
    return {name: (ur.copy(), values[i]) for i, name in enumerate(NAMES)}

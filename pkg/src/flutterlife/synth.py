"""Synthetic ambient-vibration records with known modal parameters."""

from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np
from scipy import linalg, signal

from .errors import DomainError, NumericalFailure
from .ingest import AccelerationSegment


@dataclass
class SyntheticModeSpec:
    f: float
    zeta: float
    phi: np.ndarray = field(repr=False)
    S: float

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=float)
        if not self.f > 0:
            raise DomainError("mode frequency must be positive")
        if not 0 < self.zeta < 1:
            raise DomainError("damping ratio must lie in (0, 1)")
        if not abs(np.linalg.norm(self.phi) - 1) < 1e-9:
            raise DomainError("mode shape must have unit norm")
        if self.S < 0:
            raise DomainError("modal excitation PSD must be non-negative")


def _discretize(f, zeta, h):
    """Exact zero-order-hold discretization of q'' + 2 zeta w q' + w^2 q = u over step ``h``."""
    w = 2 * np.pi * f
    A = np.array([[0.0, 1.0], [-(w**2), -2 * zeta * w]])
    M = np.zeros((3, 3))
    M[:2, :2] = A
    M[1, 2] = 1.0
    E = linalg.expm(M * h)
    return E[:2, :2], E[:2, 2]


def _modal_velocity(spec, h, n_steps, every, rng):
    """Velocity of one modal oscillator at steps ``0, every, 2*every, ...``.

    Excitation is piecewise-constant white noise with one-sided PSD ``spec.S``;
    the initial state is drawn from the stationary distribution.
    """
    Ad, Bd = _discretize(spec.f, spec.zeta, h)
    if np.max(np.abs(np.linalg.eigvals(Ad))) >= 1.0:
        raise NumericalFailure("unstable discrete oscillator; reduce the integration step")
    var_w = spec.S / (2 * h)
    u = rng.standard_normal(n_steps + 1) * np.sqrt(var_w)
    P = linalg.solve_discrete_lyapunov(Ad, np.outer(Bd, Bd) * var_w)
    P = 0.5 * (P + P.T)
    x0 = rng.multivariate_normal(np.zeros(2), P, method="cholesky") if var_w > 0 else np.zeros(2)

    num, den = signal.ss2tf(Ad, Bd[:, None], np.array([[0.0, 1.0]]), np.zeros((1, 1)))
    forced = signal.lfilter(num[0], den, u)[::every]

    # free response [0, 1] Ad^k x0 via the eigen-decomposition of Ad
    mu, V = np.linalg.eig(Ad)
    coef = V[1, :] * np.linalg.solve(V, x0.astype(complex))
    k = np.arange(0, n_steps + 1, every)
    free = (coef[None, :] * np.exp(np.outer(k, np.log(mu)))).sum(axis=1).real
    return forced + free


def simulate_modal_response(modes, sigma2, duration, fs, seed, substeps=10,
                            start_time=None, channel_ids=None):
    """Simulate ``Phi @ modal accelerations + noise`` sampled at ``fs``.

    Each mode is an independent SDOF oscillator integrated exactly at
    ``substeps * fs``.  Output samples are block averages of acceleration over
    one output interval, i.e. velocity increments divided by ``dt``, which acts
    as the anti-alias filter for the decimation.  Measurement noise is white
    with one-sided PSD ``sigma2``.
    """
    if not modes:
        raise DomainError("at least one mode is required")
    if fs <= 20 * max(m.f for m in modes):
        raise DomainError("sampling rate must exceed 20x the highest modal frequency")
    n_out = int(round(duration * fs))
    if n_out < 2**12:
        raise DomainError("duration * fs must be at least 4096 samples")
    if substeps < 10:
        raise DomainError("integration substep rate must be at least 10x the sampling rate")
    n_ch = modes[0].phi.size
    if any(m.phi.size != n_ch for m in modes):
        raise DomainError("all mode shapes must have the same length")
    dt = 1.0 / fs
    h = dt / substeps
    rng = np.random.default_rng(seed)
    out = np.zeros((n_out, n_ch))
    for m in modes:
        v = _modal_velocity(m, h, n_out * substeps, substeps, rng)
        acc = np.diff(v) / dt
        out += acc[:, None] * m.phi[None, :]
    if sigma2 > 0:
        out += rng.standard_normal(out.shape) * np.sqrt(sigma2 / (2 * dt))
    if start_time is None:
        start_time = datetime(2010, 1, 1, tzinfo=timezone.utc)
    if channel_ids is None:
        channel_ids = [f"ch{i + 1}" for i in range(n_ch)]
    return AccelerationSegment(start_time, dt, channel_ids, out)


def modal_psd(f, f_mode, zeta, S, sigma2=0.0):
    """One-sided PSD of a single mode's acceleration plus white noise."""
    beta = f_mode / np.asarray(f, dtype=float)
    return S / ((beta**2 - 1) ** 2 + (2 * zeta * beta) ** 2) + sigma2


@dataclass
class CampaignMode:
    """Monthly-varying truth for one synthetic mode.

    Frequency follows ``a * exp(b * month) * (1 + f_fluctuation * N(0, 1))``;
    damping is lognormal about ``zeta`` with coefficient of variation ``zeta_cov``.
    """

    a: float
    b: float
    zeta: float
    phi: np.ndarray
    S: float
    f_fluctuation: float = 0.0
    zeta_cov: float = 0.0
    role: str = None


@dataclass
class Campaign:
    segments: list
    winds: list
    truth: list  # rows: (month, mode index, f, zeta)


def _add_months(t, months):
    y, m = divmod(t.month - 1 + months, 12)
    return t.replace(year=t.year + y, month=m + 1)


def simulate_campaign(modes, sigma2, months, segments_per_month, fs, seed,
                      start=None, substeps=10):
    """Hourly night-time segments over ``months`` with decoys for the wind/hour filter.

    Each month holds ``segments_per_month`` segments starting 02:00 UTC on days
    1, 2, ... with hourly wind 2.2-3.8 m/s, plus one noon segment and one
    high-wind segment that the default filter rejects.
    """
    from .ingest import WindRecord

    if segments_per_month > 25:
        raise DomainError("at most 25 segments per month are supported")
    start = start or datetime(2010, 1, 1, tzinfo=timezone.utc)
    start = start.replace(day=1, hour=0, minute=0, second=0, microsecond=0)
    ss = np.random.SeedSequence(seed)
    truth_rng = np.random.default_rng(ss.spawn(1)[0])
    n_ch = len(modes[0].phi)
    channel_ids = [f"ch{i + 1}" for i in range(n_ch)]
    segments, winds, truth = [], [], []
    seg_seeds = iter(ss.spawn(months * (segments_per_month + 2)))
    for month in range(months):
        t_month = _add_months(start, month)
        specs = []
        for i, m in enumerate(modes):
            f = m.a * np.exp(m.b * month) * (1 + m.f_fluctuation * truth_rng.standard_normal())
            if m.zeta_cov > 0:
                s_ln = np.sqrt(np.log1p(m.zeta_cov**2))
                zeta = m.zeta * np.exp(s_ln * truth_rng.standard_normal() - 0.5 * s_ln**2)
            else:
                zeta = m.zeta
            phi = np.asarray(m.phi, dtype=float)
            specs.append(SyntheticModeSpec(float(f), float(zeta), phi / np.linalg.norm(phi), m.S))
            truth.append((month, i, float(f), float(zeta)))
        slots = [(day + 1, 2, truth_rng.uniform(2.2, 3.8)) for day in range(segments_per_month)]
        slots += [(26, 12, truth_rng.uniform(2.2, 3.8)), (27, 3, truth_rng.uniform(6.0, 10.0))]
        for day, hour, speed in slots:
            t0 = t_month.replace(day=day, hour=hour)
            seg = simulate_modal_response(specs, sigma2, 3600.0, fs, next(seg_seeds),
                                          substeps=substeps, start_time=t0,
                                          channel_ids=channel_ids)
            segments.append(seg)
            winds.append(WindRecord(t0, float(speed), float(truth_rng.uniform(0, 360))))
    return Campaign(segments, winds, truth)

"""Acceleration/wind record loading, segment selection and the scaled FFT."""

import csv
import gzip
import logging
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from zoneinfo import ZoneInfo

import numpy as np

from .errors import DataError, DomainError

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class AccelerationSegment:
    """Multichannel acceleration record, ``samples`` shaped ``(N, n)`` in m/s^2."""

    start_time: datetime
    dt: float
    channel_ids: tuple
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim == 1:
            samples = samples[:, None]
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "channel_ids", tuple(self.channel_ids))
        if samples.shape[0] < 2:
            raise DataError("segment needs at least two samples")
        if not self.dt > 0:
            raise DataError("sample interval must be positive")
        if samples.shape[1] != len(self.channel_ids):
            raise DataError("channel count does not match channel ids")
        if not np.all(np.isfinite(samples)):
            row = int(np.nonzero(~np.all(np.isfinite(samples), axis=1))[0][0])
            raise DataError(f"missing sample at row {row}", row=row)
        if self.start_time.tzinfo is None:
            object.__setattr__(self, "start_time", self.start_time.replace(tzinfo=timezone.utc))

    @property
    def n_samples(self):
        return self.samples.shape[0]

    @property
    def n_channels(self):
        return self.samples.shape[1]

    @property
    def fs(self):
        return 1.0 / self.dt

    @property
    def duration(self):
        return self.n_samples * self.dt


@dataclass(frozen=True)
class WindRecord:
    start_time: datetime
    mean_speed: float
    direction: float

    def __post_init__(self):
        if not self.mean_speed >= 0:
            raise DataError("mean wind speed must be non-negative")
        if not 0 <= self.direction < 360:
            raise DataError("wind direction must lie in [0, 360)")
        if self.start_time.tzinfo is None:
            object.__setattr__(self, "start_time", self.start_time.replace(tzinfo=timezone.utc))


@dataclass(frozen=True, eq=False)
class FftData:
    """Scaled FFT ordinates k = 2..N_q: ``freqs`` (Hz) and ``Z`` rows ``[Re F_k, Im F_k]``."""

    freqs: np.ndarray
    Z: np.ndarray
    dt: float
    N: int
    start_time: datetime = None

    @property
    def n_channels(self):
        return self.Z.shape[1] // 2

    @property
    def F(self):
        return self.Z[:, : self.n_channels]

    @property
    def G(self):
        return self.Z[:, self.n_channels:]

    def band(self, f_lo, f_hi):
        mask = (self.freqs >= f_lo) & (self.freqs <= f_hi)
        return self.freqs[mask], self.Z[mask]


def _parse_time(text):
    t = datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
    if t.tzinfo is None:
        t = t.replace(tzinfo=timezone.utc)
    return t


def load_acceleration_csv(path):
    """Read an acceleration CSV with ``# fs_hz=``, ``# start=``, ``# channels=`` headers.

    Files ending in ``.gz`` are decompressed transparently.
    """
    meta = {}
    rows = []
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rt") as fh:
        lineno = 0
        for lineno, line in enumerate(fh, start=1):
            if line.startswith("#"):
                key, sep, value = line[1:].strip().partition("=")
                if not sep:
                    raise DataError(f"{path}: malformed header line {lineno}", row=lineno)
                meta[key.strip()] = value.strip()
                continue
            if not line.strip():
                continue
            rows.append((lineno, line))
    for key in ("fs_hz", "start", "channels"):
        if key not in meta:
            raise DataError(f"{path}: missing header '# {key}='")
    try:
        fs = float(meta["fs_hz"])
        start = _parse_time(meta["start"])
    except ValueError as exc:
        raise DataError(f"{path}: malformed header ({exc})") from None
    if not fs > 0:
        raise DataError(f"{path}: fs_hz must be positive")
    channels = [c.strip() for c in meta["channels"].split(",") if c.strip()]
    n = len(channels)
    data = np.empty((len(rows), n))
    for i, (lineno, line) in enumerate(rows):
        cells = line.strip().split(",")
        if len(cells) != n:
            raise DataError(f"{path}: expected {n} columns at row {lineno}", row=lineno)
        try:
            data[i] = [float(c) for c in cells]
        except ValueError:
            raise DataError(f"{path}: non-numeric sample at row {lineno}", row=lineno) from None
        if not np.all(np.isfinite(data[i])):
            raise DataError(f"{path}: missing sample at row {lineno}", row=lineno)
    return AccelerationSegment(start, 1.0 / fs, channels, data)


def write_acceleration_csv(path, segment, fmt="%.17g"):
    """Write ``segment`` in the acceleration CSV format (lossless with the default format).

    A ``.gz`` suffix on ``path`` produces a gzip-compressed file.
    """
    header = (
        f"fs_hz={segment.fs!r}\n"
        f"start={segment.start_time.isoformat()}\n"
        f"channels={','.join(segment.channel_ids)}"
    )
    if str(path).endswith(".gz"):
        # zero mtime keeps the compressed bytes reproducible
        with open(path, "wb") as raw, gzip.GzipFile(filename="", mode="wb", fileobj=raw,
                                                           compresslevel=1, mtime=0) as fh:
            np.savetxt(fh, segment.samples, fmt=fmt, delimiter=",", header=header, comments="# ")
    else:
        np.savetxt(path, segment.samples, fmt=fmt, delimiter=",", header=header, comments="# ")


def load_wind_csv(path):
    """Read hourly wind records (columns ``start,mean_speed_mps,direction_deg``)."""
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"start", "mean_speed_mps", "direction_deg"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise DataError(f"{path}: expected columns start,mean_speed_mps,direction_deg")
        for lineno, row in enumerate(reader, start=2):
            try:
                records.append(WindRecord(_parse_time(row["start"]),
                                          float(row["mean_speed_mps"]),
                                          float(row["direction_deg"])))
            except (TypeError, ValueError):
                raise DataError(f"{path}: bad wind record at row {lineno}", row=lineno) from None
    return records


def write_wind_csv(path, records):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["start", "mean_speed_mps", "direction_deg"])
        for r in records:
            writer.writerow([r.start_time.isoformat(), repr(r.mean_speed), repr(r.direction)])


def split_hourly(segment):
    """Cut a long record into clock-hour windows; partial windows are dropped."""
    t0 = segment.start_time
    first = t0.replace(minute=0, second=0, microsecond=0)
    if first < t0:
        first += timedelta(hours=1)
    per_hour = 3600.0 / segment.dt
    n_hour = int(round(per_hour))
    if abs(per_hour - n_hour) > 1e-6:
        raise DataError("sampling interval does not divide one hour")
    out = []
    start = first
    while True:
        offset = (start - t0).total_seconds() / segment.dt
        i0 = int(round(offset))
        i1 = i0 + n_hour
        if i1 > segment.n_samples:
            break
        out.append(AccelerationSegment(start, segment.dt, segment.channel_ids,
                                       segment.samples[i0:i1]))
        start += timedelta(hours=1)
    return out


def _hour_key(t):
    return t.astimezone(timezone.utc).replace(minute=0, second=0, microsecond=0)


def filter_segments(segments, winds, speed_range=(2.0, 4.0), hour_range=(0, 7), tz="UTC"):
    """Keep segments with hourly mean wind in ``speed_range`` and local start hour in ``hour_range``.

    Wind records are matched by UTC start hour.  Segments without a wind record
    are skipped and counted in the log rather than raising.
    """
    lo, hi = speed_range
    h_lo, h_hi = hour_range
    zone = ZoneInfo(tz)
    by_hour = {_hour_key(w.start_time): w for w in winds}
    kept, missing = [], 0
    for seg in segments:
        wind = by_hour.get(_hour_key(seg.start_time))
        if wind is None:
            missing += 1
            continue
        hour = seg.start_time.astimezone(zone).hour
        if lo <= wind.mean_speed <= hi and h_lo <= hour < h_hi:
            kept.append(seg)
    if missing:
        log.warning("%d segment(s) without a matching wind record were skipped", missing)
    return kept


def scaled_fft(segment, detrend=True):
    """Scaled FFT ``sqrt(2*dt/N) * sum_j x_j exp(-2*pi*i*(k-1)(j-1)/N)`` for k = 2..N_q.

    The per-channel mean is removed first unless ``detrend`` is false.
    """
    N = segment.n_samples
    if N < 4:
        raise DomainError("scaled FFT needs at least 4 samples")
    x = segment.samples
    if detrend:
        x = x - x.mean(axis=0)
    nq = N // 2 + 1
    spec = np.fft.rfft(x, axis=0)[1:nq] * np.sqrt(2 * segment.dt / N)
    freqs = np.arange(1, nq) / (N * segment.dt)
    Z = np.hstack([spec.real, spec.imag])
    return FftData(freqs=freqs, Z=Z, dt=segment.dt, N=N, start_time=segment.start_time)

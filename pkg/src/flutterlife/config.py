"""Pipeline configuration: JSON file validated before any stage runs."""

import hashlib
import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import (BaseModel, ConfigDict, Field, PrivateAttr, ValidationError, field_validator,
                      model_validator)

from .errors import ConfigError
from .surrogate import DEFAULT_BOX, VARIABLES

# Bayesian-method frequencies of the six lowest deck modes (Hz)
REFERENCE_FREQUENCIES = {
    "1-AS-V": 0.0948,
    "2-S-V": 0.1330,
    "2-AS-V": 0.1828,
    "1-S-T": 0.2302,
    "1-AS-T": 0.2383,
    "3-AS-V": 0.2767,
}


def default_bands(frequencies=REFERENCE_FREQUENCIES, half_width=0.10):
    """Bands of +-``half_width`` around each frequency, clipped at midpoints to neighbours."""
    items = sorted(frequencies.items(), key=lambda kv: kv[1])
    bands = []
    for i, (name, f) in enumerate(items):
        lo, hi = f * (1 - half_width), f * (1 + half_width)
        if i > 0:
            lo = max(lo, 0.5 * (items[i - 1][1] + f))
        if i < len(items) - 1:
            hi = min(hi, 0.5 * (items[i + 1][1] + f))
        role = {"1-AS-V": "v1", "1-AS-T": "t1"}.get(name)
        bands.append({"name": name, "f_lo": lo, "f_hi": hi, "role": role})
    return bands


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class Paths(_Strict):
    acceleration_dir: Optional[str] = None
    wind_file: Optional[str] = None
    derivative_file: Optional[str] = None


class BandConfig(_Strict):
    name: str
    f_lo: float = Field(gt=0)
    f_hi: float = Field(gt=0)
    role: Optional[Literal["v1", "t1"]] = None

    @model_validator(mode="after")
    def _ordered(self):
        if not self.f_lo < self.f_hi:
            raise ValueError(f"band {self.name}: f_lo must be below f_hi")
        return self


class BridgeConfig(_Strict):
    B: float = Field(36.0, gt=0)
    span: float = Field(1650.0, gt=0)
    m0: float = Field(27000.0, gt=0)
    I0: float = Field(3.0e6, gt=0)
    rho: float = Field(1.225, ge=0)


class DerivativeConfig(_Strict):
    source: Literal["csv", "theodorsen"] = "csv"
    ur_convention: Literal["U/(fB)"] = "U/(fB)"
    orders: dict = Field(default_factory=dict)
    exclusions: dict = Field(default_factory=dict)
    allow_extrapolation: bool = False


class DesignPoint(_Strict):
    f_v1: float = Field(0.0948, gt=0)
    f_t1: float = Field(0.2383, gt=0)
    zeta_v1: float = Field(0.0078, gt=0, lt=0.2)
    zeta_t1: float = Field(0.0031, gt=0, lt=0.2)


class FlutterConfig(_Strict):
    ur_range: tuple[float, float] = (5.0, 16.0)
    n_k: int = Field(240, ge=10)
    corrected: bool = True
    design_point: DesignPoint = Field(default_factory=DesignPoint)


class FilterConfig(_Strict):
    speed_range: tuple[float, float] = (2.0, 4.0)
    hour_range: tuple[int, int] = (0, 7)
    tz: str = "UTC"


class TrendConfig(_Strict):
    min_segments_per_month: int = Field(10, ge=1)
    frequency_families: list[Literal["normal", "gev", "lognormal", "gamma"]] = ["normal", "gev"]
    damping_families: list[Literal["normal", "gev", "lognormal", "gamma"]] = ["lognormal", "gamma", "gev"]
    force: dict = Field(default_factory=dict)


class DoeConfig(_Strict):
    box: dict = Field(default_factory=lambda: {k: list(v) for k, v in DEFAULT_BOX.items()})
    levels: int = Field(5, ge=2)

    @field_validator("box")
    @classmethod
    def _box(cls, box):
        if set(box) != set(VARIABLES):
            raise ValueError(f"DOE box must list exactly {', '.join(VARIABLES)}")
        for k, (lo, hi) in box.items():
            if not lo < hi:
                raise ValueError(f"DOE range for {k} is degenerate")
        return box


class GumbelConfig(_Strict):
    points: list[tuple[float, float]] = [(50.0, 46.48), (100.0, 50.47)]


class LifecycleConfig(_Strict):
    horizon: int = Field(100, ge=1)
    scenarios: list[Literal["none", "increase-30%", "decrease-30%"]] = [
        "none", "increase-30%", "decrease-30%"]
    grid_points: int = Field(8192, ge=256)


class SimMode(_Strict):
    role: Optional[Literal["v1", "t1"]] = None
    a: float = Field(gt=0)
    b: float = 0.0
    f_fluctuation: float = Field(0.0, ge=0)
    zeta: float = Field(gt=0, lt=0.2)
    zeta_cov: float = Field(0.0, ge=0)
    phi: list[float]
    S: float = Field(gt=0)


class SimulateConfig(_Strict):
    start: str = "2010-01-01T00:00:00+00:00"
    months: int = Field(24, ge=1)
    segments_per_month: int = Field(10, ge=1)
    fs: float = Field(5.0, gt=0)
    sigma2: float = Field(1e-8, ge=0)
    modes: list[SimMode] = Field(default_factory=list)


class PipelineConfig(_Strict):
    paths: Paths = Field(default_factory=Paths)
    bridge: BridgeConfig = Field(default_factory=BridgeConfig)
    derivatives: DerivativeConfig = Field(default_factory=DerivativeConfig)
    flutter: FlutterConfig = Field(default_factory=FlutterConfig)
    bands: list[BandConfig] = Field(default_factory=lambda: [BandConfig(**b) for b in default_bands()])
    filter: FilterConfig = Field(default_factory=FilterConfig)
    trend: TrendConfig = Field(default_factory=TrendConfig)
    doe: DoeConfig = Field(default_factory=DoeConfig)
    gumbel: GumbelConfig = Field(default_factory=GumbelConfig)
    lifecycle: LifecycleConfig = Field(default_factory=LifecycleConfig)
    simulate: SimulateConfig = Field(default_factory=SimulateConfig)
    seed: int = 0
    _digest: str = PrivateAttr(default=None)

    @model_validator(mode="after")
    def _roles(self):
        roles = [b.role for b in self.bands if b.role]
        if len(roles) != len(set(roles)):
            raise ValueError("each band role (v1, t1) may be assigned once")
        return self


def load_config(path, seed=None):
    """Read and validate a config file; relative paths resolve against its directory."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if seed is not None:
        raw["seed"] = seed
    try:
        cfg = PipelineConfig.model_validate(raw)
    except ValidationError as exc:
        first = exc.errors()[0]
        loc = ".".join(str(p) for p in first["loc"])
        raise ConfigError(f"invalid config at {loc or '<root>'}: {first['msg']}") from None
    cfg._digest = config_hash(cfg)
    base = path.resolve().parent
    for key in ("acceleration_dir", "wind_file", "derivative_file"):
        value = getattr(cfg.paths, key)
        if value is None:
            continue
        p = Path(value)
        if not p.is_absolute():
            p = base / p
        if not p.exists():
            raise ConfigError(f"paths.{key} does not exist: {p}")
        setattr(cfg.paths, key, str(p))
    return cfg


def config_hash(cfg):
    """First 12 hex digits of the SHA-256 of the canonical config JSON.

    Configs returned by ``load_config`` carry the digest of their content as
    written (paths unresolved), so it does not depend on the working directory.
    """
    if cfg._digest is not None:
        return cfg._digest
    text = json.dumps(cfg.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:12]

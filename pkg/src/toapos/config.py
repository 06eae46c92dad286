"""Run configuration: one JSON document holding every simulation constant."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .firstpath import ThresholdSpec
from .propagation import ChannelParams, PathLossParams
from .receiver import TapGrid


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class ReportSettings:
    delta_opt_db: float = 11.0
    m2_ab: tuple = (6.0, 4.0)
    m3_l_gamma: tuple = (10, 8.0)


@dataclass(frozen=True)
class RunConfig:
    seed: int = 42
    n_points: int = 1020
    isd_m: float = 1000.0
    n_nearest: int = 7
    speed_mps: float = 50.0 / 3.6
    # Post-correlation SNR of the mean received power at snr_ref_distance_m
    # (None: the serving-cell circumradius).
    snr_db: float = 33.0
    snr_ref_distance_m: Optional[float] = None
    # Campaign defaults: one profile per measurement over a full-slot
    # (2560 chip) lag window.
    k_averages: int = 1
    slot_s: float = 0.010 / 15
    n_taps: int = 2560
    tap_spacing_s: float = 1.0 / 3.84e6
    alpha: float = 3.76
    beta: float = 128.1
    tx_power_db: float = 0.0
    r_scat_m: float = 100.0
    mean_lifespan_s: float = 2.0
    n_components_los: float = 5.0
    n_components_nlos: float = 25.0
    los_dominance_db: float = 6.0
    carrier_hz: float = 2.0e9
    los_prob_serving: float = 0.20
    los_prob_neighbor: float = 0.0
    noiseless: bool = False
    oracle_ranges: bool = False
    include_reference_residual: bool = True
    degeneracy_rcond: float = 1e-6
    threshold: ThresholdSpec = field(default_factory=ThresholdSpec)
    report: ReportSettings = field(default_factory=ReportSettings)
    out_dir: str = "out"
    workers: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self):
        def positive(name):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0 and math.isfinite(v)):
                raise ConfigError(name, f"must be a positive finite number, got {v!r}")

        for name in ("isd_m", "slot_s", "tap_spacing_s", "alpha", "r_scat_m",
                     "mean_lifespan_s", "n_components_nlos", "carrier_hz", "degeneracy_rcond"):
            positive(name)
        for name in ("n_points", "k_averages", "n_taps", "n_nearest", "workers"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                raise ConfigError(name, f"must be an integer >= 1, got {v!r}")
        if self.n_taps < 8:
            raise ConfigError("n_taps", "must be >= 8")
        if self.n_nearest < 3:
            raise ConfigError("n_nearest", "at least 3 base stations are needed for a fix")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed", f"must be a 64-bit non-negative integer, got {self.seed!r}")
        if not self.speed_mps >= 0:
            raise ConfigError("speed_mps", "must be >= 0")
        if not self.n_components_los > 1:
            raise ConfigError("n_components_los", "must be > 1")
        if not math.isfinite(self.beta):
            raise ConfigError("beta", "must be finite")
        if math.isnan(self.snr_db):
            raise ConfigError("snr_db", "must be a number")
        if self.snr_ref_distance_m is not None and not self.snr_ref_distance_m > 0:
            raise ConfigError("snr_ref_distance_m", "must be > 0")
        for name in ("los_prob_serving", "los_prob_neighbor"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(name, "must lie in [0, 1]")
        if not isinstance(self.threshold, ThresholdSpec):
            raise ConfigError("threshold", "must be a threshold spec")

    @property
    def grid(self) -> TapGrid:
        return TapGrid(self.tap_spacing_s, self.n_taps)

    @property
    def channel(self) -> ChannelParams:
        return ChannelParams(
            path_loss=PathLossParams(self.alpha, self.beta),
            tx_power_db=self.tx_power_db,
            r_scat_m=self.r_scat_m,
            mean_lifespan_s=self.mean_lifespan_s,
            n_components_los=self.n_components_los,
            n_components_nlos=self.n_components_nlos,
            los_dominance_db=self.los_dominance_db,
            carrier_hz=self.carrier_hz,
        )

    @property
    def reference_distance_m(self) -> float:
        if self.snr_ref_distance_m is not None:
            return self.snr_ref_distance_m
        return self.isd_m / math.sqrt(3.0)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, ThresholdSpec):
                v = v.to_dict()
            elif isinstance(v, ReportSettings):
                v = {"delta_opt_db": v.delta_opt_db, "m2_ab": list(v.m2_ab),
                     "m3_l_gamma": list(v.m3_l_gamma)}
            d[f.name] = v
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown configuration field")
        kw = dict(data)
        if "threshold" in kw:
            t = kw["threshold"]
            if not isinstance(t, dict):
                raise ConfigError("threshold", "must be an object")
            try:
                kw["threshold"] = ThresholdSpec(**t)
            except (TypeError, ValueError) as exc:
                raise ConfigError("threshold", str(exc)) from None
        if "report" in kw:
            r = kw["report"]
            try:
                kw["report"] = ReportSettings(
                    float(r.get("delta_opt_db", 11.0)),
                    tuple(float(x) for x in r.get("m2_ab", (6.0, 4.0))),
                    (int(r.get("m3_l_gamma", (10, 8.0))[0]), float(r.get("m3_l_gamma", (10, 8.0))[1])),
                )
            except (TypeError, ValueError, AttributeError, IndexError) as exc:
                raise ConfigError("report", str(exc)) from None
        for name in ("isd_m", "speed_mps", "snr_db", "slot_s", "tap_spacing_s", "alpha", "beta",
                     "tx_power_db", "r_scat_m", "mean_lifespan_s", "n_components_los",
                     "n_components_nlos", "los_dominance_db", "carrier_hz", "los_prob_serving",
                     "los_prob_neighbor", "degeneracy_rcond"):
            if name in kw:
                v = kw[name]
                if isinstance(v, bool) or not isinstance(v, (int, float)):
                    raise ConfigError(name, f"must be a number, got {v!r}")
                kw[name] = float(v)
        return cls(**kw)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def load_config(path) -> RunConfig:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<document>", f"invalid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("<document>", "top level must be an object")
    return RunConfig.from_dict(data)

"""Detection thresholds and first-path detection on a power delay profile.

Three threshold rules are provided:

* ``m1`` -- a fixed number of dB below the profile maximum;
* ``m2`` -- a linear combination of the noise mean and noise std, with the
  noise mean approximated by the mean over the whole window;
* ``m3`` -- noise statistics estimated from what remains after the L
  strongest taps are removed.

All thresholds are linear powers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .propagation import SPEED_OF_LIGHT
from .receiver import PowerDelayProfile, TapGrid

METHODS = ("m1", "m2", "m3")


@dataclass(frozen=True)
class ThresholdSpec:
    """Threshold rule and its parameters.

    Only the parameters of the selected ``method`` are used:
    ``delta_db`` for m1, ``a`` and ``b`` for m2, ``l_strongest`` and
    ``gamma`` for m3.
    """

    method: str = "m1"
    delta_db: float = 11.0
    a: float = 6.0
    b: float = 4.0
    l_strongest: int = 10
    gamma: float = 8.0

    def __post_init__(self):
        method = str(self.method).lower()
        object.__setattr__(self, "method", method)
        if method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if method == "m1" and not self.delta_db >= 0:
            raise ValueError(f"delta_db must be >= 0, got {self.delta_db}")
        if method == "m2":
            if self.a < 0 or self.b < 0:
                raise ValueError("a and b must be >= 0")
            if self.a == 0 and self.b == 0:
                raise ValueError("a and b cannot both be 0")
        if method == "m3":
            if int(self.l_strongest) != self.l_strongest or self.l_strongest < 1:
                raise ValueError(f"l_strongest must be an integer >= 1, got {self.l_strongest}")
            if not self.gamma >= 0:
                raise ValueError(f"gamma must be >= 0, got {self.gamma}")

    def params(self) -> dict:
        """The parameters relevant to ``method``."""
        if self.method == "m1":
            return {"delta_db": self.delta_db}
        if self.method == "m2":
            return {"a": self.a, "b": self.b}
        return {"l_strongest": int(self.l_strongest), "gamma": self.gamma}

    def to_dict(self) -> dict:
        return {"method": self.method, **self.params()}


@dataclass(frozen=True)
class NoiseStats:
    mean: float
    std: float

    @classmethod
    def theoretical(cls, sigma_h: float, k_averages: int) -> "NoiseStats":
        """Mean and std of an averaged pure-noise tap: ``sigma_h**2`` and ``sigma_h**2 / sqrt(K)``."""
        m = sigma_h ** 2
        return cls(m, m / math.sqrt(k_averages))

    @classmethod
    def estimate(cls, z) -> "NoiseStats":
        z = np.asarray(z, dtype=float)
        return cls(float(z.mean()), float(z.std()))


@dataclass(frozen=True)
class Detection:
    tap_index: Optional[int]
    threshold: float

    @property
    def detected(self) -> bool:
        return self.tap_index is not None


def _values(pdp):
    return np.asarray(pdp.z if isinstance(pdp, PowerDelayProfile) else pdp, dtype=float)


def threshold_method1(pdp, delta_db: float) -> float:
    """``max(z)`` lowered by ``delta_db``."""
    z = _values(pdp)
    peak = float(z.max()) if z.size else 0.0
    if not peak > 0:
        raise ValueError("power delay profile has no positive maximum")
    return peak * 10.0 ** (-delta_db / 10.0)


def threshold_method2(pdp: PowerDelayProfile, a: float, b: float) -> float:
    """``mean(z) * (a + b / sqrt(K))`` with the window mean standing in for the noise mean."""
    z = _values(pdp)
    k = pdp.k_averages
    if k < 1:
        raise ValueError("k_averages must be >= 1")
    return float(z.mean()) * (a + b / math.sqrt(k))


def method3_noise(pdp, l_strongest: int) -> NoiseStats:
    """Population mean/std of the taps left after removing the L strongest.

    Ties are resolved in favour of the lower tap index being stronger.
    """
    z = _values(pdp)
    if not 1 <= l_strongest < len(z):
        raise ValueError(f"l_strongest must be in [1, {len(z) - 1}], got {l_strongest}")
    order = np.argsort(-z, kind="stable")
    return NoiseStats.estimate(z[order[int(l_strongest):]])


def threshold_method3(pdp, l_strongest: int, gamma: float) -> float:
    noise = method3_noise(pdp, l_strongest)
    return noise.mean + gamma * noise.std


def compute_threshold(pdp: PowerDelayProfile, spec: ThresholdSpec) -> float:
    if spec.method == "m1":
        return threshold_method1(pdp, spec.delta_db)
    if spec.method == "m2":
        return threshold_method2(pdp, spec.a, spec.b)
    return threshold_method3(pdp, int(spec.l_strongest), spec.gamma)


def detect_first_path(pdp, threshold: float) -> Detection:
    """Earliest tap whose power strictly exceeds ``threshold``."""
    if threshold < 0:
        raise ValueError(f"threshold must be >= 0, got {threshold}")
    z = _values(pdp)
    hits = np.flatnonzero(z > threshold)
    return Detection(int(hits[0]) if hits.size else None, float(threshold))


def detect(pdp: PowerDelayProfile, spec: ThresholdSpec) -> Detection:
    """Threshold by ``spec`` then detect; an all-zero profile yields no detection.

    For m1 the maximum tap is always a candidate, so ``delta_db == 0``
    picks the strongest tap (lowest index among ties) rather than nothing.
    """
    z = _values(pdp)
    if not np.any(z > 0):
        return Detection(None, 0.0)
    det = detect_first_path(z, compute_threshold(pdp, spec))
    if spec.method == "m1" and not det.detected:
        return Detection(int(np.argmax(z)), det.threshold)
    return det


def tap_to_range(tap_index: int, grid: TapGrid) -> float:
    if not 0 <= tap_index < grid.n_taps:
        raise ValueError(f"tap index {tap_index} outside grid of {grid.n_taps} taps")
    return SPEED_OF_LIGHT * tap_index * grid.tap_spacing_s

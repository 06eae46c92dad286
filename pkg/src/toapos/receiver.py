"""Noisy CIR estimates and the non-coherently averaged power delay profile."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

CHIP_RATE = 3.84e6


@dataclass(frozen=True)
class TapGrid:
    tap_spacing_s: float = 1.0 / CHIP_RATE
    n_taps: int = 128

    def __post_init__(self):
        if not self.tap_spacing_s > 0:
            raise ValueError(f"tap_spacing_s must be > 0, got {self.tap_spacing_s}")
        if self.n_taps < 8:
            raise ValueError(f"n_taps must be >= 8, got {self.n_taps}")

    @property
    def max_delay_s(self) -> float:
        return self.tap_spacing_s * self.n_taps


@dataclass(frozen=True)
class NoiseModel:
    """Circularly symmetric complex Gaussian estimation noise.

    ``sigma_h`` is the per-tap standard deviation of the complex noise, so
    real and imaginary parts each have std ``sigma_h / sqrt(2)``.  Zero
    gives a noiseless receiver.
    """

    sigma_h: float

    def __post_init__(self):
        if not (self.sigma_h >= 0 and math.isfinite(self.sigma_h)):
            raise ValueError(f"sigma_h must be finite and >= 0, got {self.sigma_h}")

    @classmethod
    def from_snr(cls, reference_power: float, snr_db: float) -> "NoiseModel":
        """Noise level putting ``reference_power`` at ``snr_db`` above ``sigma_h**2``."""
        if math.isinf(snr_db) and snr_db > 0:
            return cls(0.0)
        return cls(math.sqrt(reference_power / 10.0 ** (snr_db / 10.0)))


@dataclass(frozen=True)
class CirSnapshot:
    taps: np.ndarray
    slot_index: int = 0


@dataclass(frozen=True)
class PowerDelayProfile:
    """Averaged power per tap.  ``grid`` may be omitted for bare profiles."""

    z: np.ndarray
    k_averages: int = 1
    grid: Optional[TapGrid] = None

    def __post_init__(self):
        object.__setattr__(self, "z", np.asarray(self.z, dtype=float))
        if self.k_averages < 1:
            raise ValueError("k_averages must be >= 1")
        if self.grid is not None and len(self.z) != self.grid.n_taps:
            raise ValueError(f"profile has {len(self.z)} taps, grid expects {self.grid.n_taps}")

    def __len__(self):
        return len(self.z)


def observe_cir(true_taps, noise: NoiseModel, rng: np.random.Generator,
                slot_index: int = 0) -> CirSnapshot:
    """One correlator output: true taps plus i.i.d. complex Gaussian noise."""
    h = np.asarray(true_taps, dtype=complex)
    if noise.sigma_h == 0.0:
        return CirSnapshot(h.copy(), slot_index)
    w = rng.standard_normal((2,) + h.shape)
    taps = h + (noise.sigma_h / math.sqrt(2.0)) * (w[0] + 1j * w[1])
    return CirSnapshot(taps, slot_index)


def average_pdp(snapshots, grid: TapGrid = None) -> PowerDelayProfile:
    """Mean of ``|h_i(n)|**2`` over the snapshots."""
    snaps = list(snapshots)
    if not snaps:
        raise ValueError("cannot average an empty list of snapshots")
    n = len(snaps[0].taps)
    if any(len(s.taps) != n for s in snaps):
        raise ValueError("snapshots have mismatched tap counts")
    stack = np.stack([s.taps for s in snaps])
    z = np.mean(stack.real ** 2 + stack.imag ** 2, axis=0)
    return PowerDelayProfile(z, len(snaps), grid)

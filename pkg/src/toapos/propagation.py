"""Time-evolving multipath channel between one base station and the mobile.

Components are single-bounce scatterers fixed in space inside a disc around
the mobile.  Each one is born, lives for a random lifespan and dies; during
its life the amplitude envelope follows a half period of a sine.  In LOS
conditions a direct component is added whose power is held a fixed number of
dB above the sum of all other components.

The channel state is stored as parallel numpy arrays so that a measurement
of several hundred slots can be stepped through quickly; ``ChannelState.components``
gives the per-path view.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0  # m/s


@dataclass(frozen=True)
class PathLossParams:
    """Log-distance path loss ``beta + alpha * 10 log10(d_km)`` in dB."""

    alpha: float = 3.76
    beta: float = 128.1

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if not math.isfinite(self.beta):
            raise ValueError(f"beta must be finite, got {self.beta}")


@dataclass(frozen=True)
class ChannelParams:
    path_loss: PathLossParams = field(default_factory=PathLossParams)
    tx_power_db: float = 0.0
    r_scat_m: float = 300.0
    mean_lifespan_s: float = 2.0
    n_components_los: float = 5.0  # includes the direct component
    n_components_nlos: float = 25.0
    los_dominance_db: float = 6.0
    carrier_hz: float = 2.0e9

    def __post_init__(self):
        for name in ("r_scat_m", "mean_lifespan_s", "n_components_nlos", "carrier_hz"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if not self.n_components_los > 1:
            raise ValueError("n_components_los must be > 1 (the direct path counts as one)")

    @property
    def los_ratio(self) -> float:
        """Linear power ratio direct / sum(others)."""
        return 10.0 ** (self.los_dominance_db / 10.0)

    def target_scatter_count(self, los: bool) -> float:
        return self.n_components_los - 1.0 if los else self.n_components_nlos

    def birth_rate(self, los: bool) -> float:
        """Poisson birth rate giving the target stationary population."""
        return self.target_scatter_count(los) / self.mean_lifespan_s

    def power_budget(self, distance_m: float) -> float:
        """Mean received power (linear) at ``distance_m`` from the base station."""
        return 10.0 ** ((self.tx_power_db - path_loss(distance_m, self.path_loss)) / 10.0)


@dataclass(frozen=True)
class MultipathComponent:
    """One propagation path.

    ``amplitude`` is the instantaneous complex amplitude (fading and carrier
    phase applied); ``peak_amplitude`` is the envelope maximum.
    ``scatterer_pos`` is ``None`` for the direct component.
    """

    amplitude: complex
    delay_s: float
    azimuth_rad: float
    birth_s: float
    lifespan_s: float
    scatterer_pos: Optional[tuple]
    peak_amplitude: complex = 0j
    direct: bool = False


def path_loss(d, params: PathLossParams = PathLossParams()):
    """Path loss in dB for a distance ``d`` in meters.

    Parameters
    ----------
    d : float or array_like
        Transmitter-receiver distance in meters; must be strictly positive.
    params : PathLossParams
        Slope ``alpha`` and intercept ``beta``; distances enter in km.
    """
    d_arr = np.asarray(d, dtype=float)
    if np.any(~(d_arr > 0)):
        raise ValueError(f"path loss distance must be > 0, got {d}")
    out = params.beta + params.alpha * 10.0 * np.log10(d_arr / 1000.0)
    return float(out) if out.ndim == 0 else out


def draw_los(is_serving: bool, rng: np.random.Generator, p_serving: float = 0.2,
             p_neighbor: float = 0.0) -> bool:
    """Draw the LOS/NLOS regime toward one base station."""
    p = p_serving if is_serving else p_neighbor
    if p <= 0.0:
        return False
    return bool(rng.random() < p)


def fading_scale(age_s, lifespan_s):
    """Half-period sine envelope, zero outside ``[0, lifespan]``."""
    age = np.asarray(age_s, dtype=float)
    life = np.asarray(lifespan_s, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.sin(np.pi * age / life)
    s = np.where((age >= 0) & (age < life), s, 0.0)
    return float(s) if s.ndim == 0 else s


def _bearing(frm, to):
    v = np.asarray(to, dtype=float) - np.asarray(frm, dtype=float)
    return np.mod(np.arctan2(v[..., 1], v[..., 0]), 2 * np.pi)


def _scatter_geometry(bs_pos, scat, mobile_pos):
    bs = np.asarray(bs_pos, dtype=float)
    mob = np.asarray(mobile_pos, dtype=float)
    path = np.linalg.norm(scat - bs, axis=-1) + np.linalg.norm(scat - mob, axis=-1)
    return path / SPEED_OF_LIGHT, _bearing(bs, scat)


def _draw_scatterers(n, mobile_pos, params, rng):
    r = params.r_scat_m * np.sqrt(rng.random(n))
    phi = rng.uniform(0.0, 2 * np.pi, n)
    return np.asarray(mobile_pos, dtype=float) + np.column_stack((r * np.cos(phi), r * np.sin(phi)))


def _draw_peaks(n, budget, los, params, rng):
    # Envelope peaks are scaled so that, averaged over sin^2, the scatter
    # population carries the scatter share of the budget.
    share = budget / (1.0 + params.los_ratio) if los else budget
    mean_peak_power = 2.0 * share / params.target_scatter_count(los)
    power = mean_peak_power * rng.exponential(1.0, n)
    phase = rng.uniform(0.0, 2 * np.pi, n)
    return np.sqrt(power) * np.exp(1j * phase)


def _carrier(delay_s, params):
    return np.exp(-2j * np.pi * np.mod(params.carrier_hz * delay_s, 1.0))


def spawn_component(bs_pos, mobile_pos, los_direct: bool, now_s: float,
                    params: ChannelParams, rng: np.random.Generator,
                    channel_los: bool = False) -> MultipathComponent:
    """Create a new path toward the mobile born at ``now_s``.

    A direct component has the geometric delay, the BS-to-mobile bearing and
    an infinite lifespan; its magnitude is assigned by the channel state
    (see :func:`evolve_channel`).  A scatter component draws its scatterer
    uniformly in a disc of radius ``r_scat_m`` around the mobile.
    """
    bs = np.asarray(bs_pos, dtype=float)
    mob = np.asarray(mobile_pos, dtype=float)
    dist = float(np.linalg.norm(mob - bs))
    if dist == 0.0:
        raise ValueError("base station and mobile positions coincide")
    if los_direct:
        delay = dist / SPEED_OF_LIGHT
        budget = params.power_budget(dist)
        mag = math.sqrt(budget * params.los_ratio / (1.0 + params.los_ratio))
        amp = complex(mag * _carrier(delay, params))
        return MultipathComponent(amp, delay, float(_bearing(bs, mob)), now_s,
                                  math.inf, None, peak_amplitude=complex(mag), direct=True)
    scat = _draw_scatterers(1, mob, params, rng)
    life = rng.exponential(params.mean_lifespan_s)
    peak = _draw_peaks(1, params.power_budget(dist), channel_los, params, rng)[0]
    delay, az = _scatter_geometry(bs, scat, mob)
    return MultipathComponent(0j, float(delay[0]), float(az[0]), now_s, float(life),
                              (float(scat[0, 0]), float(scat[0, 1])), peak_amplitude=complex(peak))


@dataclass
class ChannelState:
    """Snapshot of all live components toward one base station at ``time_s``.

    Arrays are parallel, one entry per component.  When ``los`` is set the
    direct component sits at index 0.
    """

    bs_index: int
    los: bool
    time_s: float
    peak: np.ndarray
    birth_s: np.ndarray
    lifespan_s: np.ndarray
    scatterer: np.ndarray  # (n, 2); NaN row for the direct path
    delay_s: np.ndarray = None
    azimuth_rad: np.ndarray = None
    amplitude: np.ndarray = None

    def __len__(self):
        return len(self.peak)

    @property
    def direct(self) -> np.ndarray:
        mask = np.zeros(len(self), dtype=bool)
        if self.los and len(self):
            mask[0] = True
        return mask

    @property
    def total_power_linear(self) -> float:
        return float(np.sum(np.abs(self.amplitude) ** 2))

    @property
    def components(self) -> list:
        out = []
        direct = self.direct
        for i in range(len(self)):
            scat = None if direct[i] else (float(self.scatterer[i, 0]), float(self.scatterer[i, 1]))
            out.append(MultipathComponent(
                complex(self.amplitude[i]), float(self.delay_s[i]), float(self.azimuth_rad[i]),
                float(self.birth_s[i]), float(self.lifespan_s[i]), scat,
                peak_amplitude=complex(self.peak[i]), direct=bool(direct[i])))
        return out


def _refresh(state: ChannelState, bs_pos, mobile_pos, params: ChannelParams) -> ChannelState:
    """Recompute delay, azimuth and instantaneous amplitude for ``state.time_s``."""
    bs = np.asarray(bs_pos, dtype=float)
    mob = np.asarray(mobile_pos, dtype=float)
    n = len(state)
    delay = np.empty(n)
    az = np.empty(n)
    amp = np.empty(n, dtype=complex)
    first = 1 if state.los else 0
    scat = state.scatterer[first:]
    if len(scat):
        d, a = _scatter_geometry(bs, scat, mob)
        delay[first:] = d
        az[first:] = a
        env = fading_scale(state.time_s - state.birth_s[first:], state.lifespan_s[first:])
        amp[first:] = state.peak[first:] * env * _carrier(d, params)
    if state.los:
        dist = float(np.linalg.norm(mob - bs))
        delay[0] = dist / SPEED_OF_LIGHT
        az[0] = _bearing(bs, mob)
        others = float(np.sum(np.abs(amp[1:]) ** 2))
        if others > 0.0:
            mag = math.sqrt(params.los_ratio * others)
        else:
            budget = params.power_budget(dist)
            mag = math.sqrt(budget * params.los_ratio / (1.0 + params.los_ratio))
        state.peak[0] = mag
        amp[0] = mag * _carrier(delay[0], params)
    state.delay_s = delay
    state.azimuth_rad = az
    state.amplitude = amp
    return state


def init_channel(bs_pos, mobile_pos, los: bool, now_s: float, params: ChannelParams,
                 rng: np.random.Generator, bs_index: int = 0) -> ChannelState:
    """Draw a channel state from the stationary birth/death population.

    The number of live scatter components is Poisson with the target mean;
    live lifespans are length-biased (Gamma(2)) and ages uniform within them,
    which is the stationary law of the birth/death process.
    """
    bs = np.asarray(bs_pos, dtype=float)
    mob = np.asarray(mobile_pos, dtype=float)
    dist = float(np.linalg.norm(mob - bs))
    if dist == 0.0:
        raise ValueError("base station and mobile positions coincide")
    n = int(rng.poisson(params.target_scatter_count(los)))
    scat = _draw_scatterers(n, mob, params, rng)
    life = rng.gamma(2.0, params.mean_lifespan_s, n)
    birth = now_s - rng.random(n) * life
    peak = _draw_peaks(n, params.power_budget(dist), los, params, rng)
    if los:
        scat = np.vstack((np.full((1, 2), np.nan), scat))
        life = np.concatenate(([math.inf], life))
        birth = np.concatenate(([now_s], birth))
        peak = np.concatenate(([0j], peak))
    state = ChannelState(bs_index, los, now_s, peak.astype(complex), birth, life, scat)
    return _refresh(state, bs, mob, params)


def channel_from_components(components, bs_pos, mobile_pos, los: bool, now_s: float,
                            params: ChannelParams, bs_index: int = 0) -> ChannelState:
    """Assemble a state from explicit components (direct first if ``los``)."""
    comps = list(components)
    if los and (not comps or not comps[0].direct):
        raise ValueError("LOS state needs the direct component first")
    scat = np.array([[np.nan, np.nan] if c.scatterer_pos is None else c.scatterer_pos
                     for c in comps], dtype=float).reshape(-1, 2)
    state = ChannelState(
        bs_index, los, now_s,
        np.array([c.peak_amplitude for c in comps], dtype=complex),
        np.array([c.birth_s for c in comps], dtype=float),
        np.array([c.lifespan_s for c in comps], dtype=float),
        scat)
    return _refresh(state, bs_pos, mobile_pos, params)


def evolve_channel(state: ChannelState, bs_pos, mobile_pos, now_s: float, dt_s: float,
                   params: ChannelParams, rng: np.random.Generator) -> ChannelState:
    """Advance ``state`` from ``now_s`` to ``now_s + dt_s``.

    Components whose age reaches their lifespan are dropped, new ones are
    born by a Poisson process during the step, and the geometry of all
    survivors is recomputed for the new mobile position.  The input state is
    not modified.
    """
    if not dt_s > 0:
        raise ValueError(f"dt_s must be > 0, got {dt_s}")
    t_new = now_s + dt_s
    bs = np.asarray(bs_pos, dtype=float)
    mob = np.asarray(mobile_pos, dtype=float)
    keep = state.birth_s + state.lifespan_s > t_new
    if state.los and len(state):
        keep[0] = True

    n_new = int(rng.poisson(params.birth_rate(state.los) * dt_s))
    peak = state.peak[keep]
    birth = state.birth_s[keep]
    life = state.lifespan_s[keep]
    scat = state.scatterer[keep]
    if n_new:
        new_birth = now_s + rng.random(n_new) * dt_s
        new_life = rng.exponential(params.mean_lifespan_s, n_new)
        new_scat = _draw_scatterers(n_new, mob, params, rng)
        dist = float(np.linalg.norm(mob - bs))
        new_peak = _draw_peaks(n_new, params.power_budget(dist), state.los, params, rng)
        alive = new_birth + new_life > t_new
        peak = np.concatenate((peak, new_peak[alive]))
        birth = np.concatenate((birth, new_birth[alive]))
        life = np.concatenate((life, new_life[alive]))
        scat = np.vstack((scat, new_scat[alive]))
    new = ChannelState(state.bs_index, state.los, t_new, peak.copy(), birth, life, scat)
    return _refresh(new, bs, mob, params)


def true_cir(state: ChannelState, grid) -> np.ndarray:
    """Render the components onto the tap grid by nearest-tap rounding.

    Paths landing on the same tap add coherently.
    """
    n = grid.n_taps
    taps = np.zeros(n, dtype=complex)
    if len(state) == 0:
        return taps
    idx = np.floor(state.delay_s / grid.tap_spacing_s + 0.5).astype(np.int64)
    over = idx >= n
    if np.any(over):
        worst = float(state.delay_s[over].max())
        raise ValueError(
            f"component delay {worst:.6e} s lies beyond the tap grid "
            f"({n} taps x {grid.tap_spacing_s:.6e} s)")
    np.add.at(taps, idx, state.amplitude)
    return taps



def window_population(state: ChannelState, bs_pos, mobile_pos, times, params: ChannelParams,
                      rng: np.random.Generator) -> ChannelState:
    """All components alive at any of ``times``: the initial ``state`` plus
    the Poisson births between consecutive sample times.

    Births use the same law as :func:`evolve_channel`; scatterers of
    components born during the window are placed around ``mobile_pos``.
    """
    times = np.asarray(times, dtype=float)
    if len(times) < 2:
        return state
    dts = np.diff(times)
    counts = rng.poisson(params.birth_rate(state.los) * dts)
    n_new = int(counts.sum())
    if n_new == 0:
        return state
    start = np.repeat(times[:-1], counts)
    birth = start + rng.random(n_new) * np.repeat(dts, counts)
    life = rng.exponential(params.mean_lifespan_s, n_new)
    scat = _draw_scatterers(n_new, mobile_pos, params, rng)
    dist = float(np.linalg.norm(np.asarray(mobile_pos, float) - np.asarray(bs_pos, float)))
    peak = _draw_peaks(n_new, params.power_budget(dist), state.los, params, rng)
    return ChannelState(
        state.bs_index, state.los, state.time_s,
        np.concatenate((state.peak, peak)),
        np.concatenate((state.birth_s, birth)),
        np.concatenate((state.lifespan_s, life)),
        np.vstack((state.scatterer, scat)))


def render_window(population: ChannelState, bs_pos, track, times, params: ChannelParams,
                  grid) -> np.ndarray:
    """True CIR at every sample time, shape ``(len(times), n_taps)``.

    ``track[i]`` is the mobile position at ``times[i]``.  Matches stepping
    :func:`evolve_channel` + :func:`true_cir` over the same population.
    """
    bs = np.asarray(bs_pos, dtype=float)
    track = np.asarray(track, dtype=float).reshape(-1, 2)
    times = np.asarray(times, dtype=float)
    k, n = len(times), grid.n_taps
    first = 1 if population.los else 0
    scat = population.scatterer[first:]
    d_bs = np.linalg.norm(scat - bs, axis=1)
    d_mob = np.linalg.norm(scat[None, :, :] - track[:, None, :], axis=2)
    delay = (d_bs[None, :] + d_mob) / SPEED_OF_LIGHT
    age = times[:, None] - population.birth_s[first:][None, :]
    alive = (age >= 0) & (age < population.lifespan_s[first:][None, :])
    env = fading_scale(age, population.lifespan_s[first:][None, :])
    amp = population.peak[first:][None, :] * env * _carrier(delay, params)
    if population.los:
        d0 = np.linalg.norm(track - bs, axis=1)
        others = np.sum(np.abs(amp) ** 2, axis=1)
        budget = params.power_budget(d0) if np.any(others == 0) else 0.0
        nominal = np.sqrt(budget * params.los_ratio / (1.0 + params.los_ratio))
        mag = np.where(others > 0, np.sqrt(params.los_ratio * others), nominal)
        delay = np.column_stack((d0 / SPEED_OF_LIGHT, delay))
        amp = np.column_stack((mag * _carrier(d0 / SPEED_OF_LIGHT, params), amp))
        alive = np.column_stack((np.ones(k, dtype=bool), alive))
    idx = np.floor(delay / grid.tap_spacing_s + 0.5).astype(np.int64)
    over = alive & (idx >= n)
    if np.any(over):
        raise ValueError(
            f"component delay {float(delay[over].max()):.6e} s lies beyond the tap grid "
            f"({n} taps x {grid.tap_spacing_s:.6e} s)")
    taps = np.zeros(k * n, dtype=complex)
    rows = np.broadcast_to(np.arange(k)[:, None] * n, idx.shape)
    np.add.at(taps, (rows + idx)[alive], amp[alive])
    return taps.reshape(k, n)

"""Hexagonal network, evaluation points and the measure -> detect -> locate
campaign pipeline.

Each evaluation point draws its own random substream from the master seed
and its index, so results do not depend on how points are scheduled.  The
noisy power delay profiles of a point depend only on the channel and noise
configuration, never on the detection threshold; threshold sweeps therefore
measure once and re-detect.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import RunConfig
from .firstpath import Detection, ThresholdSpec, detect, tap_to_range
from .locate import Anchor, FixStatus, PositionFix, RangeSet, position_fix
from .propagation import draw_los, init_channel, render_window, window_population
from .receiver import CirSnapshot, NoiseModel, average_pdp, observe_cir

log = logging.getLogger(__name__)

_POINTS_STREAM = 0
_MEASURE_STREAM = 1


@dataclass(frozen=True)
class NetworkLayout:
    stations: tuple  # of Anchor; Anchor.index is the station id 0..18
    isd_m: float

    @property
    def positions(self) -> np.ndarray:
        return np.array([[s.x, s.y] for s in self.stations])

    @property
    def circumradius(self) -> float:
        return self.isd_m / math.sqrt(3.0)


@dataclass(frozen=True)
class EvaluationPoint:
    position: tuple
    heading_rad: float
    speed_mps: float = 50.0 / 3.6
    point_id: int = 0


@dataclass(frozen=True)
class RangeEstimate:
    bs_index: int
    bs_pos: tuple
    true_distance_m: float
    los: bool
    detection: Detection
    range_m: Optional[float]

    @property
    def detected(self) -> bool:
        return self.range_m is not None

    @property
    def signed_error_m(self) -> Optional[float]:
        return None if self.range_m is None else self.range_m - self.true_distance_m


@dataclass
class PointMeasurement:
    """Averaged profiles toward the nearest stations of one point (serving first)."""

    point: EvaluationPoint
    bs_indices: list
    bs_positions: np.ndarray
    true_distances: np.ndarray
    los: list
    pdps: list


@dataclass
class PointResult:
    point_id: int
    true_pos: np.ndarray
    fix: PositionFix
    error_m: Optional[float]
    n_detected: int
    ranges: list = field(default_factory=list, repr=False)


@dataclass(frozen=True)
class ErrorStats:
    mean_m: float
    std_m: float
    p95_m: float
    n_points: int
    n_unavailable: int


def build_network(isd_m: float = 1000.0) -> NetworkLayout:
    """Centre station plus two hexagonal rings (6 + 12) of the triangular lattice."""
    if not isd_m > 0:
        raise ValueError(f"isd_m must be > 0, got {isd_m}")
    a1 = np.array([isd_m, 0.0])
    a2 = np.array([isd_m / 2.0, isd_m * math.sqrt(3.0) / 2.0])
    pts = []
    for i in range(-2, 3):
        for j in range(-2, 3):
            # hex distance on the axial lattice
            if max(abs(i), abs(j), abs(i + j)) <= 2:
                pts.append((max(abs(i), abs(j), abs(i + j)), i * a1 + j * a2))
    pts.sort(key=lambda t: (t[0], round(math.atan2(t[1][1], t[1][0]) % (2 * math.pi), 9)))
    stations = tuple(Anchor(float(p[0]), float(p[1]), k) for k, (_, p) in enumerate(pts))
    return NetworkLayout(stations, float(isd_m))


def in_center_hexagon(pos, isd_m: float, tol: float = 1e-9) -> bool:
    """Whether ``pos`` lies in the Voronoi cell of the station at the origin."""
    x, y = float(pos[0]), float(pos[1])
    for k in range(6):
        ang = k * math.pi / 3.0
        if x * math.cos(ang) + y * math.sin(ang) > isd_m / 2.0 + tol:
            return False
    return True


def sample_points(n: int, layout: NetworkLayout, rng: np.random.Generator,
                  speed_mps: float = 50.0 / 3.6) -> list:
    """Uniform points in the centre hexagon by rejection from its bounding box."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    r = layout.circumradius
    out = []
    while len(out) < n:
        x, y = rng.uniform(-r, r), rng.uniform(-r, r)
        if in_center_hexagon((x, y), layout.isd_m):
            heading = rng.uniform(0.0, 2 * math.pi)
            out.append(EvaluationPoint((float(x), float(y)), float(heading), speed_mps, len(out)))
    return out


def nearest_stations(pos, layout: NetworkLayout, n: int = 7) -> list:
    d = np.linalg.norm(layout.positions - np.asarray(pos, dtype=float), axis=1)
    # micrometre rounding so equidistant stations tie and fall back to id order
    order = np.lexsort((np.arange(len(d)), np.round(d, 6)))
    return [int(i) for i in order[:n]]


def noise_model(config: RunConfig) -> NoiseModel:
    if config.noiseless:
        return NoiseModel(0.0)
    ref = config.channel.power_budget(config.reference_distance_m)
    return NoiseModel.from_snr(ref, config.snr_db)


def point_rng(seed: int, point_id: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, _MEASURE_STREAM, point_id]))


def campaign_points(config: RunConfig, layout: NetworkLayout = None) -> list:
    layout = layout or build_network(config.isd_m)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, _POINTS_STREAM]))
    return sample_points(config.n_points, layout, rng, config.speed_mps)


def measure_pdps(pt: EvaluationPoint, layout: NetworkLayout, config: RunConfig,
                 rng: np.random.Generator) -> PointMeasurement:
    """Averaged profiles toward the nearest stations while the mobile moves.

    The mobile track is centred on ``pt.position``: snapshot ``i`` of ``K``
    is taken at ``t_i = i * slot_s`` with the mobile displaced by
    ``speed * (t_i - t_mid)`` along the heading.  Each station's channel
    starts from a stationary population and is rendered over the whole
    window at once (see :func:`~toapos.propagation.render_window`).
    """
    params = config.channel
    grid = config.grid
    noise = noise_model(config)
    k = config.k_averages
    p0 = np.asarray(pt.position, dtype=float)
    u = np.array([math.cos(pt.heading_rad), math.sin(pt.heading_rad)])
    t = np.arange(k) * config.slot_s
    track = p0 + np.outer((t - t[-1] / 2.0) * pt.speed_mps, u)

    idx = nearest_stations(p0, layout, config.n_nearest)
    bs_pos = layout.positions[idx]
    pdps, los_flags = [], []
    for j, (b, bpos) in enumerate(zip(idx, bs_pos)):
        los = draw_los(j == 0, rng, config.los_prob_serving, config.los_prob_neighbor)
        state = init_channel(bpos, track[0], los, t[0], params, rng, bs_index=b)
        population = window_population(state, bpos, p0, t, params, rng)
        h = render_window(population, bpos, track, t, params, grid)
        noisy = observe_cir(h, noise, rng).taps
        pdps.append(average_pdp([CirSnapshot(row, i) for i, row in enumerate(noisy)], grid))
        los_flags.append(los)
    dist = np.linalg.norm(bs_pos - p0, axis=1)
    return PointMeasurement(pt, idx, bs_pos, dist, los_flags, pdps)


def ranges_from_measurement(m: PointMeasurement, spec: ThresholdSpec, config: RunConfig) -> list:
    out = []
    for b, bpos, dist, los, pdp in zip(m.bs_indices, m.bs_positions, m.true_distances, m.los, m.pdps):
        if config.oracle_ranges:
            det = Detection(None, 0.0)
            rng_m = float(dist)
        else:
            det = detect(pdp, spec)
            rng_m = tap_to_range(det.tap_index, pdp.grid) if det.detected else None
        out.append(RangeEstimate(int(b), (float(bpos[0]), float(bpos[1])), float(dist), los, det, rng_m))
    return out


def measure_point(pt: EvaluationPoint, layout: NetworkLayout, config: RunConfig,
                  rng: np.random.Generator, spec: ThresholdSpec = None) -> list:
    """Range estimates toward the nearest stations, serving station first."""
    m = measure_pdps(pt, layout, config, rng)
    return ranges_from_measurement(m, spec or config.threshold, config)


def locate_point(ranges: list, config: RunConfig) -> PositionFix:
    """Fix from the detected ranges; the first detected station is the reference."""
    got = [r for r in ranges if r.detected]
    rs = RangeSet(tuple(Anchor(r.bs_pos[0], r.bs_pos[1], i + 1) for i, r in enumerate(got)),
                  tuple(r.range_m for r in got))
    return position_fix(rs, include_reference=config.include_reference_residual,
                        rcond=config.degeneracy_rcond)


def evaluate_point(m: PointMeasurement, spec: ThresholdSpec, config: RunConfig) -> PointResult:
    ranges = ranges_from_measurement(m, spec, config)
    fix = locate_point(ranges, config)
    truth = np.asarray(m.point.position, dtype=float)
    err = float(np.linalg.norm(fix.position - truth)) if fix.ok else None
    return PointResult(m.point.point_id, truth, fix, err, sum(r.detected for r in ranges), ranges)


def percentile(errors, p: float) -> float:
    """Nearest-rank percentile: element ``ceil(p * n) - 1`` of the sorted list."""
    x = np.sort(np.asarray(errors, dtype=float))
    if x.size == 0:
        raise ValueError("percentile of an empty list")
    if not 0 < p <= 1:
        raise ValueError(f"p must lie in (0, 1], got {p}")
    # guard p*n landing a hair above an integer through float error
    rank = math.ceil(round(p * x.size, 9))
    return float(x[max(rank, 1) - 1])


def error_stats(results: list) -> ErrorStats:
    errs = [r.error_m for r in results if r.error_m is not None]
    n_bad = len(results) - len(errs)
    if not errs:
        return ErrorStats(math.nan, math.nan, math.nan, len(results), n_bad)
    e = np.asarray(errs)
    return ErrorStats(float(e.mean()), float(e.std()), percentile(e, 0.95), len(results), n_bad)


def _measure_one(args):
    pt, layout, config = args
    return measure_pdps(pt, layout, config, point_rng(config.seed, pt.point_id))


def measure_campaign(config: RunConfig, workers: int = None) -> list:
    """Profiles for every evaluation point, in point order."""
    layout = build_network(config.isd_m)
    pts = campaign_points(config, layout)
    workers = workers or config.workers
    jobs = [(pt, layout, config) for pt in pts]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(_measure_one, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    out = []
    for n, job in enumerate(jobs):
        out.append(_measure_one(job))
        if (n + 1) % 100 == 0:
            log.info("measured %d/%d points", n + 1, len(jobs))
    return out


def evaluate_campaign(measurements: list, spec: ThresholdSpec, config: RunConfig) -> tuple:
    results = [evaluate_point(m, spec, config) for m in measurements]
    return results, error_stats(results)


def run_campaign(config: RunConfig, workers: int = None) -> tuple:
    """Measure every point, detect with ``config.threshold`` and locate.

    Returns
    -------
    results : list of PointResult
    stats : ErrorStats
        Over points with an OK fix; the rest are counted as unavailable.
    """
    ms = measure_campaign(config, workers)
    return evaluate_campaign(ms, config.threshold, config)


def mean_signed_range_error(results: list) -> float:
    errs = [r.signed_error_m for pr in results for r in pr.ranges if r.detected]
    return float(np.mean(errs)) if errs else math.nan

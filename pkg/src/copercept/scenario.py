"""Seeded synthetic pedestrian world.

Targets arrive as a Poisson process, stay for a log-normal dwell time and
random-walk on the ground plane of a rectangular arena. Each target carries
a non-negative identity descriptor; cameras observe noisy copies of it.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .calib.geometry import CameraModel, Intrinsics, mounted_camera, project_ground, visible_mask
from .calib.matching import DESCRIPTOR_RANGE, quantize

TRACE_FORMAT = "copercept-trace"
TRACE_VERSION = 1

WALKING_SPEED_M_S = 1.4
DESCRIPTOR_DIM = 128
# Each descriptor component has a population mean drawn from this range, and
# identities deviate from it by a small spread. People look alike, so a coarse
# quantizer keeps only the components whose mean sits near a bin edge.
DESCRIPTOR_MEAN_RANGE = (1.0, 3.0)
DESCRIPTOR_SPREAD = 0.12


@dataclass(frozen=True)
class ArrivalModel:
    arrival_rate_per_s: float
    dwell_log_mean: float
    dwell_log_sigma: float

    def __post_init__(self):
        if self.arrival_rate_per_s < 0:
            raise ValueError("arrival_rate_per_s must be >= 0")
        if self.dwell_log_sigma < 0:
            raise ValueError("dwell_log_sigma must be >= 0")

    @property
    def mean_dwell_s(self) -> float:
        return math.exp(self.dwell_log_mean + self.dwell_log_sigma**2 / 2.0)


def offered_load(model: ArrivalModel) -> float:
    """Mean number of concurrently present targets, ``lambda * E[S]``."""
    return model.arrival_rate_per_s * model.mean_dwell_s


@dataclass(frozen=True)
class Arena:
    width_m: float = 12.0
    length_m: float = 36.0
    cell_m: float = 0.025

    def __post_init__(self):
        for dim in (self.width_m, self.length_m):
            n = dim / self.cell_m
            if abs(n - round(n)) > 1e-6:
                raise ValueError(f"arena dimension {dim} is not a whole number of {self.cell_m} m cells")

    @property
    def grid_w(self) -> int:
        return int(round(self.width_m / self.cell_m))

    @property
    def grid_h(self) -> int:
        return int(round(self.length_m / self.cell_m))

    @property
    def area_m2(self) -> float:
        return self.width_m * self.length_m

    def contains(self, xy) -> np.ndarray:
        xy = np.atleast_2d(xy)
        return (
            (xy[:, 0] >= 0) & (xy[:, 0] <= self.width_m) & (xy[:, 1] >= 0) & (xy[:, 1] <= self.length_m)
        )


@dataclass
class TargetTrack:
    identity_id: int
    arrival_time_s: float
    dwell_s: float
    first_step: int
    positions: np.ndarray  # (n_steps, 2), sampled at (first_step + i) * time_step
    true_descriptor: np.ndarray

    @property
    def departure_time_s(self) -> float:
        return self.arrival_time_s + self.dwell_s

    def active_at(self, t: float) -> bool:
        return self.arrival_time_s <= t < self.departure_time_s


@dataclass
class ScenarioTrace:
    tracks: list[TargetTrack]
    duration_s: float
    time_step_s: float
    rng_seed: int
    arena: Arena = field(default_factory=Arena)
    descriptor_dim: int = DESCRIPTOR_DIM

    def __post_init__(self):
        self._index = None

    @property
    def n_steps(self) -> int:
        return int(math.floor(self.duration_s / self.time_step_s + 1e-9))

    def step_of(self, t: float) -> int:
        return int(math.floor(t / self.time_step_s + 1e-9))

    def _build_index(self):
        steps, owners, xs, ys = [], [], [], []
        for i, tr in enumerate(self.tracks):
            n = len(tr.positions)
            if n == 0:
                continue
            steps.append(np.arange(tr.first_step, tr.first_step + n))
            owners.append(np.full(n, i))
            xs.append(tr.positions[:, 0])
            ys.append(tr.positions[:, 1])
        if steps:
            steps = np.concatenate(steps)
            order = np.argsort(steps, kind="stable")
            self._index = (
                steps[order],
                np.concatenate(owners)[order],
                np.column_stack([np.concatenate(xs), np.concatenate(ys)])[order],
            )
        else:
            self._index = (np.zeros(0, int), np.zeros(0, int), np.zeros((0, 2)))

    def at_step(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Track indices and ground positions of all targets present at step ``k``."""
        if self._index is None:
            self._build_index()
        steps, owners, xy = self._index
        lo, hi = np.searchsorted(steps, [k, k + 1])
        return owners[lo:hi], xy[lo:hi]

    def at_time(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        return self.at_step(self.step_of(t))

    def active_count(self, k: int) -> int:
        return len(self.at_step(k)[0])


def sample_arrivals(model: ArrivalModel, start_s: float, end_s: float, rng: np.random.Generator):
    """Poisson arrival times in ``[start_s, end_s)`` and their log-normal dwell times."""
    span = end_s - start_s
    n = rng.poisson(model.arrival_rate_per_s * span) if span > 0 else 0
    arrivals = np.sort(start_s + span * rng.random(n))
    dwell = rng.lognormal(model.dwell_log_mean, model.dwell_log_sigma, n)
    return arrivals, dwell


def _reflect(v: np.ndarray, upper: float) -> np.ndarray:
    period = 2.0 * upper
    v = np.mod(v, period)
    return np.where(v > upper, period - v, v)


def generate(
    model: ArrivalModel,
    arena: Arena | None = None,
    duration_s: float = 60.0,
    time_step_s: float = 0.5,
    seed: int = 0,
    *,
    warmup_s: float = 0.0,
    descriptor_dim: int = DESCRIPTOR_DIM,
    descriptor_spread: float = DESCRIPTOR_SPREAD,
    speed_m_s: float = WALKING_SPEED_M_S,
) -> ScenarioTrace:
    """Generate a reproducible trace.

    Arrivals are drawn over ``[-warmup_s, duration_s)`` so the scene can
    start close to steady state.
    """
    if duration_s <= 0 or time_step_s <= 0:
        raise ValueError("duration and time step must be positive")
    arena = arena or Arena()
    rng = np.random.default_rng(seed)
    arrivals, dwell = sample_arrivals(model, -warmup_s, duration_s, rng)
    step_sigma = speed_m_s * time_step_s / math.sqrt(2.0)
    last_step = int(math.floor(duration_s / time_step_s + 1e-9))

    population = rng.uniform(*DESCRIPTOR_MEAN_RANGE, size=descriptor_dim)
    tracks = []
    for i, (a, s) in enumerate(zip(arrivals, dwell)):
        first = max(math.ceil(a / time_step_s - 1e-9), 0)
        end = min(math.ceil((a + s) / time_step_s - 1e-9), last_step + 1)
        n = max(end - first, 0)
        start = rng.random(2) * (arena.width_m, arena.length_m)
        walk = rng.normal(0.0, step_sigma, size=(max(n - 1, 0), 2))
        path = np.vstack([start, start + np.cumsum(walk, axis=0)]) if n else np.zeros((0, 2))
        if n:
            path[:, 0] = _reflect(path[:, 0], arena.width_m)
            path[:, 1] = _reflect(path[:, 1], arena.length_m)
        descriptor = np.abs(population + descriptor_spread * rng.standard_normal(descriptor_dim))
        tracks.append(TargetTrack(i, float(a), float(s), int(first), path, descriptor))
    return ScenarioTrace(tracks, float(duration_s), float(time_step_s), int(seed), arena, descriptor_dim)


def visible_count(trace: ScenarioTrace, camera: CameraModel, t: float) -> int:
    """Number of present targets whose ground position lands inside the image."""
    _, xy = trace.at_time(t)
    if len(xy) == 0:
        return 0
    return int(visible_mask(camera, xy).sum())


def view_noise_sigma(camera: CameraModel, ground_xy, base_sigma: float, distance_scale_m: float = 20.0):
    """Descriptor noise grows with the camera-to-target distance."""
    centre = camera.extrinsics.center
    xy = np.atleast_2d(ground_xy)
    dist = np.sqrt((xy[:, 0] - centre[0]) ** 2 + (xy[:, 1] - centre[1]) ** 2 + centre[2] ** 2)
    return base_sigma * (1.0 + dist / distance_scale_m)


def observe_descriptor(
    track: TargetTrack,
    camera: CameraModel,
    quantization_bits: int | None,
    rng: np.random.Generator,
    *,
    trace: ScenarioTrace,
    t: float,
    noise_sigma: float = 0.08,
):
    """Noisy, optionally quantized descriptor of ``track`` as seen by ``camera`` at ``t``.

    Returns ``None`` when the target is absent or outside the view.
    """
    k = trace.step_of(t)
    i = k - track.first_step
    if not (0 <= i < len(track.positions)):
        return None
    xy = track.positions[i]
    if not visible_mask(camera, xy)[0]:
        return None
    sigma = view_noise_sigma(camera, xy, noise_sigma)[0]
    noisy = track.true_descriptor + sigma * rng.standard_normal(track.true_descriptor.shape)
    return quantize(noisy, quantization_bits, DESCRIPTOR_RANGE)


@dataclass
class FrameObservation:
    """What one camera reports for one time step."""

    step: int
    identities: np.ndarray
    ground_xy: np.ndarray  # true positions, for evaluation only
    image_uv: np.ndarray
    descriptors: np.ndarray

    def __len__(self):
        return len(self.identities)


def observe_frame(
    trace: ScenarioTrace,
    camera: CameraModel,
    step: int,
    rng: np.random.Generator,
    *,
    pixel_noise_px: float = 1.0,
    descriptor_noise: float = 0.08,
) -> FrameObservation:
    """Detections of every visible target at ``step`` with pixel and descriptor noise."""
    owners, xy = trace.at_step(step)
    vis = visible_mask(camera, xy) if len(xy) else np.zeros(0, bool)
    owners, xy = owners[vis], xy[vis]
    n = len(owners)
    dim = trace.descriptor_dim
    if n == 0:
        return FrameObservation(step, np.zeros(0, int), np.zeros((0, 2)), np.zeros((0, 2)), np.zeros((0, dim)))
    uv = project_ground(camera, xy) + pixel_noise_px * rng.standard_normal((n, 2))
    sigma = view_noise_sigma(camera, xy, descriptor_noise)
    desc = np.array([trace.tracks[o].true_descriptor for o in owners])
    desc = quantize(desc + sigma[:, None] * rng.standard_normal((n, dim)), None)
    ids = np.array([trace.tracks[o].identity_id for o in owners], dtype=int)
    return FrameObservation(step, ids, xy.copy(), uv, desc)


# --- long-run occupancy statistics -------------------------------------------------


def idle_intervals(arrivals: np.ndarray, departures: np.ndarray, start: float, end: float):
    """Cumulative idle time (no target present) as a piecewise-linear function.

    Returns breakpoints ``times`` and cumulative idle time ``cum`` so that
    ``np.interp(t, times, cum)`` is the idle time accrued in ``[start, t]``.
    """
    count0 = int(((arrivals <= start) & (departures > start)).sum())
    a_in = arrivals[(arrivals > start) & (arrivals < end)]
    d_in = departures[(departures > start) & (departures < end)]
    times = np.concatenate([a_in, d_in])
    delta = np.concatenate([np.ones(len(a_in)), -np.ones(len(d_in))])
    order = np.argsort(times, kind="stable")
    times, delta = times[order], delta[order]
    seg_t = np.concatenate([[start], times, [end]])
    seg_count = count0 + np.concatenate([[0.0], np.cumsum(delta)])
    idle = np.where(seg_count == 0, np.diff(seg_t), 0.0)
    return seg_t, np.concatenate([[0.0], np.cumsum(idle)])


def simulate_occupancy(model: ArrivalModel, horizon_s: float, rng: np.random.Generator, warmup_s: float | None = None):
    """Arrivals/departures of an M/G/infinity system observed over ``[0, horizon_s)``."""
    if warmup_s is None:
        warmup_s = math.exp(model.dwell_log_mean + 4.0 * model.dwell_log_sigma) * 4.0
    arrivals, dwell = sample_arrivals(model, -warmup_s, horizon_s, rng)
    return arrivals, arrivals + dwell


def idle_fraction(model: ArrivalModel, horizon_s: float, rng: np.random.Generator) -> float:
    """Fraction of ``[0, horizon_s)`` with no target present."""
    arrivals, departures = simulate_occupancy(model, horizon_s, rng)
    times, cum = idle_intervals(arrivals, departures, 0.0, horizon_s)
    return float(cum[-1] / horizon_s)


def simulate_phase_fractions(
    model: ArrivalModel,
    calibration_prob: float,
    horizon_s: float,
    rng: np.random.Generator,
    slot_s: float = 1.0,
) -> tuple[float, float, float]:
    """Long-run time fractions of the idle, calibration and streaming phases.

    Time is split into slots; each slot independently becomes a calibration
    slot with probability ``calibration_prob``. Outside calibration slots the
    phase is idle when no target is present and streaming otherwise.
    """
    arrivals, departures = simulate_occupancy(model, horizon_s, rng)
    times, cum = idle_intervals(arrivals, departures, 0.0, horizon_s)
    n_slots = int(math.ceil(horizon_s / slot_s - 1e-9))
    edges = np.minimum(np.arange(n_slots + 1) * slot_s, horizon_s)
    idle_per_slot = np.diff(np.interp(edges, times, cum))
    calib = rng.random(n_slots) < calibration_prob
    width = np.diff(edges)
    f1 = width[calib].sum() / horizon_s
    f0 = idle_per_slot[~calib].sum() / horizon_s
    return float(f0), float(f1), float(1.0 - f0 - f1)


# --- default camera fleet ----------------------------------------------------------

DEFAULT_INTRINSICS = Intrinsics(fx=1400.0, fy=1400.0, cx=960.0, cy=540.0)

# (x, y, yaw in degrees) around a 12 m x 36 m arena
DEFAULT_POSES = (
    (-1.0, -1.0, 45.0),
    (13.0, 6.0, 160.0),
    (-1.0, 13.0, 0.0),
    (13.0, 18.0, 180.0),
    (-1.0, 24.0, -10.0),
    (13.0, 31.0, 200.0),
    (6.0, 37.5, -90.0),
)


def default_fleet(poses=DEFAULT_POSES, intrinsics: Intrinsics = DEFAULT_INTRINSICS, height_m=4.0, pitch_deg=35.0):
    return [
        mounted_camera(intrinsics, x, y, yaw, height_m=height_m, pitch_deg=pitch_deg, name=f"cam{i}")
        for i, (x, y, yaw) in enumerate(poses)
    ]


# --- trace serialization -----------------------------------------------------------


def dumps_trace(trace: ScenarioTrace) -> str:
    """Serialize a trace to the versioned text format.

    Header lines start with ``#``: format/version, run metadata, one
    ``# track`` line per target (id, arrival, dwell, first step, descriptor).
    The body is a CSV with columns ``time,id,x,y``, one row per target per
    time step. Floats use ``repr`` so reading back is exact.
    """
    out = io.StringIO()
    a = trace.arena
    out.write(f"# {TRACE_FORMAT} v{TRACE_VERSION}\n")
    out.write(
        f"# meta,{trace.duration_s!r},{trace.time_step_s!r},{trace.rng_seed},"
        f"{a.width_m!r},{a.length_m!r},{a.cell_m!r},{trace.descriptor_dim}\n"
    )
    for tr in trace.tracks:
        desc = " ".join(repr(float(v)) for v in tr.true_descriptor)
        out.write(
            f"# track,{tr.identity_id},{tr.arrival_time_s!r},{tr.dwell_s!r},{tr.first_step},{len(tr.positions)},{desc}\n"
        )
    out.write("time,id,x,y\n")
    rows = []
    for tr in trace.tracks:
        for i, (x, y) in enumerate(tr.positions):
            k = tr.first_step + i
            rows.append((k, tr.identity_id, float(x), float(y)))
    rows.sort(key=lambda r: (r[0], r[1]))
    for k, ident, x, y in rows:
        out.write(f"{k * trace.time_step_s!r},{ident},{x!r},{y!r}\n")
    return out.getvalue()


def loads_trace(text: str) -> ScenarioTrace:
    lines = text.splitlines()
    if not lines or not lines[0].startswith(f"# {TRACE_FORMAT} v"):
        raise ValueError("not a trace file")
    version = int(lines[0].rsplit("v", 1)[1])
    if version != TRACE_VERSION:
        raise ValueError(f"unsupported trace version {version}")
    meta = lines[1].split(",")
    duration, step, seed = float(meta[1]), float(meta[2]), int(meta[3])
    arena = Arena(float(meta[4]), float(meta[5]), float(meta[6]))
    dim = int(meta[7])
    tracks, by_id = [], {}
    i = 2
    while lines[i].startswith("# track,"):
        head, desc = lines[i][len("# track,"):].rsplit(",", 1)
        ident, arr, dwell, first, n = head.split(",")
        tr = TargetTrack(
            int(ident), float(arr), float(dwell), int(first),
            np.zeros((int(n), 2)),
            np.array([float(v) for v in desc.split()]) if desc else np.zeros(0),
        )
        tracks.append(tr)
        by_id[tr.identity_id] = tr
        i += 1
    if lines[i] != "time,id,x,y":
        raise ValueError("missing column header")
    for line in lines[i + 1:]:
        t, ident, x, y = line.split(",")
        tr = by_id[int(ident)]
        k = int(round(float(t) / step))
        tr.positions[k - tr.first_step] = (float(x), float(y))
    return ScenarioTrace(tracks, duration, step, seed, arena, dim)


def write_trace(trace: ScenarioTrace, path) -> None:
    Path(path).write_text(dumps_trace(trace), encoding="utf-8", newline="\n")


def read_trace(path) -> ScenarioTrace:
    return loads_trace(Path(path).read_text(encoding="utf-8"))

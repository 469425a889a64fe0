"""Named sweep presets and a deterministic, failure-isolating sweep runner.

Each preset varies one axis over a grid and repeats every grid value
``repetitions`` times. Repetition ``r`` uses the same scene and random
streams for every grid value (common random numbers), so differences along
the axis come from the axis alone. Seeds are derived from the master seed,
the preset and the repetition only, so results do not depend on worker
count or completion order.
"""

from __future__ import annotations

import csv
import io
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .age import aoi, aopt_cycle, CycleConfig
from .calib.pipeline import CalibrationInfeasibleError
from .channel import capacity
from .config import PRESET_NAMES, RunConfig
from .experiments import (
    BITS_PER_KB,
    Scene,
    agent_links,
    age_inputs,
    build_scene,
    evaluate_fusion,
    keep_views,
    priority_policy,
    random_policy,
    run_calibration_trial,
)
from .fusion import GroundWarp, build_warps
from .scenario import visible_count

AXES = ("capacity", "sampling_interval", "calibration_interval", "budget", "loss_rate", "top_n", "fov_subset")


@dataclass(frozen=True)
class SweepSpec:
    name: str
    axis: str
    values: tuple
    repetitions: int = 1

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"unknown axis {self.axis!r}; expected one of {AXES}")
        if len(self.values) == 0:
            raise ValueError("sweep grid must not be empty")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")


class SweepContext:
    """Shared, read-only inputs of one sweep plus thread-safe caches."""

    def __init__(self, config: RunConfig, preset_index: int):
        self.config = config
        self.preset_index = preset_index
        self.params = config.scenario.to_params()
        self.cameras = config.fleet.cameras()
        self.streaming_proxy = config.proxies.streaming.to_proxy("streaming")
        self._lock = threading.Lock()
        self._scenes: dict[int, Scene] = {}
        self._warps: list[GroundWarp] | None = None

    def scene(self, rep: int) -> Scene:
        with self._lock:
            if rep not in self._scenes:
                seed = int(np.random.SeedSequence([self.config.master_seed, rep]).generate_state(1)[0])
                self._scenes[rep] = build_scene(seed, self.params, self.cameras)
            return self._scenes[rep]

    def rng(self, rep: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([self.config.master_seed, rep, self.preset_index]))

    def warps(self) -> list[GroundWarp]:
        with self._lock:
            if self._warps is None:
                self._warps = build_warps(self.cameras, self.params.arena)
            return self._warps


PointFn = Callable[[SweepContext, Any, int], dict]


@dataclass(frozen=True)
class Preset:
    spec: SweepSpec
    metrics: tuple[str, ...]
    run: PointFn
    description: str = ""


# --- point evaluators ----------------------------------------------------------------

CALIBRATION_METRICS = (
    "rotation_error_deg",
    "translation_error_m",
    "extrinsic_error_pct",
    "n_correspondences",
    "bits_per_component",
    "cost_kb",
    "trials_failed",
)


def _calibration_point(ctx: SweepContext, rep: int, n_trials: int | None = None, **overrides) -> dict:
    """Mean errors over several calibration trials on the repetition's scene."""
    cfg = ctx.config.calibration
    trial = replace(cfg.to_trial(), **overrides)
    rng = ctx.rng(rep)
    seeds = rng.integers(0, 2**63 - 1, size=n_trials or cfg.trials)
    reports, failed = [], 0
    for s in seeds:
        try:
            reports.append(run_calibration_trial(ctx.scene(rep), trial, np.random.default_rng(s)))
        except CalibrationInfeasibleError:
            failed += 1
    if not reports:
        raise CalibrationInfeasibleError(f"all {len(seeds)} calibration trials were infeasible")
    return {
        "rotation_error_deg": float(np.mean([r.rotation_error_deg for r in reports])),
        "translation_error_m": float(np.mean([r.translation_error_m for r in reports])),
        "extrinsic_error_pct": float(np.mean([r.extrinsic_error_pct for r in reports])),
        "n_correspondences": float(np.mean([r.n_correspondences for r in reports])),
        "bits_per_component": reports[0].bits_per_component,
        "cost_kb": reports[0].cost_bits / BITS_PER_KB,
        "trials_failed": failed,
    }


def calibration_vs_budget(ctx, value, rep):
    return _calibration_point(ctx, rep, budget_bits=float(value) * BITS_PER_KB, calibration_interval_s=0.0)


TOP_N_TRIALS = 10
STALE_INTERVAL_S = 0.5


def calibration_vs_top_n(ctx, value, rep):
    # a short staleness makes wrong matches costly, which is where the choice of N matters
    return _calibration_point(ctx, rep, TOP_N_TRIALS, top_n=int(value), budget_bits=30.0 * BITS_PER_KB,
                              calibration_interval_s=STALE_INTERVAL_S)


def calibration_vs_interval(ctx, value, rep):
    return _calibration_point(ctx, rep, budget_bits=30.0 * BITS_PER_KB, calibration_interval_s=float(value))


def targets_per_camera(ctx, value, rep):
    """Visible targets of the chosen cameras at time slot ``rep`` of one scene."""
    scene = ctx.scene(0)
    k = rep % scene.trace.n_steps
    t = k * scene.trace.time_step_s
    return {"time_s": t, "target_count": sum(visible_count(scene.trace, scene.cameras[i], t) for i in value)}


AGE_METRICS = ("aopt_cycle", "aopt_streaming", "aopt_calibration", "bottleneck_agent", "g_khat", "bottleneck_delay_s")


def _age_point(ctx, rep, views=None, *, capacity_scale=1.0, **trial_overrides) -> dict:
    cfg = ctx.config
    scene = ctx.scene(rep)
    trial = replace(cfg.age.to_trial(cfg.channel), **trial_overrides)
    links = agent_links(scene, trial, cfg.channel.path_loss(), ctx.rng(rep), server_xy=cfg.channel.server_xy)
    agents = age_inputs(scene, trial, links, capacity_scale)
    if views is not None:
        agents = [agents[i] for i in views]
    rep_ = aopt_cycle(agents, CycleConfig(trial.calibration_prob, trial.calibration_interval_s, trial.count_threshold))
    k = rep_.bottleneck_agent
    return {
        "aopt_cycle": rep_.aopt_cycle,
        "aopt_streaming": rep_.aopt_streaming,
        "aopt_calibration": rep_.aopt_calibration,
        "bottleneck_agent": None if k is None else (k if views is None else views[k]),
        "g_khat": rep_.g_khat,
        "bottleneck_delay_s": None if k is None else agents[k].total_delay_s,
    }


def aopt_vs_capacity(ctx, value, rep):
    return _age_point(ctx, rep, capacity_scale=float(value))


def aopt_vs_sampling(ctx, value, rep):
    return _age_point(ctx, rep, sampling_interval_s=float(value))


def per_camera_age(ctx, value, rep):
    cfg = ctx.config
    scene = ctx.scene(rep)
    trial = cfg.age.to_trial(cfg.channel)
    links = agent_links(scene, trial, cfg.channel.path_loss(), ctx.rng(rep), server_xy=cfg.channel.server_xy)
    agents = age_inputs(scene, trial, links)
    (i,) = value
    a = agents[i]
    g = a.target_count
    return {
        "target_count": g,
        "capacity_bps": capacity(links[i]),
        "total_delay_s": a.total_delay_s,
        "aoi_s": aoi(a),
        "aopt_s": g * aoi(a) if g >= trial.count_threshold else 0.0,
    }


FUSION_METRICS = ("moda_fused", "moda_best_single", "best_single_view", "true_positives", "misses",
                  "false_positives", "ground_truth")


def fusion_vs_rate(ctx, value, rep):
    cfg = ctx.config
    trial = replace(cfg.fusion.to_trial(), rate_bits=float(value) * BITS_PER_KB)
    n = len(ctx.cameras)
    policies = {"fused": keep_views(range(n)), **{f"view{i}": keep_views([i]) for i in range(n)}}
    res = evaluate_fusion(ctx.scene(rep), trial, cfg.fusion.noise(ctx.streaming_proxy), policies, ctx.rng(rep),
                          warps=ctx.warps())
    singles = [res[f"view{i}"].moda_percent for i in range(n)]
    best = int(np.argmax(singles))
    f = res["fused"]
    return {
        "moda_fused": f.moda_percent,
        "moda_best_single": singles[best],
        "best_single_view": best,
        "true_positives": f.true_positives,
        "misses": f.misses,
        "false_positives": f.false_positives,
        "ground_truth": f.ground_truth_count,
    }


MASKING_FRAMES = 1


def masking_vs_loss(ctx, value, rep):
    cfg = ctx.config
    r = float(value)
    trial = replace(cfg.fusion.to_trial(), loss_rate=r, frames=MASKING_FRAMES)
    policies = {"priority": priority_policy(r), "random": random_policy(r)}
    res = evaluate_fusion(ctx.scene(rep), trial, cfg.fusion.noise(ctx.streaming_proxy), policies, ctx.rng(rep),
                          warps=ctx.warps())
    p, q = res["priority"].moda_percent, res["random"].moda_percent
    return {"moda_priority": p, "moda_random": q, "gap": p - q}


def fov_subsets(ctx, value, rep):
    cfg = ctx.config
    views = list(value)
    trial = cfg.fusion.to_trial()
    res = evaluate_fusion(ctx.scene(rep), trial, cfg.fusion.noise(ctx.streaming_proxy), {"subset": keep_views(views)},
                          ctx.rng(rep), warps=ctx.warps())
    age = _age_point(ctx, rep, views)
    return {
        "comm_cost_kb": cfg.fusion.rate_kb * len(views),
        "aopt_cycle": age["aopt_cycle"],
        "moda": res["subset"].moda_percent,
    }


def _single_views(n):
    return tuple((i,) for i in range(n))


def presets(config: RunConfig) -> dict[str, Preset]:
    """All named presets, with grid and repetition overrides from ``config.sweeps`` applied."""
    n_cams = len(config.fleet.poses)
    n_slots = int(math.floor(config.scenario.duration_s / config.scenario.time_step_s + 1e-9)) + 1
    base = {
        "calibration_vs_budget": Preset(
            SweepSpec("calibration_vs_budget", "budget", (10.0, 15.0, 20.0, 25.0, 30.0), 20),
            CALIBRATION_METRICS, calibration_vs_budget, "calibration error vs descriptor budget (KB)"),
        "calibration_vs_top_n": Preset(
            SweepSpec("calibration_vs_top_n", "top_n", (3, 5, 8, 10), 1),
            CALIBRATION_METRICS, calibration_vs_top_n, "calibration error vs matches kept per frame"),
        "calibration_vs_interval": Preset(
            SweepSpec("calibration_vs_interval", "calibration_interval", (0.0, 0.5, 1.0, 2.0), 20),
            CALIBRATION_METRICS, calibration_vs_interval, "calibration error vs calibration interval (s)"),
        "targets_per_camera": Preset(
            SweepSpec("targets_per_camera", "fov_subset", _single_views(n_cams), n_slots),
            ("time_s", "target_count"), targets_per_camera, "visible targets per camera over time"),
        "fusion_vs_rate": Preset(
            SweepSpec("fusion_vs_rate", "budget", (10.0, 15.0, 20.0, 25.0, 30.0), 10),
            FUSION_METRICS, fusion_vs_rate, "fused and best single-view MODA vs streaming rate (KB)"),
        "aopt_vs_capacity": Preset(
            SweepSpec("aopt_vs_capacity", "capacity", (0.25, 0.5, 1.0, 2.0, 4.0), 10),
            AGE_METRICS, aopt_vs_capacity, "AoPT vs link capacity scale"),
        "aopt_vs_sampling": Preset(
            SweepSpec("aopt_vs_sampling", "sampling_interval", (0.1, 0.25, 0.5, 1.0, 2.0), 10),
            AGE_METRICS, aopt_vs_sampling, "AoPT vs sampling interval (s)"),
        "masking_vs_loss": Preset(
            SweepSpec("masking_vs_loss", "loss_rate", (0.1, 0.2, 0.3, 0.4), 100),
            ("moda_priority", "moda_random", "gap"), masking_vs_loss, "priority vs random masking MODA vs loss rate"),
        "fov_subsets": Preset(
            SweepSpec("fov_subsets", "fov_subset", ((0,), (1,), (2,), (0, 1, 2)), 10),
            ("comm_cost_kb", "aopt_cycle", "moda"), fov_subsets, "cost, AoPT and MODA per camera subset"),
        "per_camera_age": Preset(
            SweepSpec("per_camera_age", "fov_subset", _single_views(n_cams), 10),
            ("target_count", "capacity_bps", "total_delay_s", "aoi_s", "aopt_s"), per_camera_age,
            "per-camera AoI and AoPT"),
    }
    assert tuple(base) == PRESET_NAMES
    out = {}
    for name, p in base.items():
        o = config.sweeps.get(name)
        if o is not None:
            values = p.spec.values if o.values is None else tuple(_coerce(p.spec.axis, v) for v in o.values)
            reps = p.spec.repetitions if o.repetitions is None else o.repetitions
            p = replace(p, spec=replace(p.spec, values=values, repetitions=reps))
        out[name] = p
    return out


def _coerce(axis: str, v):
    if axis == "fov_subset":
        return tuple(int(i) for i in (v if isinstance(v, (list, tuple)) else [v]))
    if axis == "top_n":
        return int(v)
    return float(v)


# --- runner --------------------------------------------------------------------------


@dataclass
class SweepResult:
    spec: SweepSpec
    metrics: tuple[str, ...]
    rows: list[dict] = field(default_factory=list)

    @property
    def header(self) -> list[str]:
        return ["axis_value", "repetition", "status", *self.metrics, "error"]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        for row in self.rows:
            w.writerow([format_cell(row.get(h)) for h in self.header])
        return buf.getvalue()

    def column(self, name: str, value=None) -> list:
        """Values of one metric for successful rows, optionally at one grid value."""
        return [r[name] for r in self.rows if r["status"] == "ok" and (value is None or r["axis_value"] == value)]


def format_value(axis: str, v) -> str:
    if axis == "fov_subset":
        return "+".join(str(i) for i in v)
    return format_cell(v)


def format_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _point(ctx: SweepContext, preset: Preset, value, rep: int) -> dict:
    row = {"axis_value": value, "repetition": rep}
    try:
        metrics = preset.run(ctx, value, rep)
    except (ValueError, ArithmeticError) as exc:
        row.update(status="failed", error=f"{type(exc).__name__}: {exc}")
        return row
    row.update(metrics, status="ok", error="")
    return row


def run_sweep(config: RunConfig, name: str, *, workers: int | None = None) -> SweepResult:
    """Evaluate every (grid value, repetition) point of one preset.

    Points that raise a module error become ``failed`` rows. Rows are
    ordered by grid value, then repetition.
    """
    table = presets(config)
    if name not in table:
        raise KeyError(f"unknown preset {name!r}; known: {list(table)}")
    preset = table[name]
    ctx = SweepContext(config, PRESET_NAMES.index(name))
    points = [(v, r) for v in preset.spec.values for r in range(preset.spec.repetitions)]
    n = workers or config.workers
    if n == 1:
        rows = [_point(ctx, preset, v, r) for v, r in points]
    else:
        with ThreadPoolExecutor(max_workers=n) as pool:
            rows = list(pool.map(lambda p: _point(ctx, preset, *p), points))
    for row in rows:
        row["axis_value"] = format_value(preset.spec.axis, row["axis_value"])
    return SweepResult(preset.spec, preset.metrics, rows)


def write_sweep(result: SweepResult, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{result.spec.name}.csv"
    path.write_bytes(result.to_csv().encode("utf-8"))
    return path


def run_suite(config: RunConfig, out_dir=None, names=PRESET_NAMES, *, workers: int | None = None) -> list[Path]:
    """Run the named presets in order and write one CSV each."""
    out_dir = Path(out_dir if out_dir is not None else config.output_dir)
    return [write_sweep(run_sweep(config, n, workers=workers), out_dir) for n in names]


__all__ = [
    "AXES",
    "Preset",
    "SweepContext",
    "SweepResult",
    "SweepSpec",
    "format_cell",
    "presets",
    "run_suite",
    "run_sweep",
    "write_sweep",
]

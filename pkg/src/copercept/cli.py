"""Command-line entry point: ``copercept <subcommand> [options]``.

Every subcommand reads an optional JSON run configuration (defaults apply
when ``--config`` is omitted), writes its artifacts, prints a one-line JSON
summary on stdout and exits 0. Failures exit nonzero with a JSON error
record on stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .calib.matching import BudgetError
from .calib.pipeline import CalibrationInfeasibleError
from .channel import link_at_distance
from .config import ConfigError, RunConfig, load_config
from .experiments import BITS_PER_KB, build_scene, run_calibration_trial
from .fusion import assign_masks, detect_peaks, detections_to_csv, extract_features, fuse, moda, priority, random_masks, write_pgm
from .report import summarize_file, write_summary
from .scenario import write_trace
from .sched import p2_surface, p3_surface, solve_p2, solve_p3
from .sweeps import AXES, format_cell, presets, run_sweep, write_sweep

EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_FAILURE = 1

AXIS_PRESETS = {
    "capacity": "aopt_vs_capacity",
    "sampling_interval": "aopt_vs_sampling",
    "calibration_interval": "calibration_vs_interval",
    "budget": "calibration_vs_budget",
    "loss_rate": "masking_vs_loss",
    "top_n": "calibration_vs_top_n",
    "fov_subset": "fov_subsets",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _emit_error(kind: str, message: str, code: int, **extra) -> int:
    record = {"error": kind, "message": message, "exit_code": code, **extra}
    sys.stderr.write(json.dumps(record, sort_keys=True) + "\n")
    return code


def _config(args) -> RunConfig:
    return load_config(args.config) if args.config else RunConfig()


def _seed(args, cfg: RunConfig) -> int:
    return cfg.master_seed if args.seed is None else args.seed


def _write_text(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(text.encode("utf-8"))


def _done(**fields) -> int:
    print(json.dumps(fields, sort_keys=True))
    return 0


# --- subcommands ---------------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = _config(args)
    seed = _seed(args, cfg)
    scene = build_scene(seed, cfg.scenario.to_params(), cfg.fleet.cameras())
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_trace(scene.trace, out)
    return _done(command="simulate", seed=seed, tracks=len(scene.trace.tracks), steps=scene.trace.n_steps,
                 path=str(out))


CALIBRATION_COLUMNS = ("trial", "status", "rotation_error_deg", "translation_error_m",
                       "extrinsic_error_pct", "n_correspondences", "bits_per_component", "cost_kb",
                       "reprojection_rms_px", "error")


def cmd_calibrate(args) -> int:
    cfg = _config(args)
    seed = _seed(args, cfg)
    scene = build_scene(seed, cfg.scenario.to_params(), cfg.fleet.cameras())
    trial = cfg.calibration.to_trial()
    if args.budget_kb is not None:
        trial = replace(trial, budget_bits=args.budget_kb * BITS_PER_KB)
    if args.top_n is not None:
        trial = replace(trial, top_n=args.top_n)
    if args.interval is not None:
        trial = replace(trial, calibration_interval_s=args.interval)
    n_trials = args.trials or cfg.calibration.trials
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xCA1]))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CALIBRATION_COLUMNS)
    n_ok = 0
    errors = []
    for i, s in enumerate(rng.integers(0, 2**63 - 1, size=n_trials)):
        try:
            r = run_calibration_trial(scene, trial, np.random.default_rng(s))
        except (CalibrationInfeasibleError, BudgetError) as exc:
            w.writerow([i, "failed", "", "", "", "", "", "", "", f"{type(exc).__name__}: {exc}"])
            continue
        n_ok += 1
        errors.append(r.rotation_error_deg)
        w.writerow([i, "ok", *(format_cell(v) for v in (
            r.rotation_error_deg, r.translation_error_m, r.extrinsic_error_pct, r.n_correspondences,
            r.bits_per_component, r.cost_bits / BITS_PER_KB, r.reprojection_rms_px)), ""])
    out = Path(args.out)
    _write_text(out, buf.getvalue())
    if n_ok == 0:
        return _emit_error("CalibrationInfeasibleError", "every calibration trial failed", EXIT_FAILURE, path=str(out))
    return _done(command="calibrate", seed=seed, trials=n_trials, succeeded=n_ok,
                 mean_rotation_error_deg=float(np.mean(errors)), path=str(out))


def _surface_csv(axes, obj, feasible, names) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([*names, "objective", "feasible"])
    B, D, T = axes
    for i, b in enumerate(B):
        for j, d in enumerate(D):
            for k, t in enumerate(T):
                w.writerow([repr(float(b)), repr(float(d)), repr(float(t)), repr(float(obj[i, j, k])),
                            int(feasible[i, j, k])])
    return buf.getvalue()


def cmd_optimize(args) -> int:
    cfg = _config(args)
    ch = cfg.channel
    rng = np.random.default_rng(_seed(args, cfg))
    link = link_at_distance(args.distance_m, ch.path_loss(), rng, bandwidth_hz=ch.bandwidth_hz,
                            tx_power_w=ch.tx_power_w, noise_psd_w_per_hz=ch.noise_psd_w_per_hz,
                            inference_delay_s=ch.inference_delay_s)
    bounds, grid, weights = cfg.bounds.to_bounds(), cfg.grid.to_grid(), cfg.weights.to_weights()
    p1 = cfg.age.calibration_prob
    ca = cfg.proxies.calibration.to_proxy("calibration")
    st = cfg.proxies.streaming.to_proxy("streaming")
    s2 = solve_p2(link, bounds, ca, weights, p1, grid)
    s3 = solve_p3(link, bounds, st, weights, p1, grid)
    out = Path(args.out_dir)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["problem", "variable", "value"])
    for name, sol in (("calibration", s2), ("streaming", s3)):
        w.writerow([name, "feasible", int(sol.feasible)])
        for k, v in sol.chosen.items():
            w.writerow([name, k, repr(float(v))])
        w.writerow([name, "objective", repr(float(sol.objective_value))])
        w.writerow([name, "accuracy", repr(float(sol.accuracy_at_solution))])
    _write_text(out / "solution.csv", buf.getvalue())
    axes, obj, feas = p2_surface(link, bounds, ca, weights, p1, grid)
    _write_text(out / "calibration_surface.csv",
                _surface_csv(axes, obj, feas, ("bandwidth_hz", "packet_bits", "calibration_interval_s")))
    axes, obj, feas = p3_surface(link, bounds, st, weights, p1, grid)
    _write_text(out / "streaming_surface.csv",
                _surface_csv(axes, obj, feas, ("bandwidth_hz", "packet_bits", "sampling_interval_s")))
    if not (s2.feasible and s3.feasible):
        return _emit_error("Infeasible", "no feasible grid point", EXIT_FAILURE, path=str(out))
    return _done(command="optimize", calibration=s2.chosen, streaming=s3.chosen, path=str(out))


def cmd_fuse(args) -> int:
    cfg = _config(args)
    seed = _seed(args, cfg)
    scene = build_scene(seed, cfg.scenario.to_params(), cfg.fleet.cameras())
    fc = cfg.fusion
    rate_kb = fc.rate_kb if args.rate_kb is None else args.rate_kb
    loss = fc.loss_rate if args.loss_rate is None else args.loss_rate
    k = scene.trace.step_of(args.time)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xF05E, k]))
    noise = fc.noise(cfg.proxies.streaming.to_proxy("streaming"))
    feats = [
        extract_features(cam, scene.trace, args.time, rate_kb * BITS_PER_KB, noise=noise, rng=rng, agent_id=i)
        for i, cam in enumerate(scene.cameras)
    ]
    pr = [priority(f) for f in feats]
    masks = assign_masks(pr, loss) if args.masking == "priority" else random_masks(pr, loss, rng)
    occ = fuse(feats, masks, scene.cameras, arena=scene.trace.arena)
    det = detect_peaks(occ, fc.threshold, fc.min_separation_cells)
    _, gt = scene.trace.at_step(k)
    rep = moda(det.xy, gt, fc.match_radius_m)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "occupancy.pgm").write_bytes(write_pgm(occ))
    _write_text(out / "detections.csv", detections_to_csv(det, k))
    return _done(command="fuse", seed=seed, time_index=k, masked=[i for i, m in enumerate(masks) if not m.mask],
                 detections=len(det), ground_truth=rep.ground_truth_count, moda_percent=rep.moda_percent,
                 empty=occ.empty, path=str(out))


def _parse_values(text: str, axis: str):
    items = [s.strip() for s in text.split(",") if s.strip()]
    if axis == "fov_subset":
        return [[int(i) for i in s.split("+")] for s in items]
    return [float(s) for s in items]


def cmd_sweep(args) -> int:
    cfg = _config(args)
    if args.seed is not None:
        cfg = cfg.model_copy(update={"master_seed": args.seed})
    if args.all:
        names = list(presets(cfg))
    elif args.preset:
        names = [args.preset]
    elif args.axis:
        names = [AXIS_PRESETS[args.axis]]
    else:
        raise UsageError("give --preset, --axis or --all")
    if args.values or args.repetitions:
        if len(names) != 1:
            raise UsageError("--values and --repetitions apply to a single preset")
        axis = presets(cfg)[names[0]].spec.axis
        override = {}
        if args.values:
            override["values"] = _parse_values(args.values, axis)
        if args.repetitions:
            override["repetitions"] = args.repetitions
        cfg = RunConfig.model_validate({**cfg.model_dump(mode="json"),
                                        "sweeps": {**cfg.model_dump(mode="json")["sweeps"], names[0]: override}})
    out_dir = Path(args.out_dir or cfg.output_dir)
    written = []
    failed = 0
    for name in names:
        result = run_sweep(cfg, name, workers=args.workers)
        failed += sum(r["status"] != "ok" for r in result.rows)
        written.append(str(write_sweep(result, out_dir)))
    return _done(command="sweep", presets=names, failed_points=failed, paths=written)


def cmd_report(args) -> int:
    out_dir = Path(args.out_dir)
    paths = []
    for p in args.csv:
        summary = summarize_file(p)
        paths.append(str(write_summary(summary, out_dir)))
        sys.stdout.write(summary.to_text())
    return _done(command="report", paths=paths)


# --- parser --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="copercept", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p, seed=True):
        p.add_argument("--config", help="JSON run configuration (defaults when omitted)")
        if seed:
            p.add_argument("--seed", type=int, help="override the master seed")
        return p

    p = common(sub.add_parser("simulate", help="generate a scenario trace"))
    p.add_argument("--out", default="trace.txt")
    p.set_defaults(func=cmd_simulate)

    p = common(sub.add_parser("calibrate", help="re-calibrate one camera on the seeded scene"))
    p.add_argument("--out", default="calibration.csv")
    p.add_argument("--budget-kb", type=float)
    p.add_argument("--top-n", type=int)
    p.add_argument("--interval", type=float, help="calibration interval in seconds")
    p.add_argument("--trials", type=int)
    p.set_defaults(func=cmd_calibrate)

    p = common(sub.add_parser("optimize", help="solve the calibration and streaming schedules"))
    p.add_argument("--out-dir", default="optimize")
    p.add_argument("--distance-m", type=float, default=30.0, help="agent to server distance")
    p.set_defaults(func=cmd_optimize)

    p = common(sub.add_parser("fuse", help="fuse all views at one time and score MODA"))
    p.add_argument("--out-dir", default="fuse")
    p.add_argument("--time", type=float, default=30.0)
    p.add_argument("--rate-kb", type=float)
    p.add_argument("--loss-rate", type=float)
    p.add_argument("--masking", choices=("priority", "random"), default="priority")
    p.set_defaults(func=cmd_fuse)

    p = common(sub.add_parser("sweep", help="run named sweep presets to CSV"))
    g = p.add_mutually_exclusive_group()
    g.add_argument("--preset", choices=list(AXIS_PRESETS.values()) + ["targets_per_camera", "fusion_vs_rate",
                                                                       "per_camera_age"])
    g.add_argument("--axis", choices=AXES)
    g.add_argument("--all", action="store_true")
    p.add_argument("--values", help="comma-separated grid; camera subsets as 0+1+2")
    p.add_argument("--repetitions", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="summarise sweep CSVs per grid value")
    p.add_argument("csv", nargs="+")
    p.add_argument("--out-dir", default="report")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "func", None):
            raise UsageError("missing subcommand")
        return args.func(args)
    except UsageError as exc:
        return _emit_error("UsageError", str(exc), EXIT_USAGE)
    except ConfigError as exc:
        return _emit_error("ConfigError", str(exc), EXIT_CONFIG, field=exc.field)
    except (ValueError, ArithmeticError, OSError, KeyError) as exc:
        return _emit_error(type(exc).__name__, str(exc), EXIT_FAILURE)


if __name__ == "__main__":
    sys.exit(main())

"""End-to-end acceptance checks, one test per criterion.

Each test records a ``criterion N PASS|FAIL`` line with its measured values
and runtime; the lines are echoed in the pytest terminal summary.
"""

import time
from contextlib import contextmanager

import numpy as np

from conftest import ACCEPTANCE_LINES
from copercept.age import AgentAgeInputs, CycleConfig, aoi, aopt_cycle, phase_occupancies, simulate_average_age
from copercept.calib import calibrate
from copercept.channel import LinkParams
from copercept.config import PRESET_NAMES, RunConfig
from copercept.experiments import build_scene
from copercept.scenario import ArrivalModel, observe_frame, simulate_phase_fractions
from copercept.sched import (
    BITS_PER_KB,
    AccuracyProxy,
    Bounds,
    GridSpec,
    LagrangeWeights,
    compose_p2_p3,
    fit_proxy,
    joint_objective_resolution,
    solve_p1_joint,
)
from copercept.sweeps import run_suite, run_sweep


@contextmanager
def criterion(number: int, title: str, limit_s: float | None = None):
    """Time the block, record one summary line and fail on a runtime overrun."""
    state = {"detail": ""}
    start = time.perf_counter()
    ok = False
    try:
        yield state
        ok = True
    finally:
        elapsed = time.perf_counter() - start
        within = limit_s is None or elapsed < limit_s
        verdict = "PASS" if ok and within else "FAIL"
        budget = f" (limit {limit_s:g} s)" if limit_s is not None else ""
        line = f"criterion {number} {verdict}: {title}; {state['detail']}; {elapsed:.2f} s{budget}"
        ACCEPTANCE_LINES.append(line)
        print(line)
    assert within, f"criterion {number} took {elapsed:.2f} s, limit {limit_s} s"


def test_criterion_01_aoi_event_simulation():
    with criterion(1, "AoI closed form vs event simulation", 5.0) as c:
        rng = np.random.default_rng(2024)
        worst = 0.0
        for _ in range(20):
            delta, d = rng.uniform(0.05, 2.0), rng.uniform(0.0, 1.0)
            sim = simulate_average_age(delta, d, n_cycles=10_000)
            worst = max(worst, abs(sim / aoi(AgentAgeInputs(delta, d, 1)) - 1.0))
        c["detail"] = f"20 pairs, 1e4 cycles, worst relative gap {worst:.2e}"
        assert worst < 0.01


def test_criterion_02_phase_occupancies():
    with criterion(2, "M/G/inf phase occupancies", 30.0) as c:
        sigma = 0.5
        worst = 0.0
        for i, rho in enumerate((0.5, 1.0, 2.0)):
            # log-normal dwell with unit mean, so the arrival rate equals rho
            model = ArrivalModel(rho, -sigma**2 / 2.0, sigma)
            for j, p1 in enumerate((0.0, 0.1)):
                sim = simulate_phase_fractions(model, p1, 1e5, np.random.default_rng([i, j, 7]))
                worst = max(worst, float(np.max(np.abs(np.subtract(sim, phase_occupancies(model, p1))))))
        c["detail"] = f"6 (rho, p1) cells over 1e5 time units, worst absolute gap {worst:.4f}"
        assert worst <= 0.01


def test_criterion_03_cycle_identity():
    rng = np.random.default_rng(3)
    instances = []
    for _ in range(10_000):
        n = int(rng.integers(1, 8))
        agents = [AgentAgeInputs(float(a), float(b), int(g)) for a, b, g in
                  zip(rng.uniform(0.01, 3, n), rng.uniform(0, 1, n), rng.integers(1, 40, n))]
        instances.append((agents, CycleConfig(float(rng.uniform()), float(rng.uniform(0, 5)))))
    with criterion(3, "convex combination equals regrouped AoPT", 1.0) as c:
        worst = 0.0
        for agents, cfg in instances:
            r = aopt_cycle(agents, cfg)
            worst = max(worst, abs(r.aopt_cycle - (r.calibration_rate_term + r.transmission_term)) / r.aopt_cycle)
        c["detail"] = f"1e4 instances, worst relative gap {worst:.1e}"
        assert worst <= 1e-12


def test_criterion_04_decomposition():
    proxies = (AccuracyProxy("calibration", 100.0, 30_800.0), AccuracyProxy("streaming", 86.0953, 36_945.93))
    bounds, grid = Bounds(), GridSpec(8, 8, 8)
    with criterion(4, "joint optimum equals composed subproblem optimum", 60.0) as c:
        worst_ratio = 0.0
        for seed in range(50):
            rng = np.random.default_rng([4, seed])
            cap_bw = 2e6
            snr = 2 ** (rng.uniform(0.05e6, 8e6) / cap_bw) - 1
            link = LinkParams(cap_bw, 1.0, 1.0 / (snr * cap_bw), 1.0, float(rng.uniform(0, 0.1)))
            weights = LagrangeWeights(float(rng.uniform(0, 0.05)), float(rng.uniform(0, 0.05)))
            p1 = float(rng.uniform())
            agents = [AgentAgeInputs(0.5, 0.1, int(g)) for g in rng.integers(0, 20, 7)]
            joint = solve_p1_joint(link, bounds, proxies, weights, p1, agents, grid)
            _, _, composed = compose_p2_p3(link, bounds, proxies, weights, p1, agents, grid)
            res = joint_objective_resolution(link, bounds, proxies, weights, p1, agents, grid)
            gap = abs(joint.objective_value - composed)
            assert gap <= res + 1e-12 * max(1.0, abs(composed)), f"seed {seed}: gap {gap} > resolution {res}"
            if res > 0:
                worst_ratio = max(worst_ratio, gap / res)
        c["detail"] = f"50 configs on 8^6 grids, worst gap/resolution {worst_ratio:.2e}"


def test_criterion_05_noiseless_calibration():
    scene = build_scene(0)
    ref, rec = scene.cameras[0], scene.cameras[1]
    with criterion(5, "noiseless calibration recovery", 1.0) as c:
        rng = np.random.default_rng(5)
        steps = range(60, 100, 4)
        ref_obs = [observe_frame(scene.trace, ref, k, rng, pixel_noise_px=0.0, descriptor_noise=0.0) for k in steps]
        rec_obs = [observe_frame(scene.trace, rec, k, rng, pixel_noise_px=0.0, descriptor_noise=0.0) for k in steps]
        _, report = calibrate(rec.intrinsics, ref, ref_obs, rec_obs, None, 5, ground_truth=rec.extrinsics)
        c["detail"] = (f"{report.n_correspondences} correspondences, e_extrinsic {report.extrinsic_error_pct:.1e} %, "
                       f"rotation {report.rotation_error_deg:.1e} deg, translation {report.translation_error_m:.1e} m")
        assert report.n_correspondences >= 4
        assert report.extrinsic_error_pct < 1e-6
        assert report.rotation_error_deg < 1e-6
        assert report.translation_error_m < 1e-6


def _by_value(result, metric):
    out = {}
    for r in result.rows:
        assert r["status"] == "ok", r["error"]
        out.setdefault(r["axis_value"], {})[r["repetition"]] = r[metric]
    return out


def test_criterion_06_budget_and_interval_trends():
    cfg = RunConfig.model_validate({"sweeps": {"calibration_vs_budget": {"values": [10.0, 30.0], "repetitions": 20}}})
    with criterion(6, "calibration error falls with budget and rises with interval", 60.0) as c:
        budget = run_sweep(cfg, "calibration_vs_budget")
        worse = []
        for metric in ("rotation_error_deg", "translation_error_m"):
            v = _by_value(budget, metric)
            worse += [(metric, rep) for rep in range(20) if v["30.0"][rep] > v["10.0"][rep]]
        interval = run_sweep(cfg, "calibration_vs_interval")
        means = {}
        for metric in ("rotation_error_deg", "translation_error_m"):
            v = _by_value(interval, metric)
            means[metric] = [float(np.mean(list(v[k].values()))) for k in v]
        c["detail"] = (f"scenes where 30KB is worse than 10KB: {len(worse)}/20; interval means rotation "
                       + "/".join(f"{x:.2f}" for x in means["rotation_error_deg"]) + " deg, translation "
                       + "/".join(f"{x:.2f}" for x in means["translation_error_m"]) + " m")
        assert not worse
        for col in means.values():
            assert all(a <= b for a, b in zip(col, col[1:]))


def test_criterion_07_top_n():
    with criterion(7, "five matches per frame beat three and ten") as c:
        result = run_sweep(RunConfig.model_validate({"sweeps": {"calibration_vs_top_n": {"values": [3, 5, 10]}}}),
                           "calibration_vs_top_n")
        rot = {r["axis_value"]: r["rotation_error_deg"] for r in result.rows}
        trans = {r["axis_value"]: r["translation_error_m"] for r in result.rows}
        c["detail"] = ("rotation " + ", ".join(f"N={k}: {v:.2f}" for k, v in rot.items())
                       + " deg; translation " + ", ".join(f"N={k}: {v:.2f}" for k, v in trans.items()) + " m")
        for err in (rot, trans):
            assert err["5"] <= err["3"] and err["5"] <= err["10"]


def test_criterion_08_aopt_trends():
    cfg = RunConfig()
    with criterion(8, "AoPT falls with capacity and rises with sampling interval", 30.0) as c:
        checks = {}
        for name, sign in (("aopt_vs_capacity", -1), ("aopt_vs_sampling", 1)):
            v = _by_value(run_sweep(cfg, name), "aopt_cycle")
            grid = list(v)
            bad = [rep for rep in range(10)
                   if not all(sign * (v[b][rep] - v[a][rep]) > 0 for a, b in zip(grid, grid[1:]))]
            checks[name] = bad
        c["detail"] = f"non-monotone seeds: capacity {checks['aopt_vs_capacity']}, sampling {checks['aopt_vs_sampling']}"
        assert not any(checks.values())


def test_criterion_09_fusion_gain_and_proxy_anchors():
    cfg = RunConfig.model_validate({"sweeps": {"fusion_vs_rate": {"values": [20.0], "repetitions": 10}}})
    with criterion(9, "fused MODA beats best single view; proxy fit hits anchors") as c:
        result = run_sweep(cfg, "fusion_vs_rate")
        fused = _by_value(result, "moda_fused")["20.0"]
        single = _by_value(result, "moda_best_single")["20.0"]
        losses = [rep for rep in range(10) if not fused[rep] > single[rep]]
        kb = BITS_PER_KB
        fov1 = fit_proxy([(15.36 * kb, 63.15), (18.69 * kb, 64.90)])
        fused_proxy = fit_proxy([(17.07 * kb, 84.14), (26.62 * kb, 85.86)])
        residuals = [abs(float(fov1(15.36 * kb)) - 63.15), abs(float(fov1(18.69 * kb)) - 64.90),
                     abs(float(fused_proxy(17.07 * kb)) - 84.14)]
        c["detail"] = (f"mean fused {np.mean(list(fused.values())):.1f} vs best single "
                       f"{np.mean(list(single.values())):.1f}, scenes lost {len(losses)}/10; "
                       f"anchor residuals " + ", ".join(f"{r:.2e}" for r in residuals))
        assert not losses
        assert max(residuals) <= 0.5
        assert fused_proxy.gamma_max > fov1.gamma_max


def test_criterion_10_priority_masking():
    with criterion(10, "priority masking is at least as good as random masking", 300.0) as c:
        result = run_sweep(RunConfig(), "masking_vs_loss")
        v_p = _by_value(result, "moda_priority")
        v_r = _by_value(result, "moda_random")
        rows = []
        for rate in v_p:
            p, q = np.mean(list(v_p[rate].values())), np.mean(list(v_r[rate].values()))
            rows.append((float(rate), len(v_p[rate]), p, q))
        c["detail"] = "; ".join(f"r={r}: {p:.2f} vs {q:.2f} over {n}" for r, n, p, q in rows)
        for rate, n, p, q in rows:
            assert n == 100
            assert p >= q
            if rate >= 0.3:
                assert p - q > 0


def test_criterion_11_determinism(tmp_path):
    # every preset, with repetitions trimmed so the suite runs twice in reasonable time
    cfg = RunConfig.model_validate({"master_seed": 11, "sweeps": {name: {"repetitions": 2} for name in PRESET_NAMES}})
    with criterion(11, "identical config and seed give byte-identical CSVs") as c:
        first = run_suite(cfg, tmp_path / "a", workers=1)
        second = run_suite(cfg, tmp_path / "b", workers=4)
        same = [a.read_bytes() == b.read_bytes() for a, b in zip(first, second)]
        c["detail"] = f"{sum(same)}/{len(same)} preset CSVs identical across two runs"
        assert len(same) == len(PRESET_NAMES) and all(same)

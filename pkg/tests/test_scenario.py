import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from copercept.calib.geometry import Intrinsics, look_at
from copercept.scenario import (
    Arena,
    ArrivalModel,
    ScenarioTrace,
    TargetTrack,
    default_fleet,
    dumps_trace,
    generate,
    idle_fraction,
    loads_trace,
    observe_descriptor,
    observe_frame,
    offered_load,
    read_trace,
    visible_count,
    write_trace,
)

ARENA = Arena()


def single_target_trace(xy, dim=8):
    track = TargetTrack(0, 0.0, 10.0, 0, np.array([xy] * 21, dtype=float), np.linspace(1.0, 3.0, dim))
    return ScenarioTrace([track], 10.0, 0.5, 0, ARENA, dim)


def test_zero_rate_gives_no_tracks():
    trace = generate(ArrivalModel(0.0, 0.0, 0.0), ARENA, 100.0, 1.0, seed=1)
    assert trace.tracks == []
    assert trace.active_count(5) == 0


def test_mean_concurrent_count_matches_offered_load():
    model = ArrivalModel(1.0, 0.0, 0.0)
    trace = generate(model, ARENA, 10_000.0, 1.0, seed=4, warmup_s=5.0, descriptor_dim=2)
    mean = np.mean([trace.active_count(k) for k in range(trace.n_steps)])
    assert abs(mean - 1.0) <= 0.05


def test_generate_is_deterministic():
    model = ArrivalModel(0.5, 1.0, 0.3)
    assert dumps_trace(generate(model, ARENA, 30.0, 0.5, seed=9)) == dumps_trace(generate(model, ARENA, 30.0, 0.5, seed=9))


@pytest.mark.parametrize("model, rho", [
    (ArrivalModel(2.0, 0.0, 0.0), 2.0),
    (ArrivalModel(1.0, 1.0, 0.0), math.e),
])
def test_offered_load_closed_form(model, rho):
    assert offered_load(model) == pytest.approx(rho, rel=1e-12)


def test_offered_load_monte_carlo():
    model = ArrivalModel(0.5, 0.3, 0.8)
    dwell = np.random.default_rng(0).lognormal(0.3, 0.8, 400_000)
    assert offered_load(model) == pytest.approx(0.5 * dwell.mean(), rel=0.01)


def test_idle_fraction_converges():
    model = ArrivalModel(1.0, 0.0, 0.0)
    frac = idle_fraction(model, 1e5, np.random.default_rng(2))
    assert abs(frac - math.exp(-1.0)) <= 0.01


def test_tracks_stay_in_arena():
    trace = generate(ArrivalModel(1.0, math.log(60.0), 0.2), ARENA, 120.0, 0.5, seed=3, speed_m_s=5.0)
    for tr in trace.tracks:
        assert ARENA.contains(tr.positions).all()


def test_visible_count_empty_and_centred():
    cam = look_at(Intrinsics(1000, 1000, 960, 540), (6.0, -2.0, 5.0), (6.0, 10.0, 0.0))
    empty = ScenarioTrace([], 10.0, 0.5, 0, ARENA, 8)
    assert visible_count(empty, cam, 1.0) == 0
    assert visible_count(single_target_trace((6.0, 10.0)), cam, 1.0) == 1


def test_cameras_see_different_counts(scene):
    counts = np.array([[visible_count(scene.trace, c, t) for c in scene.cameras] for t in range(0, 120, 4)])
    means = counts.mean(axis=0)
    assert np.ptp(means) > 1.0


def test_visible_count_invariant_under_relabeling(scene):
    cam = scene.cameras[2]
    perm = np.random.default_rng(0).permutation(len(scene.trace.tracks))
    relabeled = ScenarioTrace(
        [TargetTrack(int(perm[i]), t.arrival_time_s, t.dwell_s, t.first_step, t.positions, t.true_descriptor)
         for i, t in enumerate(scene.trace.tracks)][::-1],
        scene.trace.duration_s, scene.trace.time_step_s, 0, scene.trace.arena, scene.trace.descriptor_dim,
    )
    for t in (10.0, 50.0, 90.0):
        assert visible_count(relabeled, cam, t) == visible_count(scene.trace, cam, t)


def test_descriptor_exact_without_noise_or_quantization():
    cam = look_at(Intrinsics(1000, 1000, 960, 540), (6.0, -2.0, 5.0), (6.0, 10.0, 0.0))
    trace = single_target_trace((6.0, 10.0))
    d = observe_descriptor(trace.tracks[0], cam, None, np.random.default_rng(0), trace=trace, t=1.0, noise_sigma=0.0)
    np.testing.assert_array_equal(d, trace.tracks[0].true_descriptor)


def test_one_bit_descriptor_has_two_levels():
    cam = look_at(Intrinsics(1000, 1000, 960, 540), (6.0, -2.0, 5.0), (6.0, 10.0, 0.0))
    trace = single_target_trace((6.0, 10.0), dim=64)
    d = observe_descriptor(trace.tracks[0], cam, 1, np.random.default_rng(0), trace=trace, t=1.0)
    assert set(np.unique(d)) <= {1.0, 3.0}


def test_descriptor_absent_when_out_of_view():
    cam = look_at(Intrinsics(1000, 1000, 960, 540), (6.0, -2.0, 5.0), (6.0, 10.0, 0.0))
    trace = single_target_trace((6.0, -1.0))
    assert observe_descriptor(trace.tracks[0], cam, None, np.random.default_rng(0), trace=trace, t=1.0) is None


def test_observe_frame_only_reports_visible(scene):
    cam = scene.cameras[0]
    obs = observe_frame(scene.trace, cam, 40, np.random.default_rng(0))
    assert len(obs) == visible_count(scene.trace, cam, 40 * scene.trace.time_step_s)
    assert obs.descriptors.shape == (len(obs), scene.trace.descriptor_dim)


def test_trace_round_trip(tmp_path):
    trace = generate(ArrivalModel(0.3, 2.0, 0.5), ARENA, 20.0, 0.5, seed=5, descriptor_dim=6)
    path = tmp_path / "trace.txt"
    write_trace(trace, path)
    back = read_trace(path)
    assert dumps_trace(back) == dumps_trace(trace)
    for a, b in zip(trace.tracks, back.tracks):
        np.testing.assert_array_equal(a.positions, b.positions)
        np.testing.assert_array_equal(a.true_descriptor, b.true_descriptor)


def test_loads_trace_rejects_foreign_text():
    with pytest.raises(ValueError):
        loads_trace("time,id,x,y\n")


def test_default_fleet_has_seven_cameras_looking_at_arena():
    fleet = default_fleet()
    assert len(fleet) == 7
    centre_hits = [visible_count(single_target_trace((6.0, 18.0)), c, 0.0) for c in fleet]
    assert sum(centre_hits) >= 2


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_active_count_matches_track_index(seed):
    trace = generate(ArrivalModel(0.5, 1.5, 0.4), ARENA, 20.0, 0.5, seed=seed, descriptor_dim=2)
    k = trace.n_steps // 2
    expected = sum(tr.first_step <= k < tr.first_step + len(tr.positions) for tr in trace.tracks)
    assert trace.active_count(k) == expected

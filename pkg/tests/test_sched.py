import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from copercept.age import AgentAgeInputs
from copercept.channel import LinkParams, capacity
from copercept.sched import (
    BITS_PER_KB,
    AccuracyProxy,
    Bounds,
    GridSizeError,
    GridSpec,
    LagrangeWeights,
    ProxyFitError,
    capacity_for_bandwidth,
    compose_p2_p3,
    fit_proxy,
    joint_objective,
    solve_p1_joint,
    solve_p2,
    solve_p3,
)

CA = AccuracyProxy("calibration", 100.0, 30_800.0)
ST = AccuracyProxy("streaming", 86.0953, 36_945.93)
BOUNDS = Bounds()


def link_with_capacity(c_bps, inference=0.0, bandwidth=2e6):
    """Link whose capacity at ``bandwidth`` is ``c_bps``."""
    snr = 2 ** (c_bps / bandwidth) - 1
    return LinkParams(bandwidth, 1.0, 1.0 / (snr * bandwidth), 1.0, inference)


def enumerate_p2(link, bounds, proxy, weights, p1, grid):
    B, D, T = grid.axes(bounds, "calibration")
    best, best_key = None, None
    for i, j, k in itertools.product(range(len(B)), range(len(D)), range(len(T))):
        c = B[i] * math.log2(1 + link.tx_power_w * link.channel_gain / (link.noise_psd_w_per_hz * B[i]))
        if T[k] < max(bounds.delta_T_min, D[j] / c):
            continue
        val = p1 * T[k] - weights.lambda_ca * (float(proxy(D[j])) - proxy.default_threshold)
        key = (val, k, j, i)
        if best_key is None or key < best_key:
            best, best_key = (i, j, k), key
    return best, best_key[0]


def enumerate_p3(link, bounds, proxy, weights, p1, grid):
    B, D, T = grid.axes(bounds, "streaming")
    best, best_key = None, None
    for i, j, k in itertools.product(range(len(B)), range(len(D)), range(len(T))):
        c = B[i] * math.log2(1 + link.tx_power_w * link.channel_gain / (link.noise_psd_w_per_hz * B[i]))
        tx = D[j] / c
        if T[k] < max(bounds.delta_min, tx):
            continue
        val = ((p1 / 2 + 1) * (tx + link.inference_delay_s) + (1 - p1) / 2 * T[k]
               - weights.lambda_k * (float(proxy(D[j])) - proxy.default_threshold))
        key = (val, k, j, i)
        if best_key is None or key < best_key:
            best, best_key = (i, j, k), key
    return best, best_key[0]


def test_capacity_for_bandwidth_matches_scalar():
    link = link_with_capacity(4e6)
    for b in (0.5e6, 1e6, 2e6):
        scalar = capacity(LinkParams(b, link.tx_power_w, link.noise_psd_w_per_hz, link.channel_gain))
        assert float(capacity_for_bandwidth(link, b)) == pytest.approx(scalar, rel=1e-12)


def test_p2_without_accuracy_weight_pins_lower_envelope():
    link = link_with_capacity(0.2e6)
    grid = GridSpec(8, 8, 64)
    sol = solve_p2(link, BOUNDS, CA, LagrangeWeights(0.0, 0.0), 0.3, grid)
    _, _, T = grid.axes(BOUNDS, "calibration")
    c_max = float(capacity_for_bandwidth(link, BOUNDS.b_max))
    envelope = max(BOUNDS.delta_T_min, BOUNDS.d_min / c_max)
    assert sol.chosen["calibration_interval_s"] == T[np.searchsorted(T, envelope - 1e-12)]
    assert sol.chosen["packet_bits"] == pytest.approx(BOUNDS.d_min)


def test_p2_large_accuracy_weight_pushes_packet_to_max():
    sol = solve_p2(link_with_capacity(4e6), BOUNDS, CA, LagrangeWeights(1e6, 0.0), 0.1, GridSpec(8, 8, 8))
    assert sol.chosen["packet_bits"] == pytest.approx(BOUNDS.d_max)


@pytest.mark.parametrize("seed", range(3))
def test_p2_matches_re_enumeration(seed):
    rng = np.random.default_rng(seed)
    link = link_with_capacity(rng.uniform(0.05e6, 5e6))
    w = LagrangeWeights(rng.uniform(0, 0.05), rng.uniform(0, 0.05))
    p1 = rng.uniform(0, 1)
    grid = GridSpec(20, 20, 20)
    sol = solve_p2(link, BOUNDS, CA, w, p1, grid)
    idx, val = enumerate_p2(link, BOUNDS, CA, w, p1, grid)
    assert sol.indices == idx
    assert sol.objective_value == val


@pytest.mark.parametrize("seed", range(3))
def test_p3_matches_re_enumeration(seed):
    rng = np.random.default_rng(100 + seed)
    link = link_with_capacity(rng.uniform(0.05e6, 5e6), inference=rng.uniform(0, 0.1))
    w = LagrangeWeights(rng.uniform(0, 0.05), rng.uniform(0, 0.05))
    p1 = rng.uniform(0, 1)
    grid = GridSpec(12, 12, 12)
    sol = solve_p3(link, BOUNDS, ST, w, p1, grid)
    idx, val = enumerate_p3(link, BOUNDS, ST, w, p1, grid)
    assert sol.indices == idx
    assert sol.objective_value == pytest.approx(val, rel=1e-12)


def test_p3_without_weight_pins_packet_and_interval():
    link = link_with_capacity(1e6)
    grid = GridSpec(8, 8, 64)
    sol = solve_p3(link, BOUNDS, ST, LagrangeWeights(0.0, 0.0), 0.1, grid)
    _, _, T = grid.axes(BOUNDS, "streaming")
    c_max = float(capacity_for_bandwidth(link, BOUNDS.b_max))
    envelope = max(BOUNDS.delta_min, BOUNDS.d_min / c_max)
    assert sol.chosen["packet_bits"] == pytest.approx(BOUNDS.d_min)
    assert sol.chosen["sampling_interval_s"] == T[np.searchsorted(T, envelope - 1e-12)]


def test_p3_packet_non_decreasing_in_weight():
    link = link_with_capacity(2e6, inference=0.073)
    chosen = [solve_p3(link, BOUNDS, ST, LagrangeWeights(0.0, lam), 0.1, GridSpec(16, 16, 16)).chosen["packet_bits"]
              for lam in np.linspace(0, 0.1, 15)]
    assert all(a <= b for a, b in zip(chosen, chosen[1:]))
    assert chosen[-1] > chosen[0]


def test_p3_interval_non_increasing_in_capacity():
    chosen = [solve_p3(link_with_capacity(c), BOUNDS, ST, LagrangeWeights(0.0, 0.01), 0.1, GridSpec(16, 16, 32))
              .chosen["sampling_interval_s"] for c in np.geomspace(0.05e6, 10e6, 12)]
    assert all(a >= b for a, b in zip(chosen, chosen[1:]))


@settings(max_examples=25, deadline=None)
@given(c=st.floats(0.02e6, 10e6), lam=st.floats(0, 0.1), p1=st.floats(0, 1), inf=st.floats(0, 0.2))
def test_solutions_satisfy_constraints(c, lam, p1, inf):
    link = link_with_capacity(c, inference=inf)
    w = LagrangeWeights(lam, lam)
    s2 = solve_p2(link, BOUNDS, CA, w, p1, GridSpec(8, 8, 8))
    s3 = solve_p3(link, BOUNDS, ST, w, p1, GridSpec(8, 8, 8))
    for s, key, lo in ((s2, "calibration_interval_s", BOUNDS.delta_T_min), (s3, "sampling_interval_s", BOUNDS.delta_min)):
        if not s.feasible:
            continue
        tx = s.chosen["packet_bits"] / float(capacity_for_bandwidth(link, s.chosen["bandwidth_hz"]))
        assert s.chosen[key] >= max(lo, tx)
        assert BOUNDS.b_min <= s.chosen["bandwidth_hz"] <= BOUNDS.b_max * (1 + 1e-12)
        assert BOUNDS.d_min * (1 - 1e-12) <= s.chosen["packet_bits"] <= BOUNDS.d_max * (1 + 1e-12)


def test_infeasible_solution_is_flagged():
    link = link_with_capacity(1.0)  # one bit per second cannot meet any interval bound
    sol = solve_p3(link, BOUNDS, ST, LagrangeWeights(), 0.1, GridSpec(4, 4, 4))
    assert not sol.feasible and sol.chosen == {}


def test_surface_kept_on_request():
    sol = solve_p2(link_with_capacity(1e6), BOUNDS, CA, LagrangeWeights(), 0.1, GridSpec(4, 5, 6), keep_surface=True)
    assert sol.surface.shape == (4, 5, 6)
    assert sol.surface[sol.indices] == sol.objective_value


def test_joint_grid_guard():
    agents = [AgentAgeInputs(0.5, 0.1, 3)]
    with pytest.raises(GridSizeError):
        solve_p1_joint(link_with_capacity(1e6), BOUNDS, (CA, ST), LagrangeWeights(), 0.1, agents, GridSpec(20, 20, 20))


def test_joint_p1_zero_ignores_calibration_interval():
    agents = [AgentAgeInputs(0.5, 0.1, 3)]
    sol = solve_p1_joint(link_with_capacity(1e6), BOUNDS, (CA, ST), LagrangeWeights(), 0.0, agents, GridSpec(5, 5, 5))
    # the calibration interval has zero weight, so the canonical tie-break picks the smallest feasible one
    assert sol.chosen["calibration_interval_s"] == BOUNDS.delta_T_min


def test_joint_objective_hand_expansion_at_p1_one():
    link = link_with_capacity(1e6, inference=0.05, bandwidth=1e6)
    w = LagrangeWeights(0.02, 0.03)
    point = (1e6, 10 * BITS_PER_KB, 0.7, 1e6, 20 * BITS_PER_KB, 0.4)
    g = 4
    d = 20 * BITS_PER_KB / 1e6 + 0.05
    expected = g * (
        0.5 * 0.7 - 0.5 * 0.02 * (float(CA(10 * BITS_PER_KB)) - CA.default_threshold)
        + 1.5 * d + 0.0 * 0.4
        - 0.03 * (float(ST(20 * BITS_PER_KB)) - ST.default_threshold)
    )
    assert joint_objective(link, BOUNDS, (CA, ST), w, 1.0, g, point) == pytest.approx(expected, rel=1e-12)


def test_composition_matches_joint_on_a_separable_instance():
    agents = [AgentAgeInputs(0.5, 0.1, 3), AgentAgeInputs(0.5, 0.1, 5)]
    link = link_with_capacity(1e6, inference=0.073)
    w = LagrangeWeights(0.01, 0.01)
    joint = solve_p1_joint(link, BOUNDS, (CA, ST), w, 0.2, agents, GridSpec(6, 6, 6))
    _, _, composed = compose_p2_p3(link, BOUNDS, (CA, ST), w, 0.2, agents, GridSpec(6, 6, 6))
    assert joint.chosen["g_khat"] == 5
    assert composed == pytest.approx(joint.objective_value, rel=1e-12)


# --- proxy fitting ------------------------------------------------------------------

def kb(x):
    return x * BITS_PER_KB


def test_fit_single_view_anchors():
    proxy = fit_proxy([(kb(15.36), 63.15), (kb(18.69), 64.90)])
    assert abs(float(proxy(kb(15.36))) - 63.15) <= 0.5
    assert abs(float(proxy(kb(18.69))) - 64.90) <= 0.5


def test_fused_proxy_has_higher_ceiling():
    single = fit_proxy([(kb(15.36), 63.15), (kb(18.69), 64.90)])
    fused = fit_proxy([(kb(17.07), 84.14), (kb(26.62), 85.86)])
    assert abs(float(fused(kb(17.07))) - 84.14) <= 0.5
    assert fused.gamma_max > single.gamma_max


@pytest.mark.parametrize("truth", [
    AccuracyProxy("streaming", 90.0, 40_000.0, 10.0),
    AccuracyProxy("calibration", 50.0, 5_000.0, 2.0),
])
def test_fit_recovers_known_proxy(truth):
    rates = np.geomspace(truth.rate_scale_bits / 10, truth.rate_scale_bits * 4, 8)
    fitted = fit_proxy(np.column_stack([rates, truth(rates)]), truth.kind)
    assert fitted.gamma_max == pytest.approx(truth.gamma_max, rel=0.01)
    assert fitted.rate_scale_bits == pytest.approx(truth.rate_scale_bits, rel=0.01)
    assert fitted.floor == pytest.approx(truth.floor, rel=0.01)


def test_fit_rejects_degenerate_anchors():
    with pytest.raises(ProxyFitError):
        fit_proxy([(1000.0, 50.0), (1000.0, 60.0)])
    with pytest.raises(ProxyFitError):
        fit_proxy([(1000.0, 50.0)])


@given(g=st.floats(1.0, 99.0))
def test_proxy_inverse(g):
    assert float(CA(CA.inverse(g))) == pytest.approx(g, rel=1e-9)

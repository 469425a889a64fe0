import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from copercept.channel import (
    ChannelDomainError,
    LinkParams,
    LossProcess,
    PathLossConfig,
    UnreachableLinkError,
    capacity,
    channel_gain_at,
    effective_noise_psd,
    link_at_distance,
    mean_gain,
    realize_losses,
    reference_gain,
    snr,
    total_delay,
    transmission_delay,
)


def unit_link(**kw):
    base = dict(bandwidth_hz=1.0, tx_power_w=1.0, noise_psd_w_per_hz=1.0, channel_gain=1.0)
    base.update(kw)
    return LinkParams(**base)


def test_snr_unit_inputs():
    assert snr(unit_link()) == 1.0


def test_snr_zero_gain_gives_zero_capacity():
    link = unit_link(channel_gain=0.0)
    assert snr(link) == 0.0
    assert capacity(link) == 0.0


@pytest.mark.parametrize("bad", [dict(bandwidth_hz=0.0), dict(bandwidth_hz=-1.0), dict(noise_psd_w_per_hz=0.0)])
def test_domain_errors(bad):
    with pytest.raises(ChannelDomainError):
        unit_link(**bad)


def test_snr_hand_evaluation_at_50m():
    cfg = PathLossConfig(shadowing_sigma_db=0.0)
    lam = 299_792_458.0 / 2.4e9
    g = (lam / (4 * math.pi)) ** 2 * 50.0**-3.5
    link = LinkParams(2e6, 0.1, 4e-21, mean_gain(50.0, cfg))
    assert link.channel_gain == pytest.approx(g, rel=1e-12)
    assert snr(link) == pytest.approx(0.1 * g / (4e-21 * 2e6), rel=1e-12)


@pytest.mark.parametrize("s, b, expected", [(0.0, 2e6, 0.0), (1.0, 2e6, 2e6), (3.0, 1e6, 2e6)])
def test_capacity_examples(s, b, expected):
    link = LinkParams(b, s, 1.0 / b, 1.0)
    assert capacity(link) == pytest.approx(expected, rel=1e-12, abs=1e-9)


def test_transmission_delay_examples():
    link = LinkParams(2e6, 1.0, 1.0 / 2e6, 1.0)  # SNR 1, C = 2e6
    assert transmission_delay(0, link) == 0.0
    assert transmission_delay(2e6, link) == pytest.approx(1.0)
    with pytest.raises(UnreachableLinkError):
        transmission_delay(1.0, unit_link(channel_gain=0.0))
    with pytest.raises(ChannelDomainError):
        transmission_delay(-1.0, link)


def test_transmission_delay_default_config_at_30m():
    cfg = PathLossConfig()
    link = link_at_distance(30.0, cfg, np.random.default_rng(3), inference_delay_s=0.0)
    # independent recomputation of the whole chain with the same shadowing draw
    shadow_db = 8.0 * np.random.default_rng(3).standard_normal()
    lam = 299_792_458.0 / 2.4e9
    gain = (lam / (4 * math.pi)) ** 2 * 30.0**-3.5 * 10 ** (-shadow_db / 10)
    n_int = 10.0 * 432.0 / 100.0 * 0.01 * 0.1 * (lam / (4 * math.pi)) ** 2 * 50.0**-3.5
    n0 = 4e-21 + n_int / 2e6
    c = 2e6 * math.log2(1 + 0.1 * gain / (n0 * 2e6))
    assert transmission_delay(10 * 8192, link) == pytest.approx(10 * 8192 / c, rel=1e-12)


def test_total_delay_adds_inference():
    link = LinkParams(2e6, 1.0, 1.0 / 2e6, 1.0, inference_delay_s=0.073)
    assert total_delay(2e6, link) == pytest.approx(1.073)
    assert total_delay(0, unit_link()) == 0.0


def test_gain_at_reference_distance_without_shadowing(rng):
    cfg = PathLossConfig(shadowing_sigma_db=0.0)
    assert channel_gain_at(1.0, cfg, rng).gain == pytest.approx(reference_gain(cfg))


def test_gain_ratio_when_doubling_distance():
    cfg = PathLossConfig(shadowing_sigma_db=0.0)
    g1 = channel_gain_at(10.0, cfg, np.random.default_rng(0)).gain
    g2 = channel_gain_at(20.0, cfg, np.random.default_rng(0)).gain
    assert g2 / g1 == pytest.approx(2.0**-3.5, rel=1e-12)


def test_gain_below_reference_is_clamped(rng):
    cfg = PathLossConfig(shadowing_sigma_db=0.0)
    s = channel_gain_at(0.2, cfg, rng)
    assert s.clamped
    assert s.gain == pytest.approx(reference_gain(cfg))


def test_shadowing_std_monte_carlo():
    cfg = PathLossConfig()
    rng = np.random.default_rng(7)
    db = np.array([10 * math.log10(channel_gain_at(25.0, cfg, rng).gain) for _ in range(100_000)])
    assert np.std(db) == pytest.approx(8.0, rel=0.02)


def test_gain_is_seed_deterministic():
    cfg = PathLossConfig()
    a = channel_gain_at(30.0, cfg, np.random.default_rng(5))
    b = channel_gain_at(30.0, cfg, np.random.default_rng(5))
    assert a == b


def test_interference_raises_noise_floor():
    quiet = PathLossConfig(interferer_density_per_100m2=0.0)
    assert effective_noise_psd(4e-21, 2e6, quiet) == 4e-21
    assert effective_noise_psd(4e-21, 2e6, PathLossConfig()) > 4e-21


@pytest.mark.parametrize("r, expected", [(0.0, 0), (1.0, 1000)])
def test_loss_extremes(r, expected):
    assert realize_losses(1000, LossProcess(r, 1)).sum() == expected


def test_loss_rate_law_of_large_numbers():
    lost = realize_losses(100_000, LossProcess(0.3, 11))
    assert abs(lost.mean() - 0.3) <= 0.01


def test_loss_process_validation():
    with pytest.raises(ChannelDomainError):
        LossProcess(1.5)
    assert np.array_equal(realize_losses(50, LossProcess(0.5, 2)), realize_losses(50, LossProcess(0.5, 2)))


@given(
    b=st.floats(1e3, 1e8),
    p=st.floats(1e-3, 10.0),
    g=st.floats(1e-15, 1e-3),
)
def test_capacity_increases_with_power(b, p, g):
    lo = LinkParams(b, p, 4e-21, g)
    hi = LinkParams(b, 2 * p, 4e-21, g)
    assert capacity(hi) >= capacity(lo) > 0

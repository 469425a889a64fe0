"""Wireless link model for camera-to-edge uplinks.

Linear-scale quantities are used throughout; decibels appear only in the
path-loss configuration (shadowing deviation) and at I/O boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


class ChannelDomainError(ValueError):
    """Raised when a link parameter is outside the model's domain."""


class UnreachableLinkError(ValueError):
    """Raised when data must cross a link of zero capacity."""


@dataclass(frozen=True)
class LinkParams:
    bandwidth_hz: float
    tx_power_w: float
    noise_psd_w_per_hz: float
    channel_gain: float
    inference_delay_s: float = 0.0

    def __post_init__(self):
        if not self.bandwidth_hz > 0:
            raise ChannelDomainError(f"bandwidth_hz must be > 0, got {self.bandwidth_hz}")
        if not self.noise_psd_w_per_hz > 0:
            raise ChannelDomainError(
                f"noise_psd_w_per_hz must be > 0, got {self.noise_psd_w_per_hz}"
            )
        if self.tx_power_w < 0:
            raise ChannelDomainError(f"tx_power_w must be >= 0, got {self.tx_power_w}")
        if self.channel_gain < 0:
            raise ChannelDomainError(f"channel_gain must be >= 0, got {self.channel_gain}")
        if self.inference_delay_s < 0:
            raise ChannelDomainError(
                f"inference_delay_s must be >= 0, got {self.inference_delay_s}"
            )


@dataclass(frozen=True)
class PathLossConfig:
    """Log-distance path loss with log-normal shadowing.

    The interference fields describe co-channel devices spread over
    ``interference_area_m2``; see :func:`interference_power`.
    """

    carrier_freq_hz: float = 2.4e9
    path_loss_exponent: float = 3.5
    shadowing_sigma_db: float = 8.0
    reference_distance_m: float = 1.0
    interferer_density_per_100m2: float = 10.0
    interferer_power_w: float = 0.1
    interferer_mean_distance_m: float = 50.0
    interferer_activity: float = 0.01
    interference_area_m2: float = 432.0

    def __post_init__(self):
        if self.path_loss_exponent < 2:
            raise ChannelDomainError("path_loss_exponent must be >= 2")
        if self.shadowing_sigma_db < 0:
            raise ChannelDomainError("shadowing_sigma_db must be >= 0")
        if self.interferer_density_per_100m2 < 0:
            raise ChannelDomainError("interferer_density_per_100m2 must be >= 0")
        if not self.reference_distance_m > 0:
            raise ChannelDomainError("reference_distance_m must be > 0")
        if not 0 <= self.interferer_activity <= 1:
            raise ChannelDomainError("interferer_activity must lie in [0, 1]")


@dataclass(frozen=True)
class LossProcess:
    packet_loss_rate: float
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.packet_loss_rate <= 1.0:
            raise ChannelDomainError(
                f"packet_loss_rate must lie in [0, 1], got {self.packet_loss_rate}"
            )


class GainSample(NamedTuple):
    gain: float
    clamped: bool


def snr(link: LinkParams) -> float:
    """Receiver SNR ``P_t * G / (N_0 * B)`` (linear)."""
    if link.bandwidth_hz <= 0 or link.noise_psd_w_per_hz <= 0:
        raise ChannelDomainError("bandwidth and noise PSD must be positive")
    return link.tx_power_w * link.channel_gain / (link.noise_psd_w_per_hz * link.bandwidth_hz)


def capacity(link: LinkParams) -> float:
    """Shannon capacity in bits/s."""
    return link.bandwidth_hz * math.log2(1.0 + snr(link))


def transmission_delay(packet_bits: float, link: LinkParams) -> float:
    """Seconds needed to push ``packet_bits`` through ``link``."""
    if packet_bits < 0:
        raise ChannelDomainError(f"packet_bits must be >= 0, got {packet_bits}")
    if packet_bits == 0:
        return 0.0
    c = capacity(link)
    if c <= 0:
        raise UnreachableLinkError("link capacity is zero but the packet is non-empty")
    return packet_bits / c


def total_delay(packet_bits: float, link: LinkParams) -> float:
    """Transmission delay plus the edge inference delay."""
    return transmission_delay(packet_bits, link) + link.inference_delay_s


def reference_gain(cfg: PathLossConfig) -> float:
    """Free-space gain at the reference distance."""
    wavelength = SPEED_OF_LIGHT / cfg.carrier_freq_hz
    return (wavelength / (4.0 * math.pi * cfg.reference_distance_m)) ** 2


def mean_gain(distance_m: float, cfg: PathLossConfig) -> float:
    """Distance-dependent gain without shadowing."""
    d = max(distance_m, cfg.reference_distance_m)
    return reference_gain(cfg) * (d / cfg.reference_distance_m) ** (-cfg.path_loss_exponent)


def channel_gain_at(distance_m: float, cfg: PathLossConfig, rng: np.random.Generator) -> GainSample:
    """Draw one linear channel gain at ``distance_m``.

    A single normal variate is always consumed so that the RNG stream
    advances identically whether or not shadowing is enabled. Distances
    below the reference distance are clamped and flagged.
    """
    clamped = distance_m < cfg.reference_distance_m
    shadow_db = cfg.shadowing_sigma_db * rng.standard_normal()
    g = mean_gain(distance_m, cfg) * 10.0 ** (-shadow_db / 10.0)
    return GainSample(float(g), bool(clamped))


def interference_power(cfg: PathLossConfig) -> float:
    """Mean co-channel interference power at the receiver in watts.

    Devices at the configured density over the interference area, each
    active a fraction of the time and seen at the mean distance without
    shadowing. This combining rule is a modelling assumption.
    """
    n_devices = cfg.interferer_density_per_100m2 * cfg.interference_area_m2 / 100.0
    return (
        n_devices
        * cfg.interferer_activity
        * cfg.interferer_power_w
        * mean_gain(cfg.interferer_mean_distance_m, cfg)
    )


def effective_noise_psd(noise_psd_w_per_hz: float, bandwidth_hz: float, cfg: PathLossConfig) -> float:
    """Thermal noise PSD raised by interference spread over the band."""
    return noise_psd_w_per_hz + interference_power(cfg) / bandwidth_hz


def link_at_distance(
    distance_m: float,
    cfg: PathLossConfig,
    rng: np.random.Generator,
    *,
    bandwidth_hz: float = 2e6,
    tx_power_w: float = 0.1,
    noise_psd_w_per_hz: float = 4e-21,
    inference_delay_s: float = 0.073,
) -> LinkParams:
    sample = channel_gain_at(distance_m, cfg, rng)
    return LinkParams(
        bandwidth_hz=bandwidth_hz,
        tx_power_w=tx_power_w,
        noise_psd_w_per_hz=effective_noise_psd(noise_psd_w_per_hz, bandwidth_hz, cfg),
        channel_gain=sample.gain,
        inference_delay_s=inference_delay_s,
    )


def realize_losses(n_packets: int, proc: LossProcess) -> np.ndarray:
    """Boolean mask of lost packets (``True`` = lost), i.i.d. Bernoulli."""
    if n_packets < 0:
        raise ChannelDomainError("n_packets must be >= 0")
    rng = np.random.default_rng(proc.rng_seed)
    return rng.random(n_packets) < proc.packet_loss_rate

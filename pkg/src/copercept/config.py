"""Run configuration: a versioned JSON document validated with pydantic.

Every section has documented defaults, so ``{}`` (or a file holding only
``{"schema_version": 1}``) is a complete configuration. Unknown keys are
rejected at every level, and each section is converted to the library's own
types during validation so their invariants are enforced at load time.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .calib.geometry import Intrinsics
from .channel import LinkParams, PathLossConfig
from .experiments import AgeTrial, CalibrationTrial, FusionTrial, SceneParams
from .fusion import FeatureNoise
from .scenario import DEFAULT_POSES, Arena, ArrivalModel, default_fleet
from .sched import BITS_PER_KB, AccuracyProxy, Bounds, GridSpec, LagrangeWeights

SCHEMA_VERSION = 1

PRESET_NAMES = (
    "calibration_vs_budget",
    "calibration_vs_top_n",
    "calibration_vs_interval",
    "targets_per_camera",
    "fusion_vs_rate",
    "aopt_vs_capacity",
    "aopt_vs_sampling",
    "masking_vs_loss",
    "fov_subsets",
    "per_camera_age",
)


class ConfigError(ValueError):
    """Unreadable or invalid configuration; ``field`` names the offending path."""

    def __init__(self, message: str, field: str = ""):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ScenarioConfig(_Section):
    arrival_rate_per_s: float = Field(1.6, ge=0)
    dwell_log_mean: float = math.log(30.0) - 0.125
    dwell_log_sigma: float = Field(0.5, ge=0)
    arena_width_m: float = Field(12.0, gt=0)
    arena_length_m: float = Field(36.0, gt=0)
    cell_m: float = Field(0.025, gt=0)
    duration_s: float = Field(120.0, gt=0)
    time_step_s: float = Field(0.5, gt=0)
    warmup_s: float = Field(120.0, ge=0)
    pixel_noise_px: float = Field(1.0, ge=0)
    descriptor_noise: float = Field(0.08, ge=0)
    descriptor_spread: float = Field(0.12, ge=0)

    @model_validator(mode="after")
    def _valid(self):
        self.to_params()
        return self

    def to_params(self) -> SceneParams:
        return SceneParams(
            arrivals=ArrivalModel(self.arrival_rate_per_s, self.dwell_log_mean, self.dwell_log_sigma),
            arena=Arena(self.arena_width_m, self.arena_length_m, self.cell_m),
            duration_s=self.duration_s,
            time_step_s=self.time_step_s,
            warmup_s=self.warmup_s,
            pixel_noise_px=self.pixel_noise_px,
            descriptor_noise=self.descriptor_noise,
            descriptor_spread=self.descriptor_spread,
        )


class ChannelConfig(_Section):
    bandwidth_hz: float = Field(2e6, gt=0)
    tx_power_w: float = Field(0.1, gt=0)
    noise_psd_w_per_hz: float = Field(4e-21, gt=0)
    inference_delay_s: float = Field(0.073, ge=0)
    carrier_freq_hz: float = Field(2.4e9, gt=0)
    path_loss_exponent: float = Field(3.5, ge=2)
    shadowing_sigma_db: float = Field(8.0, ge=0)
    reference_distance_m: float = Field(1.0, gt=0)
    interferer_density_per_100m2: float = Field(10.0, ge=0)
    interferer_power_w: float = Field(0.1, ge=0)
    interferer_mean_distance_m: float = Field(50.0, gt=0)
    interferer_activity: float = Field(0.01, ge=0, le=1)
    interference_area_m2: float = Field(432.0, ge=0)
    server_xy: tuple[float, float] = (6.0, 18.0)

    @model_validator(mode="after")
    def _valid(self):
        self.path_loss()
        LinkParams(self.bandwidth_hz, self.tx_power_w, self.noise_psd_w_per_hz, 1.0, self.inference_delay_s)
        return self

    def path_loss(self) -> PathLossConfig:
        return PathLossConfig(
            carrier_freq_hz=self.carrier_freq_hz,
            path_loss_exponent=self.path_loss_exponent,
            shadowing_sigma_db=self.shadowing_sigma_db,
            reference_distance_m=self.reference_distance_m,
            interferer_density_per_100m2=self.interferer_density_per_100m2,
            interferer_power_w=self.interferer_power_w,
            interferer_mean_distance_m=self.interferer_mean_distance_m,
            interferer_activity=self.interferer_activity,
            interference_area_m2=self.interference_area_m2,
        )


class CameraPose(_Section):
    x: float
    y: float
    yaw_deg: float


class FleetConfig(_Section):
    poses: list[CameraPose] = Field(
        default_factory=lambda: [CameraPose(x=x, y=y, yaw_deg=a) for x, y, a in DEFAULT_POSES], min_length=1
    )
    fx: float = Field(1400.0, gt=0)
    fy: float = Field(1400.0, gt=0)
    cx: float = 960.0
    cy: float = 540.0
    height_m: float = Field(4.0, gt=0)
    pitch_deg: float = Field(35.0, gt=0, lt=90)

    @model_validator(mode="after")
    def _valid(self):
        self.cameras()
        return self

    def cameras(self):
        poses = [(p.x, p.y, p.yaw_deg) for p in self.poses]
        return default_fleet(poses, Intrinsics(self.fx, self.fy, self.cx, self.cy), self.height_m, self.pitch_deg)


class BoundsConfig(_Section):
    """Optimizer box; packet sizes in KB (8192 bits)."""

    b_min_hz: float = Field(0.5e6, gt=0)
    b_max_hz: float = Field(2e6, gt=0)
    d_min_kb: float = Field(4.0, gt=0)
    d_max_kb: float = Field(40.0, gt=0)
    delta_min_s: float = Field(0.05, gt=0)
    delta_max_s: float = Field(1.0, gt=0)
    delta_T_min_s: float = Field(0.1, gt=0)
    delta_T_max_s: float = Field(5.0, gt=0)

    @model_validator(mode="after")
    def _valid(self):
        self.to_bounds()
        return self

    def to_bounds(self) -> Bounds:
        return Bounds(
            self.b_min_hz, self.b_max_hz, self.d_min_kb * BITS_PER_KB, self.d_max_kb * BITS_PER_KB,
            self.delta_min_s, self.delta_max_s, self.delta_T_min_s, self.delta_T_max_s,
        )


class GridConfig(_Section):
    n_bandwidth: int = Field(32, ge=1)
    n_packet: int = Field(32, ge=1)
    n_interval: int = Field(32, ge=1)

    def to_grid(self) -> GridSpec:
        return GridSpec(self.n_bandwidth, self.n_packet, self.n_interval)


class ProxyConfig(_Section):
    gamma_max: float
    rate_scale_bits: float = Field(gt=0)
    floor: float = 0.0

    @model_validator(mode="after")
    def _valid(self):
        if self.gamma_max < self.floor:
            raise ValueError("gamma_max must be >= floor")
        return self

    def to_proxy(self, kind: str) -> AccuracyProxy:
        return AccuracyProxy(kind, self.gamma_max, self.rate_scale_bits, self.floor)


class ProxiesConfig(_Section):
    # calibration: accuracy in percent reaching 90% of its ceiling near 8.5 KB
    calibration: ProxyConfig = ProxyConfig(gamma_max=100.0, rate_scale_bits=30800.0)
    # streaming: saturating curve through the all-view MODA anchors
    streaming: ProxyConfig = ProxyConfig(gamma_max=86.0953, rate_scale_bits=36945.93)


class WeightsConfig(_Section):
    lambda_ca: float = Field(0.01, ge=0)
    lambda_k: float = Field(0.01, ge=0)

    def to_weights(self) -> LagrangeWeights:
        return LagrangeWeights(self.lambda_ca, self.lambda_k)


class AgeConfig(_Section):
    packet_kb: float = Field(20.0, gt=0)
    sampling_interval_s: float = Field(0.5, gt=0)
    calibration_interval_s: float = Field(1.0, ge=0)
    calibration_prob: float = Field(0.1, ge=0, le=1)
    count_threshold: int = Field(1, ge=0)
    time_s: float = Field(30.0, ge=0)

    def to_trial(self, channel: ChannelConfig) -> AgeTrial:
        return AgeTrial(
            packet_bits=self.packet_kb * BITS_PER_KB,
            sampling_interval_s=self.sampling_interval_s,
            calibration_interval_s=self.calibration_interval_s,
            calibration_prob=self.calibration_prob,
            count_threshold=self.count_threshold,
            bandwidth_hz=channel.bandwidth_hz,
            tx_power_w=channel.tx_power_w,
            noise_psd_w_per_hz=channel.noise_psd_w_per_hz,
            inference_delay_s=channel.inference_delay_s,
            time_s=self.time_s,
        )


class CalibrationConfig(_Section):
    recal_index: int = Field(1, ge=0)
    reference_index: Optional[int] = Field(None, ge=0)
    budget_kb: Optional[float] = Field(10.0, gt=0)
    top_n: int = Field(5, ge=1)
    window_frames: int = Field(20, ge=1)
    frame_stride: int = Field(2, ge=1)
    calibration_interval_s: float = Field(0.0, ge=0)
    max_keypoints: int = Field(300, ge=1)
    gate_factor: Optional[float] = Field(1.25, gt=0)
    trials: int = Field(4, ge=1)

    @model_validator(mode="after")
    def _valid(self):
        if self.reference_index is not None and self.reference_index == self.recal_index:
            raise ValueError("reference_index must differ from recal_index")
        return self

    def to_trial(self) -> CalibrationTrial:
        return CalibrationTrial(
            recal_index=self.recal_index,
            reference_index=self.reference_index,
            budget_bits=None if self.budget_kb is None else self.budget_kb * BITS_PER_KB,
            top_n=self.top_n,
            window_frames=self.window_frames,
            frame_stride=self.frame_stride,
            calibration_interval_s=self.calibration_interval_s,
            max_keypoints=self.max_keypoints,
            gate_factor=self.gate_factor,
        )


class FusionConfig(_Section):
    rate_kb: float = Field(20.0, gt=0)
    loss_rate: float = Field(0.0, ge=0, le=1)
    frames: int = Field(3, ge=1)
    threshold: float = Field(0.5, gt=0, lt=1)
    min_separation_cells: int = Field(20, ge=0)
    match_radius_m: float = Field(0.5, gt=0)
    noise_floor: float = Field(0.05, ge=0)
    noise_span: float = Field(1.5, ge=0)

    def to_trial(self) -> FusionTrial:
        return FusionTrial(
            self.rate_kb * BITS_PER_KB, self.loss_rate, self.frames, self.threshold,
            self.min_separation_cells, self.match_radius_m,
        )

    def noise(self, proxy: AccuracyProxy) -> FeatureNoise:
        return FeatureNoise(proxy, self.noise_floor, self.noise_span)


class SweepOverride(_Section):
    values: Optional[list] = Field(None, min_length=1)
    repetitions: Optional[int] = Field(None, ge=1)


class RunConfig(_Section):
    schema_version: Literal[1] = SCHEMA_VERSION
    master_seed: int = Field(0, ge=0)
    workers: int = Field(1, ge=1)
    output_dir: str = "out"
    scenario: ScenarioConfig = ScenarioConfig()
    channel: ChannelConfig = ChannelConfig()
    fleet: FleetConfig = FleetConfig()
    bounds: BoundsConfig = BoundsConfig()
    grid: GridConfig = GridConfig()
    proxies: ProxiesConfig = ProxiesConfig()
    weights: WeightsConfig = WeightsConfig()
    age: AgeConfig = AgeConfig()
    calibration: CalibrationConfig = CalibrationConfig()
    fusion: FusionConfig = FusionConfig()
    sweeps: dict[str, SweepOverride] = Field(default_factory=dict)

    @field_validator("sweeps")
    @classmethod
    def _known_presets(cls, v):
        unknown = sorted(set(v) - set(PRESET_NAMES))
        if unknown:
            raise ValueError(f"unknown sweep presets {unknown}; known: {list(PRESET_NAMES)}")
        return v

    @model_validator(mode="after")
    def _indices_in_fleet(self):
        n = len(self.fleet.poses)
        for name in ("recal_index", "reference_index"):
            i = getattr(self.calibration, name)
            if i is not None and i >= n:
                raise ValueError(f"calibration.{name}={i} but the fleet has {n} cameras")
        return self

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), indent=2) + "\n"


def _field_path(err) -> str:
    return ".".join(str(p) for p in err["loc"])


def parse_config(text: str) -> RunConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"not valid JSON ({exc.msg} at line {exc.lineno})") from exc
    if not isinstance(data, dict):
        raise ConfigError("top level must be an object")
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        raise ConfigError(first["msg"], _field_path(first)) from exc


def load_config(path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc.strerror}") from exc
    return parse_config(text)


def save_config(config: RunConfig, path) -> None:
    Path(path).write_text(config.to_json(), encoding="utf-8", newline="\n")


__all__ = [
    "PRESET_NAMES",
    "SCHEMA_VERSION",
    "AgeConfig",
    "BoundsConfig",
    "CalibrationConfig",
    "CameraPose",
    "ChannelConfig",
    "ConfigError",
    "FleetConfig",
    "FusionConfig",
    "GridConfig",
    "ProxiesConfig",
    "ProxyConfig",
    "RunConfig",
    "ScenarioConfig",
    "SweepOverride",
    "WeightsConfig",
    "load_config",
    "parse_config",
    "save_config",
]

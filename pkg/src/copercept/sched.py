"""Calibration/streaming scheduling by exhaustive grid search.

The cycle-average AoPT splits into a calibration-rate group (depending only
on the calibration interval and calibration packet) and a transmission group
(depending only on the streaming bandwidth, packet and sampling interval).
:func:`solve_p2` and :func:`solve_p3` minimise each group with its Lagrangian
accuracy term; :func:`solve_p1_joint` minimises the full objective over the
product grid and exists to check that the split loses nothing.

Accuracy of the learned encoders is replaced by saturating rate-accuracy
proxies (:class:`AccuracyProxy`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares

from .age import AgentAgeInputs, aopt_streaming
from .channel import LinkParams

BITS_PER_KB = 8 * 1024
MAX_JOINT_POINTS = 20**5


class GridSizeError(ValueError):
    pass


class ProxyFitError(ValueError):
    pass


@dataclass(frozen=True)
class Bounds:
    b_min: float = 0.5e6
    b_max: float = 2e6
    d_min: float = 4 * BITS_PER_KB
    d_max: float = 40 * BITS_PER_KB
    delta_min: float = 0.05
    delta_max: float = 1.0
    delta_T_min: float = 0.1
    delta_T_max: float = 5.0

    def __post_init__(self):
        for lo, hi, name in (
            (self.b_min, self.b_max, "bandwidth"),
            (self.d_min, self.d_max, "packet size"),
            (self.delta_min, self.delta_max, "sampling interval"),
            (self.delta_T_min, self.delta_T_max, "calibration interval"),
        ):
            if not (0 < lo <= hi):
                raise ValueError(f"{name} bounds must satisfy 0 < min <= max")


@dataclass(frozen=True)
class GridSpec:
    """Points per axis. Bandwidth and packet axes are log-spaced."""

    n_bandwidth: int = 32
    n_packet: int = 32
    n_interval: int = 32

    def axes(self, bounds: Bounds, kind: str):
        B = np.geomspace(bounds.b_min, bounds.b_max, self.n_bandwidth)
        D = np.geomspace(bounds.d_min, bounds.d_max, self.n_packet)
        if kind == "calibration":
            T = np.linspace(bounds.delta_T_min, bounds.delta_T_max, self.n_interval)
        else:
            T = np.linspace(bounds.delta_min, bounds.delta_max, self.n_interval)
        return B, D, T


@dataclass(frozen=True)
class AccuracyProxy:
    """``gamma(D) = floor + (gamma_max - floor) * (1 - exp(-D / rate_scale_bits))``."""

    kind: str
    gamma_max: float
    rate_scale_bits: float
    floor: float = 0.0

    def __post_init__(self):
        if self.kind not in ("calibration", "streaming"):
            raise ValueError("kind must be 'calibration' or 'streaming'")
        if not self.rate_scale_bits > 0:
            raise ValueError("rate_scale_bits must be > 0")
        if self.gamma_max < self.floor:
            raise ValueError("gamma_max must be >= floor")

    def __call__(self, rate_bits):
        r = np.asarray(rate_bits, dtype=float)
        return self.floor + (self.gamma_max - self.floor) * -np.expm1(-r / self.rate_scale_bits)

    def deficiency(self, rate_bits):
        """Fraction of the attainable range still missing at ``rate_bits``."""
        return np.exp(-np.asarray(rate_bits, dtype=float) / self.rate_scale_bits)

    def inverse(self, gamma: float) -> float:
        frac = (gamma - self.floor) / (self.gamma_max - self.floor)
        if not 0 <= frac < 1:
            raise ValueError("accuracy outside the attainable range")
        return float(-self.rate_scale_bits * math.log1p(-frac))

    @property
    def default_threshold(self) -> float:
        return self.floor + 0.1 * (self.gamma_max - self.floor)


@dataclass(frozen=True)
class LagrangeWeights:
    lambda_ca: float = 0.0
    lambda_k: float = 0.0

    def __post_init__(self):
        if self.lambda_ca < 0 or self.lambda_k < 0:
            raise ValueError("Lagrange weights must be >= 0")


@dataclass
class Solution:
    chosen: dict
    objective_value: float
    accuracy_at_solution: float
    feasible: bool
    indices: tuple = ()
    surface: np.ndarray | None = field(default=None, repr=False)


def capacity_for_bandwidth(link: LinkParams, bandwidth_hz) -> np.ndarray:
    """Shannon capacity when ``link`` is re-allocated ``bandwidth_hz`` (vectorised)."""
    B = np.asarray(bandwidth_hz, dtype=float)
    snr = link.tx_power_w * link.channel_gain / (link.noise_psd_w_per_hz * B)
    return B * np.log2(1.0 + snr)


def _lex_argmin(obj: np.ndarray, feasible: np.ndarray, priority: Sequence[int]):
    """Index of the minimum, ties broken by smallest index along ``priority`` axes in order."""
    masked = np.where(feasible, obj, np.inf)
    moved = np.transpose(masked, priority)
    flat = int(np.argmin(moved))
    if not np.isfinite(moved.flat[flat]):
        return None
    idx_moved = np.unravel_index(flat, moved.shape)
    idx = [0] * obj.ndim
    for pos, ax in enumerate(priority):
        idx[ax] = idx_moved[pos]
    return tuple(int(i) for i in idx)


def p2_surface(link, bounds, proxy, weights, p_1, grid: GridSpec, threshold=None):
    """Objective and feasibility over the (B, D, delta_T) grid."""
    B, D, T = grid.axes(bounds, "calibration")
    gamma0 = proxy.default_threshold if threshold is None else threshold
    C = capacity_for_bandwidth(link, B)
    obj = p_1 * T[None, None, :] - weights.lambda_ca * (proxy(D)[None, :, None] - gamma0)
    obj = np.broadcast_to(obj, (len(B), len(D), len(T))).copy()
    tx = D[None, :] / C[:, None]
    lower = np.maximum(bounds.delta_T_min, tx)
    feasible = T[None, None, :] >= lower[:, :, None]
    return (B, D, T), obj, feasible


def p3_surface(link, bounds, proxy, weights, p_1, grid: GridSpec, threshold=None):
    """Objective and feasibility over the (B, D, Delta) grid."""
    B, D, T = grid.axes(bounds, "streaming")
    gamma0 = proxy.default_threshold if threshold is None else threshold
    C = capacity_for_bandwidth(link, B)
    tx = D[None, :] / C[:, None]
    d_total = tx + link.inference_delay_s
    obj = (
        (p_1 / 2.0 + 1.0) * d_total[:, :, None]
        + (1.0 - p_1) / 2.0 * T[None, None, :]
        - weights.lambda_k * (proxy(D)[None, :, None] - gamma0)
    )
    lower = np.maximum(bounds.delta_min, tx)
    feasible = T[None, None, :] >= lower[:, :, None]
    return (B, D, T), obj, feasible


def _solve(axes, obj, feasible, proxy, names, keep_surface):
    # ties: smaller interval, then smaller packet, then smaller bandwidth
    idx = _lex_argmin(obj, feasible, (2, 1, 0))
    surface = obj if keep_surface else None
    if idx is None:
        return Solution({}, math.inf, math.nan, False, (), surface)
    B, D, T = axes
    chosen = {names[0]: float(B[idx[0]]), names[1]: float(D[idx[1]]), names[2]: float(T[idx[2]])}
    return Solution(chosen, float(obj[idx]), float(proxy(D[idx[1]])), True, idx, surface)


def solve_p2(link: LinkParams, bounds: Bounds, proxy: AccuracyProxy, weights: LagrangeWeights,
             p_1: float, grid: GridSpec = GridSpec(), *, threshold=None, keep_surface=False) -> Solution:
    """Calibration-phase problem: bandwidth, calibration packet and calibration interval."""
    axes, obj, feasible = p2_surface(link, bounds, proxy, weights, p_1, grid, threshold)
    return _solve(axes, obj, feasible, proxy, ("bandwidth_hz", "packet_bits", "calibration_interval_s"), keep_surface)


def solve_p3(link: LinkParams, bounds: Bounds, proxy: AccuracyProxy, weights: LagrangeWeights,
             p_1: float, grid: GridSpec = GridSpec(), *, threshold=None, keep_surface=False) -> Solution:
    """Streaming-phase problem: bandwidth, feature packet and sampling interval."""
    axes, obj, feasible = p3_surface(link, bounds, proxy, weights, p_1, grid, threshold)
    return _solve(axes, obj, feasible, proxy, ("bandwidth_hz", "packet_bits", "sampling_interval_s"), keep_surface)


def _joint_arrays(link, bounds, proxies, weights, p_1, agents, grid, eps_g):
    ca_proxy, st_proxy = proxies
    _, k = aopt_streaming(agents, eps_g)
    g = 0 if k is None else agents[k].target_count
    ax2, obj2, feas2 = p2_surface(link, bounds, ca_proxy, weights, p_1, grid)
    ax3, obj3, feas3 = p3_surface(link, bounds, st_proxy, weights, p_1, grid)
    # cycle objective: g * [ (1/2) * calibration group + transmission group ]
    obj = g * (0.5 * obj2[:, :, :, None, None, None] + obj3[None, None, None, :, :, :])
    feasible = feas2[:, :, :, None, None, None] & feas3[None, None, None, :, :, :]
    return ax2, ax3, obj, feasible, g


def joint_objective(link, bounds, proxies, weights, p_1, g, point) -> float:
    """Full cycle objective at one point, expanded term by term.

    ``point`` holds ``(B_ca, D_ca, delta_T, B_st, D_st, Delta)``.
    """
    ca_proxy, st_proxy = proxies
    b_ca, d_ca, dT, b_st, d_st, delta = point
    c_st = float(capacity_for_bandwidth(link, b_st))
    d_total = d_st / c_st + link.inference_delay_s
    cal = p_1 / 2.0 * dT - 0.5 * weights.lambda_ca * (float(ca_proxy(d_ca)) - ca_proxy.default_threshold)
    trans = (p_1 / 2.0 + 1.0) * d_total + (1.0 - p_1) / 2.0 * delta
    inf = weights.lambda_k * (float(st_proxy(d_st)) - st_proxy.default_threshold)
    return g * (cal + trans - inf)


def solve_p1_joint(link: LinkParams, bounds: Bounds, proxies: tuple[AccuracyProxy, AccuracyProxy],
                   weights: LagrangeWeights, p_1: float, agents: Sequence[AgentAgeInputs],
                   grid: GridSpec = GridSpec(8, 8, 8), *, eps_g: int = 1) -> Solution:
    """Exhaustive minimisation of the cycle objective over all six variables jointly."""
    n_points = (grid.n_bandwidth * grid.n_packet * grid.n_interval) ** 2
    if n_points > MAX_JOINT_POINTS:
        raise GridSizeError(f"joint grid has {n_points} points, limit is {MAX_JOINT_POINTS}")
    ax2, ax3, obj, feasible, g = _joint_arrays(link, bounds, proxies, weights, p_1, agents, grid, eps_g)
    # ties: calibration interval, calibration packet, bandwidth, then the streaming triple
    idx = _lex_argmin(obj, feasible, (2, 1, 0, 5, 4, 3))
    if idx is None:
        return Solution({}, math.inf, math.nan, False)
    chosen = {
        "calibration_bandwidth_hz": float(ax2[0][idx[0]]),
        "calibration_packet_bits": float(ax2[1][idx[1]]),
        "calibration_interval_s": float(ax2[2][idx[2]]),
        "bandwidth_hz": float(ax3[0][idx[3]]),
        "packet_bits": float(ax3[1][idx[4]]),
        "sampling_interval_s": float(ax3[2][idx[5]]),
        "g_khat": g,
    }
    return Solution(chosen, float(obj[idx]), float(proxies[1](ax3[1][idx[4]])), True, idx)


def compose_p2_p3(link, bounds, proxies, weights, p_1, agents, grid: GridSpec = GridSpec(8, 8, 8), *, eps_g=1):
    """Solve P2 and P3 separately and return the joint objective at the combined point."""
    s2 = solve_p2(link, bounds, proxies[0], weights, p_1, grid)
    s3 = solve_p3(link, bounds, proxies[1], weights, p_1, grid)
    if not (s2.feasible and s3.feasible):
        return s2, s3, math.inf
    _, k = aopt_streaming(agents, eps_g)
    g = 0 if k is None else agents[k].target_count
    point = (
        s2.chosen["bandwidth_hz"], s2.chosen["packet_bits"], s2.chosen["calibration_interval_s"],
        s3.chosen["bandwidth_hz"], s3.chosen["packet_bits"], s3.chosen["sampling_interval_s"],
    )
    return s2, s3, joint_objective(link, bounds, proxies, weights, p_1, g, point)


def joint_objective_resolution(link, bounds, proxies, weights, p_1, agents, grid: GridSpec = GridSpec(8, 8, 8), *, eps_g=1) -> float:
    """Largest objective change between the joint optimum and any feasible one-step grid neighbour."""
    _, _, obj, feasible, _ = _joint_arrays(link, bounds, proxies, weights, p_1, agents, grid, eps_g)
    idx = _lex_argmin(obj, feasible, (2, 1, 0, 5, 4, 3))
    if idx is None:
        return math.inf
    best = obj[idx]
    res = 0.0
    for ax in range(obj.ndim):
        for step in (-1, 1):
            j = list(idx)
            j[ax] += step
            if 0 <= j[ax] < obj.shape[ax] and feasible[tuple(j)]:
                res = max(res, abs(obj[tuple(j)] - best))
    return float(res)


def fit_proxy(anchor_points, kind: str = "streaming", *, floor: float | None = None) -> AccuracyProxy:
    """Least-squares fit of a saturating proxy to ``(rate_bits, accuracy)`` anchors.

    With fewer than three anchors the floor is held fixed (``floor`` or 0)
    and only the ceiling and rate scale are fitted.
    """
    pts = np.asarray(anchor_points, dtype=float)
    if pts.ndim != 2 or len(pts) < 2:
        raise ProxyFitError("need at least two anchor points")
    x, y = pts[:, 0], pts[:, 1]
    if np.any(x <= 0):
        raise ProxyFitError("anchor rates must be positive")
    if np.ptp(x) == 0:
        raise ProxyFitError("anchor rates are all equal")
    fix_floor = floor is not None or len(pts) < 3
    f0 = 0.0 if floor is None else float(floor)
    xs = float(np.median(x))

    def model(p):
        gmax, log_s = p[0], p[1]
        fl = f0 if fix_floor else p[2]
        return fl + (gmax - fl) * -np.expm1(-x / (xs * np.exp(log_s)))

    best = None
    for log_s0 in (-2.0, -1.0, 0.0, 1.0):
        for lift in (1.01, 1.1, 1.5):
            p0 = [y.max() * lift, log_s0]
            if not fix_floor:
                p0.append(min(y.min() * 0.5, y.min() - 1e-3))
            r = least_squares(lambda p: model(p) - y, p0, method="lm" if len(pts) >= len(p0) else "trf",
                              xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=20000)
            if best is None or r.cost < best.cost:
                best = r
    p = best.x
    return AccuracyProxy(kind, float(p[0]), float(xs * np.exp(p[1])), f0 if fix_floor else float(p[2]))

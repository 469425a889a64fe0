"""Age of Information and Age of Perceived Targets.

Per-agent AoI under periodic sampling, the count-weighted AoPT for the
streaming and calibration phases, their cycle average, and the M/G/infinity
phase occupancies with the resulting average communication cost.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .scenario import ArrivalModel, offered_load


@dataclass(frozen=True)
class AgentAgeInputs:
    sampling_interval_s: float
    total_delay_s: float
    target_count: int

    def __post_init__(self):
        if not self.sampling_interval_s > 0:
            raise ValueError("sampling_interval_s must be > 0")
        if self.total_delay_s < 0:
            raise ValueError("total_delay_s must be >= 0")
        if self.target_count < 0:
            raise ValueError("target_count must be >= 0")


@dataclass(frozen=True)
class PhaseCosts:
    idle_bits: float = 0.0
    calibration_bits: float = 0.0
    streaming_bits: float = 0.0


@dataclass(frozen=True)
class CycleConfig:
    calibration_prob: float = 0.1
    calibration_interval_s: float = 1.0
    count_threshold: int = 1
    phase_costs: PhaseCosts = PhaseCosts()

    def __post_init__(self):
        if not 0.0 <= self.calibration_prob <= 1.0:
            raise ValueError("calibration_prob must lie in [0, 1]")
        if self.calibration_interval_s < 0:
            raise ValueError("calibration_interval_s must be >= 0")


@dataclass(frozen=True)
class AoptReport:
    aopt_streaming: float
    aopt_calibration: float
    aopt_cycle: float
    bottleneck_agent: int | None
    g_khat: int
    # regrouped cycle terms: g * p1/2 * dT and g * ((p1/2 + 1) d + (1 - p1)/2 * Delta)
    calibration_rate_term: float
    transmission_term: float

    @property
    def idle(self) -> bool:
        return self.bottleneck_agent is None


def aoi(agent: AgentAgeInputs) -> float:
    """Time-average age of a periodically sampled source."""
    return agent.sampling_interval_s / 2.0 + agent.total_delay_s


def _terms(agents: Sequence[AgentAgeInputs], eps_g: int) -> np.ndarray:
    return np.array(
        [a.target_count * aoi(a) if a.target_count >= eps_g else 0.0 for a in agents]
    )


def aopt_streaming(agents: Sequence[AgentAgeInputs], eps_g: int = 1) -> tuple[float, int | None]:
    """Worst-case count-weighted age and the agent attaining it.

    Agents seeing fewer than ``eps_g`` targets are filtered out. If every
    agent is filtered the value is 0 and the bottleneck is ``None``.
    Ties go to the lowest index.
    """
    if len(agents) == 0:
        raise ValueError("need at least one agent")
    eligible = [i for i, a in enumerate(agents) if a.target_count >= eps_g]
    if not eligible:
        return 0.0, None
    terms = _terms(agents, eps_g)
    best = max(eligible, key=lambda i: (terms[i], -i))
    return float(terms[best]), best


def aoi_calibration(d_total: float, delta_T: float) -> float:
    """Average age while calibrating: updates every ``delta_T + d`` and reset to ``d``."""
    return (delta_T + 3.0 * d_total) / 2.0


def aopt_calibration(agents: Sequence[AgentAgeInputs], eps_g: int, delta_T: float) -> float:
    _, k = aopt_streaming(agents, eps_g)
    if k is None:
        return 0.0
    a = agents[k]
    return 0.5 * a.target_count * (3.0 * a.total_delay_s + delta_T)


def aopt_cycle(agents: Sequence[AgentAgeInputs], cfg: CycleConfig) -> AoptReport:
    st, k = aopt_streaming(agents, cfg.count_threshold)
    ca = aopt_calibration(agents, cfg.count_threshold, cfg.calibration_interval_s)
    p1 = cfg.calibration_prob
    if k is None:
        return AoptReport(0.0, 0.0, 0.0, None, 0, 0.0, 0.0)
    a = agents[k]
    g = a.target_count
    rate_term = g * (p1 / 2.0) * cfg.calibration_interval_s
    trans_term = g * ((p1 / 2.0 + 1.0) * a.total_delay_s + (1.0 - p1) / 2.0 * a.sampling_interval_s)
    cycle = p1 * ca + (1.0 - p1) * st
    return AoptReport(st, ca, cycle, k, g, rate_term, trans_term)


def phase_occupancies(model: ArrivalModel, p_1: float) -> tuple[float, float, float]:
    """Steady-state probabilities of the idle, calibration and streaming phases."""
    if not 0.0 <= p_1 <= 1.0:
        raise ValueError("p_1 must lie in [0, 1]")
    idle = math.exp(-offered_load(model))
    pi1 = p_1
    pi2 = (1.0 - p_1) * (1.0 - idle)
    pi0 = (1.0 - p_1) * idle
    return pi0, pi1, pi2


def average_comm_cost(occupancies, costs: PhaseCosts) -> float:
    pi0, pi1, pi2 = occupancies
    return pi0 * costs.idle_bits + pi1 * costs.calibration_bits + pi2 * costs.streaming_bits


def simulate_average_age(period_s: float, delay_s: float, n_cycles: int, samples_per_cycle: int = 64) -> float:
    """Time-average age from an explicit update timeline.

    Updates are generated every ``period_s`` and delivered ``delay_s`` later.
    The age process ``t - (generation time of newest delivered update)`` is
    sampled at cell midpoints between the first and last delivery.
    """
    gen = np.arange(n_cycles + 1) * period_s
    recv = gen + delay_s
    t0, t1 = recv[0], recv[-1]
    n = n_cycles * samples_per_cycle
    dt = (t1 - t0) / n
    t = t0 + (np.arange(n) + 0.5) * dt
    latest = np.searchsorted(recv, t, side="right") - 1
    age = t - gen[latest]
    return float(age.mean())


def reports_to_csv(rows: Sequence[tuple[float, AoptReport]]) -> str:
    """CSV with columns ``t,aopt_st,aopt_ca,aopt_cy,k_hat,g_khat``; ``k_hat`` is empty when idle."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "aopt_st", "aopt_ca", "aopt_cy", "k_hat", "g_khat"])
    for t, r in rows:
        k = "" if r.bottleneck_agent is None else r.bottleneck_agent
        w.writerow([repr(float(t)), repr(r.aopt_streaming), repr(r.aopt_calibration), repr(r.aopt_cycle), k, r.g_khat])
    return buf.getvalue()

"""
性能指标与李雅普诺夫工具 / Metrics and Lyapunov Machinery

服务时延、用户满意度、时延亏欠队列、漂移界常数与漂移加代价奖励。
Service delay, user satisfaction, the delay deficit queue, the drift-bound
constant and the drift-plus-cost reward.
"""

import logging
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple

import numpy as np

from src.exceptions.simulation_exceptions import DriftPreconditionError, NoRequestsError
from src.models.core import GoP, Quality, TranscodeDecision, decision_satisfies
from src.models.queues import QueueParams

logger = logging.getLogger(__name__)

DRIFT_TOLERANCE = 1e-9


def service_delay(
    lengths: Sequence[float], rtt: float, l_max: Optional[Sequence[float]] = None
) -> float:
    """
    服务时延 D_t = (1/3)ΣL^cloud + I_t + (1/2)ΣL^edge / Service delay

    Args:
        lengths: 五个孪生队列长度（或 TwinQueueState）/ Five twin lengths (or a TwinQueueState)
        rtt: 往返时延 I_t / Round-trip time I_t
        l_max: 给出时先将长度截断到 L_max / When given, lengths are clamped to L_max first
    """
    values = np.asarray(getattr(lengths, "lengths", lengths), dtype=np.float64)
    if l_max is not None:
        values = np.minimum(values, np.asarray(l_max, dtype=np.float64))
    return float(values[:3].mean() + rtt + values[3:].mean())


def satisfaction(decisions: Sequence[Tuple[GoP, TranscodeDecision]]) -> float:
    """
    用户满意度 W_t / User satisfaction W_t

    每个GoP的每个质量等级最多计一次，W_t ∈ [0, 1]。
    Each quality class of each GoP counts at most once, so W_t ∈ [0, 1].

    Raises:
        NoRequestsError: 本时隙没有请求 / No requests in this slot
    """
    total = sum(gop.total_requests for gop, _ in decisions)
    if total == 0:
        raise NoRequestsError("本时隙没有请求 / no requests in this slot")
    served = sum(
        w
        for gop, x in decisions
        for w, quality in zip(gop.requests, Quality)
        if decision_satisfies(x, quality)
    )
    return served / total


@dataclass(frozen=True)
class DeficitQueue:
    """
    时延亏欠队列 / Delay deficit queue

    Attributes:
        z: 亏欠量（秒，≥0，初值0）/ Deficit in seconds (≥0, starts at 0)
        d_bar: 平均时延阈值 D̄ / Average delay threshold D̄
        v_weight: 满意度权重 V / Satisfaction weight V
    """

    z: float = 0.0
    d_bar: float = 1.8
    v_weight: float = 10.0

    def __post_init__(self):
        if self.z < 0 or self.v_weight < 0:
            raise ValueError(f"Z and V must be non-negative: z={self.z}, V={self.v_weight}")


def deficit_update(queue: DeficitQueue, delay: float) -> DeficitQueue:
    """Z ← max(0, Z + D_t − D̄)"""
    return replace(queue, z=max(0.0, queue.z + delay - queue.d_bar))


def max_delay(params: QueueParams, i_max: float) -> float:
    l_max = np.asarray(params.l_max_vector, dtype=np.float64)
    return float(l_max[:3].mean() + i_max + l_max[3:].mean())


def gamma_bound(params: QueueParams, i_max: float, d_bar: float) -> float:
    """Γ = ½((1/3)ΣL^max + I_max + (1/2)ΣL^max − D̄)²"""
    return 0.5 * (max_delay(params, i_max) - d_bar) ** 2


def delay_box(params: QueueParams, i_max: float, d_bar: float) -> Tuple[float, float]:
    """
    漂移界成立的时延区间 [2D̄ − D_max, D_max] / Delay box where the drift bound holds

    区间外 ½(D − D̄)² 可能超过 Γ。/ Outside it ½(D − D̄)² may exceed Γ.
    """
    d_max = max_delay(params, i_max)
    return 2.0 * d_bar - d_max, d_max


def reward(queue: DeficitQueue, w: float, delay: float) -> float:
    """r_t = V·W_t − Z_t·(D_t − D̄)"""
    return queue.v_weight * w - queue.z * (delay - queue.d_bar)


@dataclass(frozen=True)
class DriftAudit:
    """漂移界检查结果 / Drift-bound audit result"""

    holds: bool
    checked: int
    skipped: int
    worst_slack: float


def audit_drift_bound(
    trajectory: Sequence[Tuple[float, float]],
    gamma: float,
    d_bar: float,
    box: Optional[Tuple[float, float]] = None,
    strict: bool = True,
) -> DriftAudit:
    """
    逐时隙检查 ½Z²_{t+1} − ½Z²_t ≤ Z_t(D_t − D̄) + Γ
    Check ½Z²_{t+1} − ½Z²_t ≤ Z_t(D_t − D̄) + Γ at every slot

    Z_{t+1} 取轨迹中下一项；最后一项由亏欠更新得到。
    Z_{t+1} is the next entry's Z; for the last entry it follows from the update.

    Args:
        trajectory: (Z_t, D_t) 序列 / Sequence of (Z_t, D_t)
        gamma: 漂移界常数 Γ / Drift-bound constant Γ
        d_bar: 时延阈值 D̄ / Delay threshold D̄
        box: 时延区间（前提条件）/ Delay box, the precondition
        strict: 严格模式下区间外的时隙引发异常，否则跳过计数
            / Strict mode raises on out-of-box slots, otherwise they are skipped and counted

    Raises:
        DriftPreconditionError: 严格模式下时延越界 / Out-of-box delay in strict mode
    """
    checked = skipped = 0
    worst = float("inf")
    holds = True
    for index, (z, delay) in enumerate(trajectory):
        if box is not None and not box[0] - DRIFT_TOLERANCE <= delay <= box[1] + DRIFT_TOLERANCE:
            if strict:
                raise DriftPreconditionError(
                    f"时隙 {index} 的时延 {delay} 超出区间 {box} / delay {delay} at slot {index} outside box {box}"
                )
            skipped += 1
            continue
        if index + 1 < len(trajectory):
            z_next = trajectory[index + 1][0]
        else:
            z_next = max(0.0, z + delay - d_bar)
        drift = 0.5 * z_next**2 - 0.5 * z**2
        slack = z * (delay - d_bar) + gamma - drift
        worst = min(worst, slack)
        checked += 1
        if slack < -DRIFT_TOLERANCE:
            holds = False
    if skipped:
        logger.warning(
            f"漂移界检查跳过 {skipped} 个越界时隙 / Drift-bound check skipped {skipped} out-of-box slots"
        )
    return DriftAudit(holds=holds, checked=checked, skipped=skipped, worst_slack=worst)


def check_drift_bound(
    trajectory: Sequence[Tuple[float, float]],
    gamma: float,
    d_bar: float,
    box: Optional[Tuple[float, float]] = None,
    strict: bool = True,
) -> bool:
    """漂移界是否在整条轨迹上成立 / Whether the drift bound holds along the trajectory"""
    return audit_drift_bound(trajectory, gamma, d_bar, box, strict).holds


def delay_constraint_met(delays: Sequence[float], d_bar: float, slack: float = 0.0) -> bool:
    """长期平均时延约束 mean(D) ≤ D̄·(1 + slack) / Long-run average delay constraint"""
    if len(delays) == 0:
        return True
    return float(np.mean(delays)) <= d_bar * (1.0 + slack)

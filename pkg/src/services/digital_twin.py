"""
转码数字孪生（CTDT/ETDT）/ Transcoding Digital Twins (CTDT/ETDT)

由估计工作量与调度决策推演虚拟队列长度、路径比例与路径平均工作量，
并在偏差超过阈值时与物理队列同步。
Emulates virtual queue lengths, path ratios and path-conditional average
workloads from estimated workloads and decisions, and resynchronizes with the
physical queues whenever the bias exceeds a threshold.

路径记号 / Path notation:
    α¹: TQ1 积压中将送往 TQ4 的比例 / share of TQ1 backlog bound for TQ4
    α²: TQ1 积压中将送往 TQ5 的比例 / share of TQ1 backlog bound for TQ5
    α³: TQ2 积压中将送往 TQ5 的比例 / share of TQ2 backlog bound for TQ5
"""

import logging
from dataclasses import dataclass, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.models.core import ALL_QUEUES, CLOUD_QUEUES, GoP, QueueId, TranscodeDecision
from src.models.queues import QueueParams
from src.services.workload_estimator import build_feature_vector

Decisions = Sequence[Tuple[GoP, TranscodeDecision]]


@dataclass(frozen=True)
class TwinQueueState:
    """
    孪生队列状态（值对象）/ Twin queue state (value object)

    Attributes:
        lengths: 五个TQ的待处理秒数 / Pending seconds of the five TQs
        alpha: (α¹, α², α³)
        omega_1, omega_2: TQ1/TQ2 积压的平均工作量 / Average workload of TQ1/TQ2 backlog
        omega_14, omega_15, omega_25: 路径条件平均边缘工作量 / Path-conditional average edge workloads
        source_14, source_15, source_25: 同一路径积压在云端TQ上的平均工作量
            / Average cloud-TQ workload of the same path-tagged backlog
        bits_1, bits_2, bits_14, bits_15, bits_25: 对应积压的累计比特 / Accumulated backlog bits
        t_cap: 每时隙出队上限（秒）/ Per-slot dequeue cap in seconds
    """

    lengths: Tuple[float, ...] = (0.0, 0.0, 0.0, 0.0, 0.0)
    alpha: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    omega_1: float = 0.0
    omega_2: float = 0.0
    omega_14: float = 0.0
    omega_15: float = 0.0
    omega_25: float = 0.0
    source_14: float = 0.0
    source_15: float = 0.0
    source_25: float = 0.0
    bits_1: float = 0.0
    bits_2: float = 0.0
    bits_14: float = 0.0
    bits_15: float = 0.0
    bits_25: float = 0.0
    t_cap: float = 0.5

    def length(self, queue: int) -> float:
        return self.lengths[int(queue) - 1]

    def as_row(self) -> Dict[str, float]:
        """单行快照 / One-row snapshot for CSV output"""
        row = {f"L{i + 1}": v for i, v in enumerate(self.lengths)}
        row.update({f"alpha{i + 1}": v for i, v in enumerate(self.alpha)})
        row.update(
            omega_1=self.omega_1,
            omega_2=self.omega_2,
            omega_14=self.omega_14,
            omega_15=self.omega_15,
            omega_25=self.omega_25,
        )
        return row


@dataclass(frozen=True)
class GoPEstimate:
    """一个GoP在五个TQ上的估计工作量与入队秒数 / Estimated workload and enqueue seconds per TQ"""

    workloads: Tuple[float, ...]
    seconds: Tuple[float, ...]


def _blend(value: float, weight: float, add_value: float, add_weight: float) -> float:
    """加权混合；分母为零时保留旧值 / Weighted blend keeping the old value on a zero denominator"""
    denominator = weight + add_weight
    if denominator <= 0:
        return value
    return (value * weight + add_value) / denominator


class DigitalTwin:
    """
    云端与边缘转码数字孪生 / Cloud and edge transcoding digital twins

    所有 step 方法都是纯函数：输入状态，返回新状态。
    All step methods are pure: state in, new state out.
    """

    def __init__(self, params: QueueParams, estimator, t_cap: float):
        """
        Args:
            params: 队列参数 / Queue parameters
            estimator: 实现 estimate/estimate_batch 的工作量估计器 / Workload estimator
            t_cap: 每时隙出队上限（秒）/ Per-slot dequeue cap in seconds
        """
        if not t_cap > 0:
            raise ValueError(f"t_cap must be positive: {t_cap}")
        self.params = params
        self.estimator = estimator
        self.t_cap = float(t_cap)
        self.logger = logging.getLogger(__name__)

    def initial_state(self) -> TwinQueueState:
        return TwinQueueState(t_cap=self.t_cap)

    # 工作量估计 / workload estimation

    def estimate_gop(self, gop: GoP) -> GoPEstimate:
        vectors = [build_feature_vector(gop, self.params.spec(q)) for q in ALL_QUEUES]
        workloads = np.asarray(self.estimator.estimate_batch(vectors), dtype=np.float64)
        seconds = [
            float(workloads[q.index]) * gop.bit_rate / self.params.capacity(q) for q in ALL_QUEUES
        ]
        return GoPEstimate(tuple(float(w) for w in workloads), tuple(seconds))

    def enqueue_time(self, gop: GoP, queue: int) -> float:
        """Ω_q(V)·b / (f_q·κ_q)"""
        spec = self.params.spec(queue)
        return self.estimator.estimate(build_feature_vector(gop, spec)) * gop.bit_rate / spec.capacity

    def _estimates(
        self, decisions: Decisions, estimates: Optional[Mapping[int, GoPEstimate]]
    ) -> List[GoPEstimate]:
        if estimates is None:
            return [self.estimate_gop(gop) for gop, _ in decisions]
        return [estimates[gop.gop_id] for gop, _ in decisions]

    # 队列动态 / queue dynamics

    def enqueue(
        self,
        state: TwinQueueState,
        decisions: Decisions,
        estimates: Optional[Mapping[int, GoPEstimate]] = None,
    ) -> TwinQueueState:
        """
        仅入队（不出队）/ Enqueue only, without draining

        更新云端长度、α 与全部平均工作量；逐个GoP调用与整体调用结果一致。
        Updates cloud lengths, α and all average workloads; applying GoPs one
        by one yields the same state as one batched call.
        """
        if not decisions:
            return state
        per_gop = self._estimates(decisions, estimates)

        add = np.zeros(3)
        path_14 = path_15 = path_25 = 0.0
        bits = {"1": 0.0, "2": 0.0, "14": 0.0, "15": 0.0, "25": 0.0}
        weighted = {"1": 0.0, "2": 0.0, "14": 0.0, "15": 0.0, "25": 0.0}
        source = {"14": 0.0, "15": 0.0, "25": 0.0}

        for (gop, x), est in zip(decisions, per_gop):
            b = gop.bit_rate
            for q in CLOUD_QUEUES:
                if x.uses(q):
                    add[q - 1] += est.seconds[q - 1]
            if x.uses(1):
                bits["1"] += b
                weighted["1"] += est.workloads[0] * b
            if x.uses(2):
                bits["2"] += b
                weighted["2"] += est.workloads[1] * b
            if x.edge_source(4) == 1:
                path_14 += est.seconds[0]
                bits["14"] += b
                weighted["14"] += est.workloads[3] * b
                source["14"] += est.workloads[0] * b
            source_5 = x.edge_source(5)
            if source_5 == 1:
                path_15 += est.seconds[0]
                bits["15"] += b
                weighted["15"] += est.workloads[4] * b
                source["15"] += est.workloads[0] * b
            elif source_5 == 2:
                path_25 += est.seconds[1]
                bits["25"] += b
                weighted["25"] += est.workloads[4] * b
                source["25"] += est.workloads[1] * b

        l1, l2 = state.lengths[0], state.lengths[1]
        a1, a2, a3 = state.alpha
        alpha = (
            _blend(a1, l1, path_14, add[0]),
            _blend(a2, l1, path_15, add[0]),
            _blend(a3, l2, path_25, add[1]),
        )
        lengths = tuple(
            state.lengths[i] + add[i] if i < 3 else state.lengths[i] for i in range(5)
        )
        return replace(
            state,
            lengths=lengths,
            alpha=alpha,
            omega_1=_blend(state.omega_1, state.bits_1, weighted["1"], bits["1"]),
            omega_2=_blend(state.omega_2, state.bits_2, weighted["2"], bits["2"]),
            omega_14=_blend(state.omega_14, state.bits_14, weighted["14"], bits["14"]),
            omega_15=_blend(state.omega_15, state.bits_15, weighted["15"], bits["15"]),
            omega_25=_blend(state.omega_25, state.bits_25, weighted["25"], bits["25"]),
            source_14=_blend(state.source_14, state.bits_14, source["14"], bits["14"]),
            source_15=_blend(state.source_15, state.bits_15, source["15"], bits["15"]),
            source_25=_blend(state.source_25, state.bits_25, source["25"], bits["25"]),
            bits_1=state.bits_1 + bits["1"],
            bits_2=state.bits_2 + bits["2"],
            bits_14=state.bits_14 + bits["14"],
            bits_15=state.bits_15 + bits["15"],
            bits_25=state.bits_25 + bits["25"],
        )

    def _drain_cloud(self, state: TwinQueueState, d: float) -> TwinQueueState:
        # 比特累计按出队比例 min{L, T}/L 衰减 / bit accumulators decay by min{L, T}/L
        def remaining(length: float) -> float:
            if length <= 0:
                return 0.0
            return 1.0 - min(length, state.t_cap) / length

        keep_1 = remaining(state.lengths[0])
        keep_2 = remaining(state.lengths[1])
        lengths = tuple(
            max(0.0, state.lengths[i] - d) if i < 3 else state.lengths[i] for i in range(5)
        )
        return replace(
            state,
            lengths=lengths,
            bits_1=state.bits_1 * keep_1,
            bits_2=state.bits_2 * keep_2,
            bits_14=state.bits_14 * keep_1,
            bits_15=state.bits_15 * keep_1,
            bits_25=state.bits_25 * keep_2,
        )

    def step_cloud(
        self,
        state: TwinQueueState,
        decisions: Decisions,
        d: float,
        estimates: Optional[Mapping[int, GoPEstimate]] = None,
    ) -> TwinQueueState:
        """
        云端队列推进一个时隙 / Advance the cloud twin by one slot

        L^i ← [L^i + Σ x^i Ω_i(V) b/(f_i κ_i) − d]⁺, i ∈ {1, 2, 3}

        Args:
            state: 当前状态 / Current state
            decisions: (GoP, 决策) 列表 / (GoP, decision) pairs
            d: 时隙长度（秒，可为0）/ Slot length in seconds (0 allowed)
            estimates: 预先计算的估计（按gop_id）/ Precomputed estimates by gop_id
        """
        if d < 0:
            raise ValueError(f"slot length must be non-negative: {d}")
        return self._drain_cloud(self.enqueue(state, decisions, estimates), d)

    def step_edge(self, state: TwinQueueState, d: float) -> TwinQueueState:
        """
        边缘队列推进一个时隙 / Advance the edge twin by one slot

        TQ4 流入 α¹·min{L¹,T}·Ω̄^{1→4}·f₁κ₁/(Ω̄_src·f₄κ₄)，
        TQ5 流入为来自 TQ1 与 TQ2 的两项之和。Ω̄_src 为同一路径积压在云端TQ上的
        平均工作量，尚无路径积压时回退为 Ω̄¹/Ω̄²；分母未定义时该项流入为0。
        TQ4 inflow is α¹·min{L¹,T}·Ω̄^{1→4}·f₁κ₁/(Ω̄_src·f₄κ₄); TQ5 inflow sums
        the TQ1 and TQ2 terms. Ω̄_src is the cloud-TQ workload averaged over the
        same path-tagged backlog, falling back to Ω̄¹/Ω̄² before any such
        backlog exists. A term with an undefined denominator contributes nothing.
        """
        if d < 0:
            raise ValueError(f"slot length must be non-negative: {d}")
        cap = [self.params.capacity(q) for q in ALL_QUEUES]
        l1, l2 = state.lengths[0], state.lengths[1]
        a1, a2, a3 = state.alpha
        drained_1 = min(l1, state.t_cap)
        drained_2 = min(l2, state.t_cap)

        def term(alpha: float, drained: float, omega: float, source: float,
                 fallback: float, cap_from: float, cap_to: float) -> float:
            denominator = source if source > 0 else fallback
            if denominator <= 0:
                return 0.0
            return alpha * drained * omega * cap_from / (denominator * cap_to)

        inflow_4 = term(a1, drained_1, state.omega_14, state.source_14, state.omega_1, cap[0], cap[3])
        inflow_5 = term(a2, drained_1, state.omega_15, state.source_15, state.omega_1, cap[0], cap[4])
        inflow_5 += term(a3, drained_2, state.omega_25, state.source_25, state.omega_2, cap[1], cap[4])

        lengths = list(state.lengths)
        lengths[3] = max(0.0, lengths[3] + inflow_4 - d)
        lengths[4] = max(0.0, lengths[4] + inflow_5 - d)
        return replace(state, lengths=tuple(lengths))

    def step(
        self,
        state: TwinQueueState,
        decisions: Decisions,
        d: float,
        estimates: Optional[Mapping[int, GoPEstimate]] = None,
    ) -> TwinQueueState:
        """
        完整时隙：入队后由同一中间状态推进边缘与云端
        Full slot: enqueue, then advance edge and cloud from that same state
        """
        mid = self.enqueue(state, decisions, estimates)
        edge = self.step_edge(mid, d)
        cloud = self._drain_cloud(mid, d)
        return replace(cloud, lengths=cloud.lengths[:3] + edge.lengths[3:])

    @staticmethod
    def sync(
        state: TwinQueueState, plant_lengths: Sequence[float], threshold: float
    ) -> Tuple[TwinQueueState, List[QueueId]]:
        """
        与物理队列同步 / Synchronize with the physical queues

        Args:
            state: 孪生状态 / Twin state
            plant_lengths: 物理队列长度（TQ1..TQ5）/ Physical queue lengths (TQ1..TQ5)
            threshold: 同步阈值（秒，>0，可为inf）/ Sync threshold in seconds (>0, inf allowed)

        Returns:
            (新状态, 被同步的队列) / (new state, synced queues)
        """
        if not threshold > 0:
            raise ValueError(f"sync threshold must be positive: {threshold}")
        lengths = list(state.lengths)
        synced = []
        for q in ALL_QUEUES:
            if abs(lengths[q.index] - plant_lengths[q.index]) > threshold:
                lengths[q.index] = float(plant_lengths[q.index])
                synced.append(q)
        if not synced:
            return state, synced
        return replace(state, lengths=tuple(lengths)), synced

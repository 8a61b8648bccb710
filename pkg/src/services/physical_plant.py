"""
物理转码系统仿真 / Physical Transcoding Plant Simulation

以真实（带噪声）工作量推进实际云端/边缘队列，生成GoP到达与用户请求，
并模拟云边往返时延。
Advances the actual cloud/edge queues with true (noisy) workloads, generates
GoP arrivals with user requests and models the cloud-edge round-trip time.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from src.models.core import CLOUD_QUEUES, EDGE_QUEUES, GoP, Rng, TranscodeDecision
from src.models.queues import QueueParams
from src.processors.frame_features import SynthProfile, synth_gop
from src.services.digital_twin import GoPEstimate
from src.services.workload_estimator import (
    TrainingRecord,
    build_feature_vector,
    ground_truth_workload,
)

GOP_ID_STRIDE = 10000
EDGE_DISPATCH_MODES = ("fluid", "gop")


@dataclass(frozen=True)
class Job:
    """
    队列中的一个GoP转码任务 / One GoP transcoding job in a queue

    dispatch 列出完成后要送往的边缘队列及其真实工作秒数。
    dispatch lists the edge queues to feed on completion with their true seconds.
    """

    gop_id: int
    remaining: float
    dispatch: Tuple[Tuple[int, float], ...] = ()


@dataclass(frozen=True)
class EdgeDelivery:
    arrive_slot: int
    queue: int
    job: Job


@dataclass(frozen=True)
class PlantState:
    """
    物理队列状态 / Physical queue state

    Attributes:
        t: 当前时隙 / Current slot
        queues: 每个TQ的FIFO任务 / FIFO jobs per TQ
        in_transit: 正在云边传输的GoP / GoPs in flight from cloud to edge
        rtt: 本时隙往返时延 I_t / Round-trip time of the current slot
        enqueued_total: 各队列累计入队秒数 / Work ever enqueued per queue
        completed: 上一次出队完成的GoP数 / GoPs completed by the last drain
    """

    t: int = 0
    queues: Tuple[Tuple[Job, ...], ...] = ((), (), (), (), ())
    in_transit: Tuple[EdgeDelivery, ...] = ()
    rtt: float = 0.0
    enqueued_total: Tuple[float, ...] = (0.0, 0.0, 0.0, 0.0, 0.0)
    completed: int = 0

    @property
    def lengths(self) -> Tuple[float, ...]:
        return tuple(float(sum(job.remaining for job in queue)) for queue in self.queues)

    def length(self, queue: int) -> float:
        return self.lengths[int(queue) - 1]


@dataclass(frozen=True)
class Surge:
    """高质量请求突增 / High-quality request surge"""

    slot: int
    duration: int = 1
    high_mix: float = 0.8

    def active(self, t: int) -> bool:
        return self.slot <= t < self.slot + self.duration

    @property
    def mix(self) -> Tuple[float, float, float]:
        rest = (1.0 - self.high_mix) / 2.0
        return (self.high_mix, rest, rest)


@dataclass(frozen=True)
class ArrivalConfig:
    """到达过程配置 / Arrival process configuration"""

    gops_per_slot: float = 3.0
    poisson: bool = True
    bit_rate_range: Tuple[float, float] = (1.5e6, 3.0e6)
    mean_requests: float = 4.0
    request_mix: Tuple[float, float, float] = (0.2, 0.4, 0.4)
    surges: Tuple[Surge, ...] = ()
    profiles: Tuple[Tuple[float, float], ...] = ((0.2, 0.2), (0.5, 0.5), (0.8, 0.3), (0.4, 0.9))
    resolutions: Tuple[Tuple[int, int], ...] = ((1280, 720), (1920, 1080))
    frames_per_gop: int = 16
    analysis_size: Tuple[int, int] = (64, 36)

    def __post_init__(self):
        if self.gops_per_slot < 0 or self.mean_requests < 0:
            raise ValueError("arrival rates must be non-negative")
        if abs(sum(self.request_mix) - 1.0) > 1e-9 or any(p < 0 for p in self.request_mix):
            raise ValueError(f"request mix must be a distribution: {self.request_mix}")


class ArrivalProcess:
    """
    GoP到达与请求生成器 / GoP arrival and request generator

    内容特征来自合成GoP库（按缩小的分析尺寸合成）。
    Content features come from a library of synthetic GoPs rendered at a
    downscaled analysis size.
    """

    def __init__(self, cfg: ArrivalConfig, library_rng: Rng):
        self.cfg = cfg
        self.logger = logging.getLogger(__name__)
        self.library = self._build_library(library_rng)
        self.logger.info(
            f"内容库已生成: {len(self.library)} 个GoP模板 / Content library built: {len(self.library)} GoP templates"
        )

    def _build_library(self, rng: Rng) -> List[GoP]:
        width, height = self.cfg.analysis_size
        library = []
        for index, ((texture, motion), (res_w, res_h)) in enumerate(
            (p, r) for p in self.cfg.profiles for r in self.cfg.resolutions
        ):
            profile = SynthProfile(
                width=res_w,
                height=res_h,
                num_frames=self.cfg.frames_per_gop,
                texture=texture,
                motion=motion,
                bit_rate_range=self.cfg.bit_rate_range,
                analysis_width=width,
                analysis_height=height,
            )
            _, gop = synth_gop(rng.child(index), profile, gop_id=index)
            library.append(gop)
        return library

    def mix_at(self, t: int) -> Tuple[float, float, float]:
        for surge in self.cfg.surges:
            if surge.active(t):
                return surge.mix
        return self.cfg.request_mix

    def arrivals(self, rng: Rng, t: int) -> List[GoP]:
        """
        生成时隙 t 的到达GoP / Generate the GoPs arriving in slot t

        Args:
            rng: 到达随机流 / Arrival random stream
            t: 时隙编号 / Slot index

        Returns:
            GoP列表，gop_id = t·10000 + k / GoPs with gop_id = t·10000 + k
        """
        gen = rng.generator
        cfg = self.cfg
        count = int(gen.poisson(cfg.gops_per_slot)) if cfg.poisson else int(round(cfg.gops_per_slot))
        mix = self.mix_at(t)
        lo, hi = cfg.bit_rate_range
        gops = []
        for k in range(count):
            content = self.library[int(gen.integers(len(self.library)))]
            bit_rate = float(gen.uniform(lo, hi)) if hi > lo else float(lo)
            total = 1 + int(gen.poisson(cfg.mean_requests))
            requests = tuple(int(w) for w in gen.multinomial(total, mix))
            gops.append(replace(content, gop_id=t * GOP_ID_STRIDE + k, bit_rate=bit_rate, requests=requests))
        return gops


class PhysicalPlant:
    """
    物理转码队列 / Physical transcoding queues

    edge_dispatch 取 "fluid"（按比例流入边缘）或 "gop"（整个GoP经RTT后到达）。
    edge_dispatch is "fluid" (served share flows to the edge each slot) or
    "gop" (whole GoPs reach the edge after the RTT).
    """

    def __init__(
        self,
        params: QueueParams,
        i_max: float = 0.5,
        noise: float = 0.05,
        record_threshold: float = 0.05,
        edge_dispatch: str = "fluid",
    ):
        if not i_max > 0:
            raise ValueError(f"I_max must be positive: {i_max}")
        if edge_dispatch not in EDGE_DISPATCH_MODES:
            raise ValueError(f"edge_dispatch must be one of {EDGE_DISPATCH_MODES}: {edge_dispatch}")
        self.edge_dispatch = edge_dispatch
        self.params = params
        self.i_max = float(i_max)
        self.noise = float(noise)
        self.record_threshold = float(record_threshold)
        self.logger = logging.getLogger(__name__)

    def initial_state(self) -> PlantState:
        return PlantState(rtt=self.i_max)

    def begin_slot(self, state: PlantState, rng: Rng) -> PlantState:
        """抽取本时隙RTT，I_t ∈ (0, I_max] / Draw this slot's RTT in (0, I_max]"""
        rtt = self.i_max * (1.0 - float(rng.generator.random()))
        return replace(state, rtt=rtt)

    def true_seconds(self, gop: GoP, queue: int, rng: Optional[Rng], noise: float) -> Tuple[float, float]:
        """(真实工作量, 真实入队秒数) / (true workload, true enqueue seconds)"""
        spec = self.params.spec(queue)
        omega = ground_truth_workload(build_feature_vector(gop, spec), rng, noise)
        return omega, omega * gop.bit_rate / spec.capacity

    def apply_decisions(
        self,
        state: PlantState,
        decisions: Sequence[Tuple[GoP, TranscodeDecision]],
        rng: Optional[Rng],
        noise: Optional[float] = None,
        estimates: Optional[Mapping[int, GoPEstimate]] = None,
    ) -> Tuple[PlantState, List[TrainingRecord]]:
        """
        按真实工作量执行调度决策 / Apply decisions with true workloads

        Args:
            state: 当前物理状态 / Current plant state
            decisions: (GoP, 决策) 列表 / (GoP, decision) pairs
            rng: 噪声随机流 / Noise stream
            noise: 对数正态噪声σ（默认取构造参数）/ Log-normal sigma (defaults to the plant's)
            estimates: 孪生估计，用于偏差记录 / Twin estimates used for the bias record rule

        Returns:
            (新状态, 新增训练记录) / (new state, new training records)
        """
        noise = self.noise if noise is None else noise
        queues = [list(q) for q in state.queues]
        enqueued = list(state.enqueued_total)
        records: List[TrainingRecord] = []

        for gop, x in decisions:
            if not x.is_feasible():
                raise ValueError(f"infeasible decision for GoP {gop.gop_id}: {x}")
            truth: Dict[int, Tuple[float, float]] = {
                int(q): self.true_seconds(gop, q, rng, noise) for q in x.queues()
            }
            for q in CLOUD_QUEUES:
                if not x.uses(q):
                    continue
                dispatch = tuple(
                    (e, truth[e][1]) for e in EDGE_QUEUES if x.edge_source(e) == q
                )
                queues[q - 1].append(Job(gop.gop_id, truth[q][1], dispatch))
                enqueued[q - 1] += truth[q][1]
            if estimates is not None and gop.gop_id in estimates:
                records.extend(self._bias_records(gop, truth, estimates[gop.gop_id]))

        return (
            replace(
                state,
                queues=tuple(tuple(q) for q in queues),
                enqueued_total=tuple(enqueued),
            ),
            records,
        )

    def _bias_records(
        self, gop: GoP, truth: Mapping[int, Tuple[float, float]], estimate: GoPEstimate
    ) -> List[TrainingRecord]:
        # 偏差达到阈值时记录实际数据 / record actual data once the bias reaches the threshold
        records = []
        for q, (actual, _) in sorted(truth.items()):
            bias = abs(actual - estimate.workloads[q - 1]) / actual
            if bias >= self.record_threshold:
                records.append(TrainingRecord(build_feature_vector(gop, self.params.spec(q)), actual))
        return records

    def drain(self, state: PlantState, d: float) -> PlantState:
        """
        各队列服务 d 秒工作 / Serve d seconds of work in every queue

        fluid 模式：云端TQ按比例服务全部积压，已完成部分的边缘工作在同一时隙流入边缘队列。
        gop 模式：云端FIFO出队，完成的GoP在 ceil(I_t/d) 个时隙后整体到达边缘。
        In fluid mode a cloud TQ serves its whole backlog proportionally and the
        edge work of the served share flows into the edge queues in the same
        slot. In gop mode cloud jobs leave FIFO and each finished GoP reaches
        the edge ceil(I_t/d) slots later.
        """
        if d < 0:
            raise ValueError(f"slot length must be non-negative: {d}")
        if d == 0:
            return state
        if self.edge_dispatch == "fluid":
            return self._drain_fluid(state, d)
        return self._drain_gop(state, d)

    def _drain_fluid(self, state: PlantState, d: float) -> PlantState:
        queues = [list(q) for q in state.queues]
        enqueued = list(state.enqueued_total)
        forwarded: Dict[int, Dict[int, float]] = {int(e): {} for e in EDGE_QUEUES}
        completed = 0

        for q in CLOUD_QUEUES:
            queue = queues[q - 1]
            total = sum(job.remaining for job in queue)
            if total <= 0:
                continue
            served = min(total, d)
            keep = 0.0 if served >= total - 1e-12 else 1.0 - served / total
            kept = []
            for job in queue:
                for edge, seconds in job.dispatch:
                    pieces = forwarded[int(edge)]
                    pieces[job.gop_id] = pieces.get(job.gop_id, 0.0) + seconds * (1.0 - keep)
                if keep == 0.0:
                    completed += 1
                else:
                    kept.append(
                        Job(
                            job.gop_id,
                            job.remaining * keep,
                            tuple((edge, seconds * keep) for edge, seconds in job.dispatch),
                        )
                    )
            queues[q - 1] = kept

        for edge, pieces in forwarded.items():
            queue = queues[edge - 1]
            position = {job.gop_id: i for i, job in enumerate(queue)}
            for gop_id, seconds in pieces.items():
                if seconds <= 0:
                    continue
                if gop_id in position:
                    i = position[gop_id]
                    queue[i] = replace(queue[i], remaining=queue[i].remaining + seconds)
                else:
                    position[gop_id] = len(queue)
                    queue.append(Job(gop_id, seconds))
                enqueued[edge - 1] += seconds

        for edge in EDGE_QUEUES:
            completed += len(_serve_fifo(queues[edge - 1], d))

        return replace(
            state,
            t=state.t + 1,
            queues=tuple(tuple(q) for q in queues),
            enqueued_total=tuple(enqueued),
            completed=completed,
        )

    def _drain_gop(self, state: PlantState, d: float) -> PlantState:
        queues = [list(q) for q in state.queues]
        enqueued = list(state.enqueued_total)
        pending = []
        for delivery in state.in_transit:
            if delivery.arrive_slot <= state.t:
                queues[delivery.queue - 1].append(delivery.job)
                enqueued[delivery.queue - 1] += delivery.job.remaining
            else:
                pending.append(delivery)

        delay_slots = max(1, math.ceil(state.rtt / d - 1e-12))
        completed = 0
        for queue in queues:
            for job in _serve_fifo(queue, d):
                completed += 1
                for edge, seconds in job.dispatch:
                    pending.append(EdgeDelivery(state.t + delay_slots, edge, Job(job.gop_id, seconds)))

        return replace(
            state,
            t=state.t + 1,
            queues=tuple(tuple(q) for q in queues),
            in_transit=tuple(pending),
            enqueued_total=tuple(enqueued),
            completed=completed,
        )


def _serve_fifo(queue: List[Job], budget: float) -> List[Job]:
    """原地FIFO服务 budget 秒，返回完成的任务 / Serve budget seconds FIFO in place, returning finished jobs"""
    finished = []
    while queue and budget > 0:
        job = queue[0]
        if job.remaining <= budget + 1e-12:
            budget -= job.remaining
            finished.append(queue.pop(0))
        else:
            queue[0] = replace(job, remaining=job.remaining - budget)
            budget = 0.0
    return finished

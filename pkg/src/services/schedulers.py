"""
调度器接口与基准调度器 / Scheduler Interface and Benchmark Schedulers

RR 按规范顺序循环分配非零可行决策；PF 按优先级贪心放置；UMMKP 把每个TQ
视为背包、按满意度效用/工作量贪心求解多选背包。
RR cycles through the nonzero feasible decisions; PF places GoPs greedily by
priority; UMMKP treats each TQ as a knapsack and greedily solves the
multiple-choice knapsack by satisfaction utility per workload.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from src.models.core import (
    NONZERO_DECISIONS,
    ZERO_DECISION,
    GoP,
    Quality,
    TranscodeDecision,
    decision_satisfies,
    satisfied_requests,
)
from src.services.digital_twin import GoPEstimate, TwinQueueState

SCHEDULER_NAMES: Tuple[str, ...] = ("rr", "pf", "ummkp", "ddqn", "dt-ddqn")


@dataclass(frozen=True)
class SchedulerInput:
    """
    调度器输入 / Scheduler input

    Attributes:
        slot: 时隙编号 / Slot index
        gops: 到达的GoP / Arrived GoPs
        twin_state: 孪生状态快照 / Twin state snapshot
        z: 亏欠队列长度 / Deficit queue length
        estimates: 每个GoP在五个TQ上的估计（按gop_id）/ Per-GoP estimates for all five TQs
        l_max: 各TQ最大长度 / Maximum length per TQ
    """

    slot: int
    gops: Sequence[GoP]
    twin_state: TwinQueueState
    z: float
    estimates: Dict[int, GoPEstimate]
    l_max: Tuple[float, ...] = (1.5, 1.5, 1.5, 1.5, 1.5)

    def __post_init__(self):
        missing = [g.gop_id for g in self.gops if g.gop_id not in self.estimates]
        if missing:
            raise ValueError(f"estimates missing for GoPs {missing}")


def added_seconds(x: TranscodeDecision, estimate: GoPEstimate) -> float:
    """决策增加的总队列秒数 / Total queue-seconds a decision adds"""
    return float(sum(estimate.seconds[q.index] for q in x.queues()))


def fits(x: TranscodeDecision, estimate: GoPEstimate, room: Sequence[float]) -> bool:
    return all(estimate.seconds[q.index] <= room[q.index] + 1e-12 for q in x.queues())


def largest_class(gop: GoP) -> Quality:
    """请求最多的质量等级，平局取更高质量 / Most requested quality, ties go to the higher one"""
    best = max(gop.requests)
    return next(q for w, q in zip(gop.requests, Quality) if w == best)


class Scheduler(ABC):
    """调度器基类 / Scheduler base class"""

    name: str = ""

    def __init__(self):
        self.logger = logging.getLogger(__name__)

    @abstractmethod
    def decide(self, inp: SchedulerInput) -> List[TranscodeDecision]:
        """
        为每个到达GoP给出一个可行决策 / One feasible decision per arrived GoP

        Returns:
            与 inp.gops 等长、顺序一致的决策列表 / Decisions aligned with inp.gops
        """

    def learn(self, transition) -> Optional[float]:
        return None

    def reset(self) -> None:
        """新回合开始时调用 / Called at the start of each episode"""


class RoundRobinScheduler(Scheduler):
    """轮询调度 / Round robin"""

    name = "rr"

    def __init__(self):
        super().__init__()
        self.cursor = 0

    def decide(self, inp: SchedulerInput) -> List[TranscodeDecision]:
        decisions = []
        for _ in inp.gops:
            decisions.append(NONZERO_DECISIONS[self.cursor % len(NONZERO_DECISIONS)])
            self.cursor += 1
        return decisions


class ProportionalFairScheduler(Scheduler):
    """
    按优先级顺序放置 / Priority-ordered placement

    优先级 = 总请求数 / 满足最大请求等级的最小增加秒数。
    priority = total requests / least added seconds among decisions serving
    the largest request class.
    """

    name = "pf"

    def decide(self, inp: SchedulerInput) -> List[TranscodeDecision]:
        ranked = []
        for position, gop in enumerate(inp.gops):
            estimate = inp.estimates[gop.gop_id]
            quality = largest_class(gop)
            candidates = sorted(
                (x for x in NONZERO_DECISIONS if decision_satisfies(x, quality)),
                key=lambda x: (added_seconds(x, estimate), x.to_int()),
            )
            cheapest = added_seconds(candidates[0], estimate)
            priority = gop.total_requests / cheapest if cheapest > 0 else 0.0
            ranked.append((-priority, gop.gop_id, position, candidates))

        room = [m - length for m, length in zip(inp.l_max, inp.twin_state.lengths)]
        decisions: List[TranscodeDecision] = [ZERO_DECISION] * len(inp.gops)
        for _, gop_id, position, candidates in sorted(ranked, key=lambda r: (r[0], r[1])):
            estimate = inp.estimates[gop_id]
            chosen = next((x for x in candidates if fits(x, estimate, room)), ZERO_DECISION)
            for q in chosen.queues():
                room[q.index] -= estimate.seconds[q.index]
            decisions[position] = chosen
        return decisions


class UmmkpScheduler(Scheduler):
    """
    基于满意度效用的多选多背包贪心 / Utility-based multiple-choice multiple-knapsack greedy

    背包容量为 L_max − L；候选得分 = 满足请求数 / 增加秒数。
    Knapsack capacities are L_max − L; a candidate scores satisfied requests
    per added second.
    """

    name = "ummkp"

    @staticmethod
    def _scored(gop: GoP, estimate: GoPEstimate) -> List[Tuple[float, TranscodeDecision]]:
        scored = []
        for x in NONZERO_DECISIONS:
            utility = satisfied_requests(gop, x)
            weight = added_seconds(x, estimate)
            if utility > 0 and weight > 0:
                scored.append((utility / weight, x))
        scored.sort(key=lambda item: (-item[0], item[1].to_int()))
        return scored

    def decide(self, inp: SchedulerInput) -> List[TranscodeDecision]:
        ranked = []
        for position, gop in enumerate(inp.gops):
            scored = self._scored(gop, inp.estimates[gop.gop_id])
            best = scored[0][0] if scored else 0.0
            ranked.append((-best, gop.gop_id, position, scored))

        room = [max(0.0, m - length) for m, length in zip(inp.l_max, inp.twin_state.lengths)]
        decisions: List[TranscodeDecision] = [ZERO_DECISION] * len(inp.gops)
        for _, gop_id, position, scored in sorted(ranked, key=lambda r: (r[0], r[1])):
            estimate = inp.estimates[gop_id]
            chosen = next((x for _, x in scored if fits(x, estimate, room)), ZERO_DECISION)
            for q in chosen.queues():
                room[q.index] -= estimate.seconds[q.index]
            decisions[position] = chosen
        return decisions

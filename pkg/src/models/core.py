"""
核心领域类型 / Core Domain Types

转码队列标识、GoP、转码决策、时隙时钟与确定性随机数流
Transcoding queue ids, GoPs, transcoding decisions, the slot clock and
deterministic random streams shared by every module.
"""

from dataclasses import dataclass, field
from enum import Enum, IntEnum
from functools import lru_cache
from typing import Iterator, List, Tuple

import numpy as np

from src.exceptions.simulation_exceptions import (
    InfeasibleDecisionError,
    InvalidGoPError,
)


class QueueId(IntEnum):
    """转码队列（TQ）标识 / Transcoding queue (TQ) identifier"""

    CLOUD_SLOW = 1
    CLOUD_MEDIUM = 2
    CLOUD_FAST = 3
    EDGE_MEDIUM = 4
    EDGE_FAST = 5

    @property
    def tier(self) -> str:
        return self.name

    @property
    def is_cloud(self) -> bool:
        return self.value in CLOUD_QUEUES

    @property
    def index(self) -> int:
        """零起始数组下标 / Zero-based array index"""
        return self.value - 1


# 云/边队列编号 / cloud and edge queue numbers
CLOUD_QUEUES: Tuple[int, ...] = (1, 2, 3)
EDGE_QUEUES: Tuple[int, ...] = (4, 5)
ALL_QUEUES: Tuple[QueueId, ...] = tuple(QueueId)


class Quality(Enum):
    """请求的视频质量等级 / Requested video quality level"""

    HIGH = 1
    MEDIUM = 2
    LOW = 3


@dataclass(frozen=True)
class GoP:
    """
    图像组（最小转码单元）/ Group of pictures, the minimal transcoding unit

    Attributes:
        gop_id: GoP编号 / GoP identifier
        bit_rate: 原始比特数 / Original bits of the GoP (b > 0)
        num_frames: 帧数 / Number of frames (>= 2)
        width: 宽度像素 / Width in pixels
        height: 高度像素 / Height in pixels
        si: 空间信息 / Spatial information
        ti: 时间信息 / Temporal information
        requests: 高/中/低质量请求数 / High/medium/low quality request counts
    """

    gop_id: int
    bit_rate: float
    num_frames: int
    width: int
    height: int
    si: float
    ti: float
    requests: Tuple[int, int, int] = (0, 0, 0)

    def __post_init__(self):
        if not self.bit_rate > 0:
            raise InvalidGoPError(
                f"比特率必须为正: {self.bit_rate} / bit rate must be positive: {self.bit_rate}"
            )
        if self.num_frames < 2:
            raise InvalidGoPError(
                f"帧数至少为2: {self.num_frames} / num_frames must be >= 2: {self.num_frames}"
            )
        if self.si < 0 or self.ti < 0:
            raise InvalidGoPError("SI/TI不能为负 / SI/TI must be non-negative")
        if len(self.requests) != 3 or any(w < 0 for w in self.requests):
            raise InvalidGoPError(
                f"请求数无效: {self.requests} / invalid request counts: {self.requests}"
            )

    @property
    def resolution(self) -> int:
        return self.width * self.height

    @property
    def total_requests(self) -> int:
        return int(sum(self.requests))


@dataclass(frozen=True)
class TranscodeDecision:
    """
    单个GoP的二进制转码位置向量 x¹..x⁵ / Binary transcoding vector x¹..x⁵ of one GoP

    bits[0] 对应 TQ1 / bits[0] belongs to TQ1.
    """

    bits: Tuple[int, int, int, int, int]

    def __post_init__(self):
        if len(self.bits) != 5 or any(b not in (0, 1) for b in self.bits):
            raise InfeasibleDecisionError(
                f"决策必须是5位二进制向量: {self.bits} / decision must be a 5-bit vector: {self.bits}"
            )

    @classmethod
    def from_int(cls, value: int) -> "TranscodeDecision":
        """x¹ 为最高位 / x¹ is the most significant bit"""
        if not 0 <= value < 32:
            raise InfeasibleDecisionError(f"value out of range: {value}")
        return cls(tuple((value >> (4 - i)) & 1 for i in range(5)))

    def to_int(self) -> int:
        value = 0
        for bit in self.bits:
            value = (value << 1) | bit
        return value

    def __getitem__(self, queue: int) -> int:
        return self.bits[int(queue) - 1]

    def uses(self, queue: int) -> bool:
        return self[queue] == 1

    def queues(self) -> List[QueueId]:
        return [q for q in ALL_QUEUES if self.uses(q)]

    @property
    def is_zero(self) -> bool:
        return not any(self.bits)

    def is_feasible(self) -> bool:
        x1, x2, x3, x4, x5 = self.bits
        return (
            x2 + x4 <= 1  # TQ2 and TQ4 exclusive
            and x3 + x5 <= 1  # TQ3 and TQ5 exclusive
            and x1 >= x4  # TQ4 needs TQ1
            and x1 + x2 >= x5  # TQ5 needs TQ1 or TQ2
        )

    def edge_source(self, edge_queue: int) -> int:
        """
        边缘队列的上游云队列 / Upstream cloud queue feeding an edge queue

        TQ4 总是来自 TQ1；TQ5 在 x²=1 时来自 TQ2，否则来自 TQ1。
        TQ4 is always fed by TQ1; TQ5 is fed by TQ2 when x²=1, else by TQ1.

        Returns:
            上游队列编号，未使用该边缘队列时返回0 / Upstream queue, 0 when unused
        """
        if not self.uses(edge_queue):
            return 0
        if int(edge_queue) == QueueId.EDGE_MEDIUM:
            return int(QueueId.CLOUD_SLOW)
        return int(QueueId.CLOUD_MEDIUM) if self.uses(2) else int(QueueId.CLOUD_SLOW)

    def __str__(self) -> str:
        return "".join(str(b) for b in self.bits)


ZERO_DECISION = TranscodeDecision((0, 0, 0, 0, 0))


@lru_cache(maxsize=None)
def _feasible_tuple() -> Tuple[TranscodeDecision, ...]:
    candidates = (TranscodeDecision.from_int(v) for v in range(32))
    return tuple(x for x in candidates if x.is_feasible())


def enumerate_feasible() -> List[TranscodeDecision]:
    """
    枚举所有可行转码决策 / Enumerate all feasible transcoding decisions

    按5位整数升序（x¹为最高位）排列，下标即强化学习动作编号。
    Ascending by 5-bit integer value (x¹ as MSB); the position is the RL action index.

    Returns:
        14个可行决策 / The 14 feasible decisions
    """
    return list(_feasible_tuple())


FEASIBLE_DECISIONS: Tuple[TranscodeDecision, ...] = _feasible_tuple()
NONZERO_DECISIONS: Tuple[TranscodeDecision, ...] = tuple(
    x for x in FEASIBLE_DECISIONS if not x.is_zero
)
NUM_ACTIONS = len(FEASIBLE_DECISIONS)


def action_index(decision: TranscodeDecision) -> int:
    """决策在规范顺序中的下标 / Index of a decision in canonical order"""
    try:
        return FEASIBLE_DECISIONS.index(decision)
    except ValueError:
        raise InfeasibleDecisionError(
            f"不可行决策: {decision} / infeasible decision: {decision}"
        )


def decision_satisfies(x: TranscodeDecision, quality: Quality) -> bool:
    """
    判断决策能否满足某一质量等级的请求 / Whether a decision serves a quality level

    Args:
        x: 可行决策 / Feasible decision
        quality: 质量等级 / Quality level

    Returns:
        是否满足 / Whether requests of that quality are served
    """
    x1, x2, x3, x4, x5 = x.bits
    if quality is Quality.HIGH:
        return x1 == 1
    if quality is Quality.MEDIUM:
        return x2 == 1 or (x1 == 1 and x4 == 1)
    return x3 == 1 or (x1 == 1 and x5 == 1) or (x2 == 1 and x5 == 1)


def satisfied_requests(gop: GoP, x: TranscodeDecision) -> int:
    """每个质量等级最多计一次 / Each quality class counted at most once"""
    return sum(
        w
        for w, quality in zip(gop.requests, Quality)
        if decision_satisfies(x, quality)
    )


@dataclass
class SlotClock:
    """调度时隙时钟 / Scheduling slot clock"""

    slot_length: float
    t: int = 0

    def __post_init__(self):
        if not self.slot_length > 0:
            raise ValueError(f"slot length must be positive: {self.slot_length}")

    def tick(self) -> int:
        self.t += 1
        return self.t

    @property
    def seconds(self) -> float:
        return self.t * self.slot_length


@dataclass
class Rng:
    """
    确定性随机数流 / Deterministic random stream

    相同 (seed, stream) 产生相同的抽样序列。
    Identical (seed, stream) pairs yield identical draw sequences.
    """

    seed: int
    stream: int = 0
    generator: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        sequence = np.random.SeedSequence(
            entropy=int(self.seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=(int(self.stream),)
        )
        self.generator = np.random.default_rng(sequence)

    def child(self, stream: int) -> "Rng":
        """派生独立子流 / Derive an independent sibling stream"""
        return Rng(self.seed, self.stream * 1_000_003 + int(stream) + 1)

    def streams(self, count: int) -> Iterator["Rng"]:
        for i in range(count):
            yield self.child(i)

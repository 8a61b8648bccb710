"""
转码队列参数 / Transcoding Queue Parameters

每个TQ的编码预设、处理器类型、计算能力 f (GHz)、计算密度 κ 与最大长度
Per-TQ encoding preset, processor kind, computing capability f (GHz),
computing density κ and maximum length.
"""

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Dict, Tuple

from src.models.core import ALL_QUEUES, QueueId


class EncodingPreset(IntEnum):
    SLOW = 0
    MEDIUM = 1
    FAST = 2


class Processor(IntEnum):
    CLOUD = 0
    EDGE = 1


@dataclass(frozen=True)
class QueueSpec:
    """
    单个转码队列的配置 / Configuration of one transcoding queue

    capacity = f·1e9·κ，单位 flops/s / capacity in flops per second.
    """

    f_ghz: float
    kappa: float
    l_max: float = 1.5
    preset: EncodingPreset = EncodingPreset.MEDIUM
    processor: Processor = Processor.CLOUD

    def __post_init__(self):
        if not (self.f_ghz > 0 and self.kappa > 0 and self.l_max > 0):
            raise ValueError(
                f"f, κ, L_max 必须为正 / f, kappa, l_max must be positive: {self}"
            )

    @property
    def capacity(self) -> float:
        return self.f_ghz * 1e9 * self.kappa


# 预设与处理器由队列编号决定 / preset and processor are fixed by the queue id
QUEUE_LAYOUT: Dict[QueueId, Tuple[EncodingPreset, Processor]] = {
    QueueId.CLOUD_SLOW: (EncodingPreset.SLOW, Processor.CLOUD),
    QueueId.CLOUD_MEDIUM: (EncodingPreset.MEDIUM, Processor.CLOUD),
    QueueId.CLOUD_FAST: (EncodingPreset.FAST, Processor.CLOUD),
    QueueId.EDGE_MEDIUM: (EncodingPreset.MEDIUM, Processor.EDGE),
    QueueId.EDGE_FAST: (EncodingPreset.FAST, Processor.EDGE),
}

DEFAULT_CAPABILITY: Dict[QueueId, Tuple[float, float]] = {
    QueueId.CLOUD_SLOW: (20.0, 5.0),
    QueueId.CLOUD_MEDIUM: (15.0, 5.0),
    QueueId.CLOUD_FAST: (10.0, 5.0),
    QueueId.EDGE_MEDIUM: (10.0, 4.0),
    QueueId.EDGE_FAST: (8.0, 4.0),
}


def make_queue_spec(queue: QueueId, f_ghz: float, kappa: float, l_max: float = 1.5) -> QueueSpec:
    preset, processor = QUEUE_LAYOUT[QueueId(queue)]
    return QueueSpec(f_ghz=f_ghz, kappa=kappa, l_max=l_max, preset=preset, processor=processor)


@dataclass(frozen=True)
class QueueParams:
    """五个TQ的参数集合 / Parameters of the five TQs"""

    specs: Tuple[QueueSpec, ...] = field(
        default_factory=lambda: tuple(
            make_queue_spec(q, *DEFAULT_CAPABILITY[q]) for q in ALL_QUEUES
        )
    )

    def __post_init__(self):
        if len(self.specs) != 5:
            raise ValueError(f"exactly five queue specs required, got {len(self.specs)}")

    def spec(self, queue: int) -> QueueSpec:
        return self.specs[int(queue) - 1]

    def capacity(self, queue: int) -> float:
        return self.spec(queue).capacity

    def l_max(self, queue: int) -> float:
        return self.spec(queue).l_max

    @property
    def l_max_vector(self) -> Tuple[float, ...]:
        return tuple(s.l_max for s in self.specs)

"""
时隙仿真循环 / Slot Simulation Loop

把物理系统、数字孪生、目标函数与调度器连接成逐时隙推进的环境，
并提供DT-DDQN训练回合。
Wires the plant, the digital twins, the objective and a scheduler into an
environment advanced slot by slot, and runs DT-DDQN training episodes.

每个时隙 / Each slot:
    1. 抽取RTT并生成到达 / draw the RTT and the arrivals
    2. 孪生估计工作量，调度器决策 / twins estimate workloads, the scheduler decides
    3. 物理系统按真实工作量入队，孪生按估计推进 / plant enqueues true work, twins advance on estimates
    4. 物理系统出队，偏差过大时同步孪生 / plant drains, twins resync on large bias
    5. 计算 D_t、W_t、r_t 并更新 Z / compute D_t, W_t, r_t and update Z
"""

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Dict, List, Optional, Tuple

import numpy as np

from src.exceptions.simulation_exceptions import InsufficientDataError, NoRequestsError
from src.models.core import GoP, Rng
from src.models.queues import QueueParams
from src.services.digital_twin import DigitalTwin, TwinQueueState
from src.services.dueling_dqn import DDQNScheduler, RLConfig, SlotFeedback, epsilon_at
from src.services.objective import (
    DeficitQueue,
    deficit_update,
    reward,
    satisfaction,
    service_delay,
)
from src.services.physical_plant import EDGE_DISPATCH_MODES, ArrivalProcess, PhysicalPlant, PlantState
from src.services.schedulers import Scheduler, SchedulerInput
from src.services.workload_estimator import (
    DigitalTwinEstimator,
    TrainCfg,
    TrainingRecord,
    WorkloadTrainer,
    split_by_processor,
)

# 随机流编号 / random stream ids
ARRIVAL_STREAM = 1
RTT_STREAM = 2
NOISE_STREAM = 3


@dataclass(frozen=True)
class SimulationConfig:
    """仿真配置 / Simulation configuration"""

    seed: int = 2024
    slot_length: float = 0.5
    slots: int = 100
    sync_threshold: float = 0.1
    t_cap: Optional[float] = None
    clamp_delay_lengths: bool = True
    record_threshold: float = 0.05
    refit_interval: int = 0
    refit_min_records: int = 200
    refit_max_records: int = 5000
    edge_dispatch: str = "fluid"

    def __post_init__(self):
        if not self.slot_length > 0:
            raise ValueError(f"slot length must be positive: {self.slot_length}")
        if self.slots < 0:
            raise ValueError(f"slots must be non-negative: {self.slots}")
        if self.refit_max_records < 1:
            raise ValueError(f"refit_max_records must be positive: {self.refit_max_records}")
        if self.edge_dispatch not in EDGE_DISPATCH_MODES:
            raise ValueError(f"edge_dispatch must be one of {EDGE_DISPATCH_MODES}: {self.edge_dispatch}")
        if not self.sync_threshold > 0:
            raise ValueError(f"sync threshold must be positive: {self.sync_threshold}")

    @property
    def effective_t_cap(self) -> float:
        return self.slot_length if self.t_cap is None else self.t_cap


@dataclass(frozen=True)
class SlotResult:
    """单个时隙的度量 / Metrics of one slot"""

    t: int
    delay: float
    satisfaction: float
    z: float
    reward: float
    lengths: Tuple[float, ...]
    rtt: float
    gops: int
    syncs: int
    requests: int = 0

    def as_row(self) -> Dict[str, float]:
        row = {"t": self.t, "D": self.delay, "W": self.satisfaction, "Z": self.z, "r": self.reward}
        row.update({f"L{i + 1}": v for i, v in enumerate(self.lengths)})
        row.update(I=self.rtt, gops=self.gops, syncs=self.syncs)
        return row


class TranscodingEnvironment:
    """
    云边协同转码仿真环境 / Cloud-edge collaborative transcoding environment

    到达来自随机到达过程或固定轨迹（按时隙的GoP列表）。
    Arrivals come from a random arrival process or a fixed trace (GoPs per slot).
    """

    def __init__(
        self,
        cfg: SimulationConfig,
        params: QueueParams,
        plant: PhysicalPlant,
        twin: DigitalTwin,
        deficit: DeficitQueue,
        arrivals: Optional[ArrivalProcess] = None,
        trace: Optional[Dict[int, List[GoP]]] = None,
        refit_cfg: Optional[TrainCfg] = None,
    ):
        if arrivals is None and trace is None:
            raise ValueError("either an arrival process or a trace is required")
        self.cfg = cfg
        self.params = params
        self.plant = plant
        self.twin = twin
        self.initial_deficit = deficit
        self.arrivals = arrivals
        self.trace = trace
        self.refit_cfg = refit_cfg
        self.logger = logging.getLogger(__name__)

        self.records: Deque[TrainingRecord] = deque(maxlen=cfg.refit_max_records)
        self.refits = 0
        self.sync_count = 0
        self.reset(cfg.seed)

    def reset(self, seed: int) -> None:
        """重置队列、亏欠队列与随机流 / Reset queues, the deficit queue and random streams"""
        self.seed = seed
        self.arrival_rng = Rng(seed, ARRIVAL_STREAM)
        self.rtt_rng = Rng(seed, RTT_STREAM)
        self.noise_rng = Rng(seed, NOISE_STREAM)
        self.plant_state: PlantState = self.plant.initial_state()
        self.twin_state: TwinQueueState = self.twin.initial_state()
        self.deficit = self.initial_deficit
        self.sync_count = 0
        self.t = 0

    def gops_at(self, t: int) -> List[GoP]:
        if self.trace is not None:
            return list(self.trace.get(t, []))
        return self.arrivals.arrivals(self.arrival_rng, t)

    def step(self, scheduler: Scheduler) -> SlotResult:
        """推进一个时隙 / Advance one slot"""
        d = self.cfg.slot_length
        l_max = self.params.l_max_vector
        self.plant_state = self.plant.begin_slot(self.plant_state, self.rtt_rng)
        rtt = self.plant_state.rtt

        gops = self.gops_at(self.t)
        estimates = {gop.gop_id: self.twin.estimate_gop(gop) for gop in gops}
        inp = SchedulerInput(
            slot=self.t,
            gops=gops,
            twin_state=self.twin_state,
            z=self.deficit.z,
            estimates=estimates,
            l_max=l_max,
        )
        decisions = scheduler.decide(inp)
        pairs = list(zip(gops, decisions))

        try:
            w = satisfaction(pairs)
        except NoRequestsError:
            w = 1.0

        self.plant_state, records = self.plant.apply_decisions(
            self.plant_state, pairs, self.noise_rng, estimates=estimates
        )
        if self.cfg.refit_interval > 0:
            self.records.extend(records)
        twin_next = self.twin.step(self.twin_state, pairs, d, estimates)
        self.plant_state = self.plant.drain(self.plant_state, d)
        twin_next, synced = self.twin.sync(
            twin_next, self.plant_state.lengths, self.cfg.sync_threshold
        )
        if synced:
            self.sync_count += len(synced)
            self.logger.debug(
                f"时隙 {self.t} 同步队列 {[int(q) for q in synced]} / Slot {self.t} synced queues {[int(q) for q in synced]}"
            )
        self.twin_state = twin_next

        delay = service_delay(
            twin_next.lengths, rtt, l_max if self.cfg.clamp_delay_lengths else None
        )
        z = self.deficit.z
        r = reward(self.deficit, w, delay)
        self.deficit = deficit_update(self.deficit, delay)

        result = SlotResult(
            t=self.t,
            delay=delay,
            satisfaction=w,
            z=z,
            reward=r,
            lengths=twin_next.lengths,
            rtt=rtt,
            gops=len(gops),
            syncs=len(synced),
            requests=sum(g.total_requests for g in gops),
        )
        self.t += 1
        if self.cfg.refit_interval and self.t % self.cfg.refit_interval == 0:
            self.refit()
        return result

    def refit(self) -> bool:
        """
        用累计记录周期性重训孪生模型 / Periodically refit the twin models on accumulated records

        Returns:
            是否至少重训了一个模型 / Whether at least one model was refit
        """
        estimator = self.twin.estimator
        if not isinstance(estimator, DigitalTwinEstimator) or self.refit_cfg is None:
            return False
        if len(self.records) < self.cfg.refit_min_records:
            self.logger.warning(
                f"记录不足，跳过重训: {len(self.records)} / Too few records, refit skipped: {len(self.records)}"
            )
            return False

        refit_any = False
        trainer = WorkloadTrainer(self.refit_cfg)
        for processor, subset in zip(estimator.models, split_by_processor(list(self.records))):
            try:
                estimator.models[processor] = trainer.fit(subset)
                refit_any = True
            except InsufficientDataError:
                continue
        if refit_any:
            self.refits += 1
            self.logger.info(
                f"第{self.refits}次重训完成，记录数 {len(self.records)} / Refit #{self.refits} done on {len(self.records)} records"
            )
        return refit_any

    def run(self, scheduler: Scheduler, slots: Optional[int] = None) -> List[SlotResult]:
        """运行若干时隙（不训练）/ Run a number of slots without training"""
        return [self.step(scheduler) for _ in range(self.cfg.slots if slots is None else slots)]


@dataclass(frozen=True)
class EpisodeStats:
    """训练回合统计 / Training episode statistics"""

    episode: int
    mean_w: float
    mean_d: float
    final_z: float
    mean_loss: float
    epsilon: float
    results: List[SlotResult] = field(default_factory=list, repr=False, compare=False)

    def as_row(self) -> Dict[str, float]:
        return {
            "episode": self.episode,
            "mean_W": self.mean_w,
            "mean_D": self.mean_d,
            "final_Z": self.final_z,
            "mean_loss": self.mean_loss,
            "epsilon": self.epsilon,
        }


def run_episode(
    env: TranscodingEnvironment,
    scheduler: DDQNScheduler,
    cfg: RLConfig,
    episode: int = 0,
    seed: Optional[int] = None,
    train: bool = True,
) -> EpisodeStats:
    """
    一个DT-DDQN回合：重置队列，逐时隙估计、决策、推进、计算奖励并训练
    One DT-DDQN episode: reset the queues, then per slot estimate, act, advance,
    reward and train

    Args:
        env: 仿真环境 / Environment
        scheduler: DDQN调度器 / DDQN scheduler
        cfg: 强化学习配置 / RL configuration
        episode: 回合编号（决定ε）/ Episode index, drives ε
        seed: 回合随机种子 / Episode seed (defaults to env seed + episode)
        train: 是否训练 / Whether to train

    Raises:
        NonfiniteLossError: 训练损失非有限 / Non-finite training loss
    """
    env.reset(env.cfg.seed + episode if seed is None else seed)
    scheduler.reset()
    scheduler.training = train
    scheduler.epsilon = epsilon_at(cfg, episode) if train else 0.0

    results, losses = [], []
    for step in range(cfg.steps):
        result = env.step(scheduler)
        results.append(result)
        loss = scheduler.learn(
            SlotFeedback(
                reward=result.reward,
                next_lengths=env.twin_state.lengths,
                next_z=env.deficit.z,
                done=step == cfg.steps - 1,
            )
        )
        if loss is not None:
            losses.append(loss)

    return EpisodeStats(
        episode=episode,
        mean_w=float(np.mean([r.satisfaction for r in results])) if results else 1.0,
        mean_d=float(np.mean([r.delay for r in results])) if results else 0.0,
        final_z=env.deficit.z,
        mean_loss=float(np.mean(losses)) if losses else float("nan"),
        epsilon=scheduler.epsilon,
        results=results,
    )


def train_agent(
    env: TranscodingEnvironment, scheduler: DDQNScheduler, cfg: RLConfig
) -> List[EpisodeStats]:
    """按配置训练若干回合 / Train for the configured number of episodes"""
    logger = logging.getLogger(__name__)
    history = []
    for episode in range(cfg.episodes):
        stats = run_episode(env, scheduler, cfg, episode)
        history.append(stats)
        logger.debug(
            f"回合 {episode}: W={stats.mean_w:.3f} D={stats.mean_d:.3f} ε={stats.epsilon:.3f} / "
            f"Episode {episode}: W={stats.mean_w:.3f} D={stats.mean_d:.3f} eps={stats.epsilon:.3f}"
        )
    scheduler.training = False
    if history:
        logger.info(
            f"{scheduler.name} 训练完成: 末回合 W={history[-1].mean_w:.3f} / "
            f"{scheduler.name} training finished: last-episode W={history[-1].mean_w:.3f}"
        )
    return history

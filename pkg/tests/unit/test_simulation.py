# 仿真循环测试模块 / Simulation Loop Test Module
"""
时隙环境、孪生保真度与DDQN训练回合测试 / Slot environment, twin fidelity and DDQN episode tests
"""

import math

import pytest

from src.models.core import Rng
from src.models.queues import QueueParams
from src.services.digital_twin import DigitalTwin
from src.services.dueling_dqn import DDQNScheduler, DuelingDQNAgent, RLConfig, StateEncoder
from src.services.objective import DeficitQueue
from src.services.physical_plant import ArrivalConfig, ArrivalProcess, PhysicalPlant
from src.services.schedulers import RoundRobinScheduler, UmmkpScheduler
from src.services.simulation import (
    SimulationConfig,
    TranscodingEnvironment,
    run_episode,
    train_agent,
)
from src.services.workload_estimator import (
    DigitalTwinEstimator,
    GroundTruthEstimator,
    MeanWorkloadEstimator,
    TrainCfg,
)


def build_env(cfg=None, estimator=None, noise=0.05, trace=None, refit_cfg=None, gops_per_slot=3.0):
    cfg = cfg or SimulationConfig(seed=3, slots=12)
    params = QueueParams()
    arrivals = None
    if trace is None:
        arrivals = ArrivalProcess(
            ArrivalConfig(gops_per_slot=gops_per_slot, analysis_size=(24, 16)), Rng(1, 10)
        )
    return TranscodingEnvironment(
        cfg,
        params,
        PhysicalPlant(params, i_max=0.5, noise=noise, edge_dispatch=cfg.edge_dispatch),
        DigitalTwin(params, estimator or GroundTruthEstimator(), t_cap=cfg.effective_t_cap),
        DeficitQueue(),
        arrivals=arrivals,
        trace=trace,
        refit_cfg=refit_cfg,
    )


class TestEnvironmentStep:
    """环境推进测试类 / Environment step test class"""

    def test_requires_arrivals_or_trace(self):
        params = QueueParams()
        with pytest.raises(ValueError):
            TranscodingEnvironment(
                SimulationConfig(),
                params,
                PhysicalPlant(params),
                DigitalTwin(params, GroundTruthEstimator(), t_cap=SimulationConfig().effective_t_cap),
                DeficitQueue(),
            )

    def test_slot_metrics_are_consistent(self):
        """测试时隙度量相互一致 / Test per-slot metrics agree with each other"""
        env = build_env()
        results = env.run(RoundRobinScheduler())

        assert [r.t for r in results] == list(range(12))
        assert results[0].z == 0.0
        for prev, nxt in zip(results, results[1:]):
            assert nxt.z == pytest.approx(max(0.0, prev.z + prev.delay - 1.8))
        for r in results:
            assert 0.0 <= r.satisfaction <= 1.0
            assert 0.0 < r.rtt <= 0.5
            assert r.reward == pytest.approx(10.0 * r.satisfaction - r.z * (r.delay - 1.8))
            assert all(length >= 0.0 for length in r.lengths)
        row = results[0].as_row()
        assert set(row) >= {"t", "D", "W", "Z", "r", "L1", "L5", "I", "gops", "syncs"}

    def test_same_seed_same_results(self):
        a = build_env().run(UmmkpScheduler())
        b = build_env().run(UmmkpScheduler())
        assert a == b

    def test_reset_replays_the_run(self):
        env = build_env()
        first = env.run(RoundRobinScheduler(), 5)
        env.reset(3)
        assert env.run(RoundRobinScheduler(), 5) == first

    def test_zero_slots_runs_nothing(self):
        env = build_env()
        assert env.run(RoundRobinScheduler(), 0) == []
        assert env.t == 0

    def test_invalid_simulation_config(self):
        with pytest.raises(ValueError):
            SimulationConfig(edge_dispatch="teleport")
        with pytest.raises(ValueError):
            SimulationConfig(refit_max_records=0)

    def test_empty_trace_counts_as_satisfied(self):
        """测试无请求的时隙 W=1 / Test a slot without requests gives W = 1"""
        env = build_env(trace={})
        result = env.step(RoundRobinScheduler())
        assert result.gops == 0
        assert result.satisfaction == 1.0

    def test_trace_drives_arrivals(self, make_gop):
        trace = {0: [make_gop(gop_id=1), make_gop(gop_id=2)], 2: [make_gop(gop_id=3)]}
        env = build_env(trace=trace)
        counts = [env.step(RoundRobinScheduler()).gops for _ in range(3)]
        assert counts == [2, 0, 1]


class TestTwinFidelity:
    """孪生保真度测试类 / Twin fidelity test class"""

    @pytest.mark.parametrize("scheduler_cls, slots", [(RoundRobinScheduler, 200), (UmmkpScheduler, 60)])
    def test_twins_track_noise_free_plant(self, scheduler_cls, slots):
        """测试真实工作量、无噪声、不同步时五个孪生队列与物理队列一致
        Test all five twin queues equal the plant with true workloads, no noise and no sync"""
        cfg = SimulationConfig(seed=5, slots=slots, sync_threshold=math.inf)
        env = build_env(cfg=cfg, noise=0.0, gops_per_slot=6.0)
        scheduler = scheduler_cls()
        edge_busy = 0
        for _ in range(cfg.slots):
            result = env.step(scheduler)
            assert result.syncs == 0
            for q in range(5):
                assert env.twin_state.lengths[q] == pytest.approx(env.plant_state.lengths[q], abs=1e-6)
            edge_busy += env.plant_state.lengths[3] + env.plant_state.lengths[4] > 0
        if scheduler_cls is RoundRobinScheduler:
            assert edge_busy > 0

    def test_sync_corrects_biased_twin(self):
        env = build_env(
            cfg=SimulationConfig(seed=5, slots=30, sync_threshold=0.05),
            estimator=MeanWorkloadEstimator(50.0),
        )
        results = env.run(RoundRobinScheduler())
        assert sum(r.syncs for r in results) > 0
        assert env.sync_count == sum(r.syncs for r in results)

    def test_reset_clears_sync_count(self):
        env = build_env(
            cfg=SimulationConfig(seed=5, slots=10, sync_threshold=0.05),
            estimator=MeanWorkloadEstimator(50.0),
        )
        env.run(RoundRobinScheduler())
        env.reset(6)
        assert env.sync_count == 0
        results = env.run(RoundRobinScheduler(), 5)
        assert env.sync_count == sum(r.syncs for r in results)


class TestRefit:
    """孪生重训测试类 / Twin refit test class"""

    def test_records_not_kept_without_refit(self):
        env = build_env(estimator=MeanWorkloadEstimator(50.0))
        env.run(RoundRobinScheduler())
        assert len(env.records) == 0

    def test_records_capped_when_refitting(self):
        """测试重训记录数有上限 / Test the refit record buffer is bounded"""
        cfg = SimulationConfig(seed=3, slots=12, refit_interval=1000, refit_max_records=5)
        env = build_env(cfg=cfg, estimator=MeanWorkloadEstimator(50.0))
        env.run(RoundRobinScheduler())
        assert len(env.records) == 5

    def test_refit_skipped_without_learned_models(self):
        env = build_env(refit_cfg=TrainCfg(hidden=4, epochs=5))
        assert env.refit() is False

    def test_refit_skipped_with_too_few_records(self, mocker):
        estimator = DigitalTwinEstimator(mocker.Mock(), mocker.Mock())
        env = build_env(
            cfg=SimulationConfig(seed=3, slots=5, refit_min_records=10_000),
            estimator=GroundTruthEstimator(),
            refit_cfg=TrainCfg(hidden=4, epochs=5),
        )
        env.twin.estimator = estimator
        assert env.refit() is False
        assert env.refits == 0


class TestTrainingEpisodes:
    """训练回合测试类 / Training episode test class"""

    def setup_method(self):
        """测试前设置 / Setup before test"""
        self.cfg = RLConfig(episodes=2, steps=6, hidden=(8, 8), batch_size=4, memory_capacity=100)
        self.env = build_env()
        agent = DuelingDQNAgent(self.cfg, Rng(2, 13))
        self.scheduler = DDQNScheduler("dt-ddqn", agent, self.env.twin, StateEncoder())

    def test_run_episode(self):
        stats = run_episode(self.env, self.scheduler, self.cfg, episode=0)
        assert len(stats.results) == 6
        assert stats.epsilon == 1.0
        assert len(self.scheduler.agent.memory) == sum(r.gops for r in stats.results)
        assert stats.mean_w == pytest.approx(sum(r.satisfaction for r in stats.results) / 6)
        assert set(stats.as_row()) == {"episode", "mean_W", "mean_D", "final_Z", "mean_loss", "epsilon"}

    def test_evaluation_episode_does_not_learn(self):
        stats = run_episode(self.env, self.scheduler, self.cfg, seed=99, train=False)
        assert stats.epsilon == 0.0
        assert len(self.scheduler.agent.memory) == 0
        assert math.isnan(stats.mean_loss)

    def test_train_agent(self):
        history = train_agent(self.env, self.scheduler, self.cfg)
        assert [s.episode for s in history] == [0, 1]
        assert self.scheduler.training is False
        assert history[1].epsilon < history[0].epsilon

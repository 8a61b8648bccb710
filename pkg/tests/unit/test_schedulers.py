# 调度器测试模块 / Scheduler Test Module
"""
RR、PF、UMMKP 基准调度器测试 / RR, PF and UMMKP benchmark scheduler tests
"""

import numpy as np
import pytest

from src.models.core import (
    NONZERO_DECISIONS,
    ZERO_DECISION,
    Quality,
    Rng,
    TranscodeDecision,
    decision_satisfies,
)
from src.models.queues import QueueParams
from src.services.digital_twin import DigitalTwin, TwinQueueState
from src.services.dueling_dqn import DDQNScheduler, DuelingDQNAgent, RLConfig, StateEncoder
from src.services.schedulers import (
    ProportionalFairScheduler,
    RoundRobinScheduler,
    SchedulerInput,
    UmmkpScheduler,
    added_seconds,
    largest_class,
)
from src.services.workload_estimator import GroundTruthEstimator


def build_input(twin, gops, lengths=(0.0,) * 5, slot=0):
    return SchedulerInput(
        slot=slot,
        gops=gops,
        twin_state=TwinQueueState(lengths=lengths),
        z=0.0,
        estimates={g.gop_id: twin.estimate_gop(g) for g in gops},
        l_max=(1.5,) * 5,
    )


class TestSchedulerInput:
    """调度器输入测试类 / Scheduler input test class"""

    def test_missing_estimates_rejected(self, make_gop):
        with pytest.raises(ValueError):
            SchedulerInput(0, [make_gop()], TwinQueueState(), 0.0, {})

    def test_largest_class_prefers_higher_quality_on_ties(self, make_gop):
        assert largest_class(make_gop(requests=(2, 2, 1))) is Quality.HIGH
        assert largest_class(make_gop(requests=(0, 1, 3))) is Quality.LOW


class TestRoundRobin:
    """轮询调度测试类 / Round robin test class"""

    def setup_method(self):
        """测试前设置 / Setup before test"""
        self.twin = DigitalTwin(QueueParams(), GroundTruthEstimator(), t_cap=0.5)

    def test_cycles_through_nonzero_decisions(self, make_gop):
        """测试按规范顺序循环 / Test cycling through the canonical order"""
        scheduler = RoundRobinScheduler()
        seen = []
        for slot in range(5):
            gops = [make_gop(gop_id=slot * 10 + k) for k in range(3)]
            seen.extend(scheduler.decide(build_input(self.twin, gops, slot=slot)))
        assert seen[:13] == list(NONZERO_DECISIONS)
        assert seen[13] == NONZERO_DECISIONS[0]
        assert all(x.is_feasible() and not x.is_zero for x in seen)


class TestProportionalFair:
    """PF调度测试类 / PF scheduler test class"""

    def setup_method(self):
        """测试前设置 / Setup before test"""
        self.twin = DigitalTwin(QueueParams(), GroundTruthEstimator(), t_cap=0.5)
        self.scheduler = ProportionalFairScheduler()

    def test_serves_largest_class_when_room(self, make_gop):
        gops = [make_gop(gop_id=1, requests=(0, 5, 1)), make_gop(gop_id=2, requests=(3, 0, 0))]
        decisions = self.scheduler.decide(build_input(self.twin, gops))
        assert decision_satisfies(decisions[0], Quality.MEDIUM)
        assert decision_satisfies(decisions[1], Quality.HIGH)

    def test_cheapest_satisfying_decision(self, make_gop):
        gop = make_gop(gop_id=1, requests=(0, 0, 4))
        inp = build_input(self.twin, [gop])
        chosen = self.scheduler.decide(inp)[0]
        candidates = [x for x in NONZERO_DECISIONS if decision_satisfies(x, Quality.LOW)]
        cheapest = min(added_seconds(x, inp.estimates[gop.gop_id]) for x in candidates)
        assert added_seconds(chosen, inp.estimates[gop.gop_id]) == pytest.approx(cheapest)

    def test_full_queues_give_zero_decision(self, make_gop):
        gops = [make_gop(gop_id=1)]
        decisions = self.scheduler.decide(build_input(self.twin, gops, lengths=(1.5,) * 5))
        assert decisions == [ZERO_DECISION]


class TestUmmkp:
    """UMMKP调度测试类 / UMMKP scheduler test class"""

    def setup_method(self):
        """测试前设置 / Setup before test"""
        self.twin = DigitalTwin(QueueParams(), GroundTruthEstimator(), t_cap=0.5)
        self.scheduler = UmmkpScheduler()

    def test_respects_capacity(self, make_gop):
        """测试放置不超过剩余容量 / Test placements stay within the remaining room"""
        gops = [make_gop(gop_id=k, bit_rate=3e6, requests=(1, 2, 3)) for k in range(12)]
        lengths = (1.2, 1.0, 1.3, 1.1, 1.0)
        inp = build_input(self.twin, gops, lengths=lengths)
        decisions = self.scheduler.decide(inp)

        used = [0.0] * 5
        for gop, x in zip(gops, decisions):
            assert x.is_feasible()
            for q in x.queues():
                used[q.index] += inp.estimates[gop.gop_id].seconds[q.index]
        for i in range(5):
            assert used[i] <= 1.5 - lengths[i] + 1e-9

    def test_prefers_higher_utility(self, make_gop):
        gop = make_gop(gop_id=1, requests=(0, 0, 6))
        decision = self.scheduler.decide(build_input(self.twin, [gop]))[0]
        assert decision_satisfies(decision, Quality.LOW)

    def test_no_requests_yields_zero(self, make_gop):
        gop = make_gop(gop_id=1, requests=(0, 0, 0))
        assert self.scheduler.decide(build_input(self.twin, [gop])) == [ZERO_DECISION]

    def test_order_preserved(self, make_gop):
        gops = [make_gop(gop_id=k, requests=(k, 1, 1)) for k in range(4)]
        decisions = self.scheduler.decide(build_input(self.twin, gops))
        assert len(decisions) == 4
        assert all(isinstance(x, TranscodeDecision) for x in decisions)


class TestRandomizedFeasibility:
    """随机输入下的可行性测试类 / Feasibility under random inputs test class"""

    def setup_method(self):
        """测试前设置 / Setup before test"""
        self.twin = DigitalTwin(QueueParams(), GroundTruthEstimator(), t_cap=0.5)
        learner = DDQNScheduler(
            "dt-ddqn",
            DuelingDQNAgent(RLConfig(hidden=(8, 8)), Rng(5, 13)),
            self.twin,
            StateEncoder(),
        )
        learner.training = True
        learner.epsilon = 0.5
        self.schedulers = [RoundRobinScheduler(), ProportionalFairScheduler(), UmmkpScheduler(), learner]

    def test_every_scheduler_returns_feasible_decisions(self, make_gop):
        """测试所有调度器在随机状态与到达下只给出可行决策
        Test every scheduler returns only feasible decisions on random states and arrivals"""
        gen = np.random.default_rng(23)
        for slot in range(60):
            gops = [
                make_gop(
                    gop_id=slot * 100 + k,
                    bit_rate=float(gen.uniform(1.5e6, 3e6)),
                    requests=tuple(int(r) for r in gen.integers(0, 5, size=3)),
                    si=float(gen.uniform(0, 80)),
                    ti=float(gen.uniform(0, 40)),
                )
                for k in range(int(gen.integers(0, 7)))
            ]
            lengths = tuple(float(v) for v in gen.uniform(0.0, 2.0, size=5))
            inp = build_input(self.twin, gops, lengths=lengths, slot=slot)
            for scheduler in self.schedulers:
                decisions = scheduler.decide(inp)
                assert len(decisions) == len(gops), scheduler.name
                assert all(x.is_feasible() for x in decisions), scheduler.name

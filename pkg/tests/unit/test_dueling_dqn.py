# 对决DQN测试模块 / Dueling DQN Test Module
"""
对决网络、经验池、目标值、训练步与DDQN调度器测试 / Dueling net, replay, target, train step and DDQN scheduler tests
"""

import numpy as np
import pytest
from scipy import stats

from src.exceptions.simulation_exceptions import CheckpointFormatError, NonfiniteLossError
from src.models.core import FEASIBLE_DECISIONS, NUM_ACTIONS, Rng
from src.models.queues import QueueParams
from src.services.digital_twin import DigitalTwin, TwinQueueState
from src.services.dueling_dqn import (
    STATE_DIM,
    DDQNScheduler,
    DuelingDQNAgent,
    DuelingNet,
    ReplayMemory,
    RLConfig,
    SlotFeedback,
    StateEncoder,
    Transition,
    act,
    epsilon_at,
    target_value,
    td_loss_and_gradient,
    train_step,
)
from src.services.optimizers import AdamOptimizer
from src.services.schedulers import SchedulerInput
from src.services.workload_estimator import GroundTruthEstimator


def random_transition(gen, done=False, reward=None):
    return Transition(
        state=gen.normal(size=STATE_DIM),
        action=int(gen.integers(NUM_ACTIONS)),
        reward=float(gen.normal()) if reward is None else reward,
        next_state=gen.normal(size=STATE_DIM),
        done=done,
    )


class TestDuelingNet:
    """对决网络测试类 / Dueling network test class"""

    def setup_method(self):
        """测试前设置 / Setup before test"""
        self.net = DuelingNet(STATE_DIM, (16, 8), NUM_ACTIONS, Rng(0))
        self.gen = np.random.default_rng(1)

    def test_forward_shape(self):
        q, cache = self.net.forward(self.gen.normal(size=(4, STATE_DIM)))
        assert q.shape == (4, NUM_ACTIONS)
        assert cache["h2"].shape == (4, 8)
        assert self.net.q_values(self.gen.normal(size=STATE_DIM)).shape == (NUM_ACTIONS,)

    def test_advantage_is_mean_centred(self):
        """测试Q的动作均值等于价值头输出 / Test the action-mean of Q equals the value head"""
        states = self.gen.normal(size=(5, STATE_DIM))
        q, cache = self.net.forward(states)
        value = cache["h2"] @ self.net.params["wv"] + self.net.params["bv"][0]
        assert np.allclose(q.mean(axis=1), value)

    def test_backward_matches_finite_differences(self):
        """测试反传梯度与中心差分一致 / Test backprop gradients match central differences"""
        states = self.gen.normal(size=(3, STATE_DIM))
        upstream = self.gen.normal(size=(3, NUM_ACTIONS))
        _, cache = self.net.forward(states)
        analytic = self.net.backward(cache, upstream)
        analytic_flat = np.concatenate([analytic[name].ravel() for name in ("W1", "b1", "W2", "b2", "wv", "bv", "Wa", "ba")])

        flat = self.net.flat()
        numeric = np.zeros_like(flat)
        h = 1e-6
        shifted = self.net.copy()
        for i in range(flat.size):
            up, down = flat.copy(), flat.copy()
            up[i] += h
            down[i] -= h
            shifted.set_flat(up)
            f_up = float(np.sum(shifted.forward(states)[0] * upstream))
            shifted.set_flat(down)
            f_down = float(np.sum(shifted.forward(states)[0] * upstream))
            numeric[i] = (f_up - f_down) / (2 * h)
        rel = np.linalg.norm(analytic_flat - numeric) / max(np.linalg.norm(numeric), 1e-12)
        assert rel < 1e-4

    def test_copy_is_independent(self):
        clone = self.net.copy()
        clone.params["ba"] += 1.0
        assert not np.allclose(clone.params["ba"], self.net.params["ba"])

    def test_soft_update(self):
        other = DuelingNet(STATE_DIM, (16, 8), NUM_ACTIONS, Rng(9))
        before = self.net.params["W1"].copy()
        self.net.soft_update(other, 0.25)
        assert np.allclose(self.net.params["W1"], 0.25 * other.params["W1"] + 0.75 * before)

    def test_save_and_load(self, tmp_path):
        path = tmp_path / "net.ckpt"
        self.net.save(str(path))
        loaded = DuelingNet.load(str(path))
        assert loaded.hidden == (16, 8)
        assert np.array_equal(loaded.flat(), self.net.flat())

    def test_set_flat_rejects_wrong_size(self):
        with pytest.raises(CheckpointFormatError):
            self.net.set_flat(np.zeros(3))
        with pytest.raises(CheckpointFormatError):
            self.net.set_flat(np.zeros(self.net.flat().size + 1))


class TestReplayAndTargets:
    """经验池与目标值测试类 / Replay and target test class"""

    def setup_method(self):
        """测试前设置 / Setup before test"""
        self.gen = np.random.default_rng(2)
        self.net = DuelingNet(STATE_DIM, (8, 8), NUM_ACTIONS, Rng(3))

    def test_ring_buffer_overwrites_oldest(self):
        memory = ReplayMemory(3)
        items = [random_transition(self.gen, reward=float(i)) for i in range(5)]
        for item in items:
            memory.push(item)
        assert len(memory) == 3
        assert sorted(t.reward for t in memory.buffer) == [2.0, 3.0, 4.0]
        assert len(memory.sample(10, Rng(0))) == 10

    def test_sampling_is_uniform(self):
        """测试经验池采样频率均匀 / Test replay sampling frequencies are uniform"""
        memory = ReplayMemory(10)
        for i in range(10):
            memory.push(random_transition(self.gen, reward=float(i)))
        batch = memory.sample(20_000, Rng(6))
        counts = np.bincount([int(t.reward) for t in batch], minlength=10)
        assert stats.chisquare(counts).pvalue > 1e-3

    def test_invalid_capacity(self):
        with pytest.raises(ValueError):
            ReplayMemory(0)

    def test_target_value(self):
        t = random_transition(self.gen, reward=1.5)
        expected = 1.5 + 0.9 * float(np.max(self.net.q_values(t.next_state)))
        assert target_value(self.net, t, 0.9) == pytest.approx(expected)
        assert target_value(self.net, random_transition(self.gen, done=True, reward=2.0), 0.9) == 2.0
        assert target_value(self.net, t, 0.0) == 1.5

    def test_td_gradient_only_touches_taken_actions(self):
        """测试TD损失与朴素计算一致 / Test the TD loss against a naive computation"""
        batch = [random_transition(self.gen) for _ in range(4)]
        target_net = self.net.copy()
        loss, grads = td_loss_and_gradient(self.net, target_net, batch, 0.9)
        naive = np.mean(
            [
                (self.net.q_values(t.state)[t.action] - target_value(target_net, t, 0.9)) ** 2
                for t in batch
            ]
        )
        assert loss == pytest.approx(naive)
        assert set(grads) == set(self.net.params)
        with pytest.raises(ValueError):
            td_loss_and_gradient(self.net, target_net, [], 0.9)

    def test_train_step_reduces_loss_on_fixed_batch(self):
        batch = [random_transition(self.gen, done=True) for _ in range(8)]
        target_net = self.net.copy()
        optimizer = AdamOptimizer(1e-2)
        first = train_step(self.net, target_net, batch, 0.9, optimizer)
        for _ in range(100):
            last = train_step(self.net, target_net, batch, 0.9, optimizer)
        assert last < first

    def test_train_step_nonfinite(self):
        batch = [random_transition(self.gen, done=True, reward=float("inf"))]
        with pytest.raises(NonfiniteLossError) as exc_info:
            train_step(self.net, self.net.copy(), batch, 0.9, AdamOptimizer())
        assert exc_info.value.diagnostics["batch_size"] == 1


class TestPolicy:
    """策略测试类 / Policy test class"""

    def setup_method(self):
        """测试前设置 / Setup before test"""
        self.net = DuelingNet(STATE_DIM, (8, 8), NUM_ACTIONS, Rng(4))
        self.state = np.random.default_rng(5).normal(size=STATE_DIM)

    def test_greedy_action(self):
        assert act(self.net, self.state, 0.0, Rng(0)) == int(np.argmax(self.net.q_values(self.state)))

    def test_random_actions_cover_range(self):
        rng = Rng(1)
        actions = {act(self.net, self.state, 1.0, rng) for _ in range(500)}
        assert actions == set(range(NUM_ACTIONS))

    def test_random_actions_are_uniform(self):
        """测试ε=1时动作服从均匀分布（卡方检验）/ Test ε=1 actions are uniform by a chi-square test"""
        rng = Rng(12)
        draws = [act(self.net, self.state, 1.0, rng) for _ in range(10_000)]
        counts = np.bincount(draws, minlength=NUM_ACTIONS)
        assert len(counts) == NUM_ACTIONS
        assert stats.chisquare(counts).pvalue > 1e-3

    def test_invalid_epsilon(self):
        with pytest.raises(ValueError):
            act(self.net, self.state, 1.5, Rng(0))

    def test_epsilon_schedule(self):
        cfg = RLConfig(episodes=100, epsilon_start=1.0, epsilon_end=0.1, epsilon_decay_fraction=0.5)
        assert epsilon_at(cfg, 0) == 1.0
        assert epsilon_at(cfg, 25) == pytest.approx(0.55)
        assert epsilon_at(cfg, 50) == pytest.approx(0.1)
        assert epsilon_at(cfg, 99) == pytest.approx(0.1)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            RLConfig(target_mode="sometimes")
        with pytest.raises(ValueError):
            RLConfig(reward_split="random")
        with pytest.raises(ValueError):
            RLConfig(gamma=1.5)


class TestAgent:
    """智能体测试类 / Agent test class"""

    def setup_method(self):
        """测试前设置 / Setup before test"""
        self.gen = np.random.default_rng(6)

    def test_learn_waits_for_batch(self):
        agent = DuelingDQNAgent(RLConfig(hidden=(8, 8), batch_size=4), Rng(0))
        for _ in range(3):
            agent.remember(random_transition(self.gen))
        assert agent.learn() is None
        agent.remember(random_transition(self.gen))
        assert isinstance(agent.learn(), float)
        assert agent.learn_steps == 1

    def test_hard_target_copy_period(self):
        """测试硬更新按周期复制 / Test hard updates copy on the period"""
        agent = DuelingDQNAgent(RLConfig(hidden=(8, 8), batch_size=2, target_period=3, learning_rate=1e-2), Rng(0))
        for _ in range(4):
            agent.remember(random_transition(self.gen))
        agent.learn()
        assert not np.array_equal(agent.target_net.flat(), agent.net.flat())
        agent.learn()
        agent.learn()
        assert np.array_equal(agent.target_net.flat(), agent.net.flat())

    def test_soft_target_moves_partially(self):
        agent = DuelingDQNAgent(
            RLConfig(hidden=(8, 8), batch_size=2, target_mode="soft", tau=0.5, learning_rate=1e-2), Rng(0)
        )
        before = agent.target_net.flat()
        for _ in range(4):
            agent.remember(random_transition(self.gen))
        agent.learn()
        after = agent.target_net.flat()
        assert np.allclose(after, 0.5 * agent.net.flat() + 0.5 * before)


class TestDDQNScheduler:
    """DDQN调度器测试类 / DDQN scheduler test class"""

    def setup_method(self):
        """测试前设置 / Setup before test"""
        self.twin = DigitalTwin(QueueParams(), GroundTruthEstimator(), t_cap=0.5)
        self.encoder = StateEncoder()
        self.cfg = RLConfig(hidden=(8, 8), batch_size=2, memory_capacity=50)
        self.agent = DuelingDQNAgent(self.cfg, Rng(7))
        self.scheduler = DDQNScheduler("dt-ddqn", self.agent, self.twin, self.encoder)

    def build_input(self, gops):
        return SchedulerInput(
            slot=0,
            gops=gops,
            twin_state=TwinQueueState(),
            z=0.5,
            estimates={g.gop_id: self.twin.estimate_gop(g) for g in gops},
        )

    def test_encoder_dimension(self):
        state = self.encoder.encode((0.75,) * 5, 5.0, (1e4,) * 5, 1.5e6)
        assert state.shape == (STATE_DIM,)
        assert state[0] == pytest.approx(0.5)
        assert state[5] == pytest.approx(0.5)
        assert state[6] == pytest.approx(1.0)
        assert state[-1] == pytest.approx(0.5)
        assert np.all(self.encoder.terminal((0.0,) * 5, 0.0)[6:] == 0.0)

    def test_decisions_are_feasible_and_greedy_when_evaluating(self, make_gop):
        gops = [make_gop(gop_id=k) for k in range(3)]
        decisions = self.scheduler.decide(self.build_input(gops))
        assert len(decisions) == 3
        assert all(x in FEASIBLE_DECISIONS for x in decisions)
        assert self.scheduler.learn(SlotFeedback(1.0, (0.0,) * 5, 0.0, False)) is None
        assert len(self.agent.memory) == 0

    def test_transitions_chain_within_slot(self, make_gop):
        """测试同一时隙内转移首尾相接 / Test transitions chain GoP to GoP within a slot"""
        self.scheduler.training = True
        self.scheduler.epsilon = 1.0
        gops = [make_gop(gop_id=k) for k in range(3)]
        self.scheduler.decide(self.build_input(gops))
        loss = self.scheduler.learn(SlotFeedback(2.0, (0.1,) * 5, 0.3, True))

        assert isinstance(loss, float)
        memory = self.agent.memory.buffer
        assert [t.reward for t in memory] == [0.0, 0.0, 2.0]
        assert np.array_equal(memory[0].next_state, memory[1].state)
        assert [t.done for t in memory] == [False, False, True]
        assert np.array_equal(memory[2].next_state, self.encoder.terminal((0.1,) * 5, 0.3))

    def test_equal_reward_split(self, make_gop):
        agent = DuelingDQNAgent(RLConfig(hidden=(8, 8), batch_size=2, reward_split="equal"), Rng(7))
        scheduler = DDQNScheduler("ddqn", agent, self.twin, self.encoder)
        scheduler.training = True
        gops = [make_gop(gop_id=k) for k in range(4)]
        scheduler.decide(self.build_input(gops))
        scheduler.learn(SlotFeedback(2.0, (0.0,) * 5, 0.0, False))
        assert [t.reward for t in agent.memory.buffer] == [0.5] * 4

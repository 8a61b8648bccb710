"""
对决深度Q网络 / Dueling Deep Q-Network

numpy实现的对决网络（解析梯度）、经验回放、目标网络、ε-贪心策略，
以及把智能体包装成逐GoP顺序决策调度器的适配层。
A numpy dueling network with analytic gradients, replay memory, target
network and ε-greedy policy, plus the adapter that turns the agent into a
scheduler deciding GoP by GoP.

Q(s, a) = U(s) + A(s, a) − mean_a' A(s, a')
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.exceptions.simulation_exceptions import CheckpointFormatError, NonfiniteLossError
from src.models.core import FEASIBLE_DECISIONS, NUM_ACTIONS, Rng, TranscodeDecision
from src.services.digital_twin import DigitalTwin, TwinQueueState
from src.services.optimizers import AdamOptimizer
from src.services.schedulers import Scheduler, SchedulerInput
from src.utils.checkpoint_io import read_checkpoint, write_checkpoint

STATE_DIM = 12
NET_PARAM_ORDER: Tuple[str, ...] = ("W1", "b1", "W2", "b2", "wv", "bv", "Wa", "ba")


class DuelingNet:
    """
    对决Q网络 / Dueling Q-network

    共享主干 state_dim → h1 → h2（ReLU），价值头 → 1，优势头 → |A|。
    Shared ReLU trunk state_dim → h1 → h2, a value head → 1 and an
    advantage head → |A|.
    """

    def __init__(
        self,
        state_dim: int = STATE_DIM,
        hidden: Tuple[int, int] = (64, 64),
        num_actions: int = NUM_ACTIONS,
        rng: Optional[Rng] = None,
    ):
        self.state_dim = state_dim
        self.hidden = tuple(hidden)
        self.num_actions = num_actions
        gen = (rng or Rng(0)).generator
        h1, h2 = self.hidden
        self.params: Dict[str, np.ndarray] = {
            "W1": gen.normal(0.0, np.sqrt(2.0 / state_dim), size=(h1, state_dim)),
            "b1": np.zeros(h1),
            "W2": gen.normal(0.0, np.sqrt(2.0 / h1), size=(h2, h1)),
            "b2": np.zeros(h2),
            "wv": gen.normal(0.0, np.sqrt(1.0 / h2), size=h2),
            "bv": np.zeros(1),
            "Wa": gen.normal(0.0, np.sqrt(1.0 / h2), size=(num_actions, h2)),
            "ba": np.zeros(num_actions),
        }

    def forward(self, states: np.ndarray) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
        """批量前向 / Batched forward pass, states of shape (N, state_dim)"""
        p = self.params
        x = np.atleast_2d(np.asarray(states, dtype=np.float64))
        z1 = x @ p["W1"].T + p["b1"]
        h1 = np.maximum(z1, 0.0)
        z2 = h1 @ p["W2"].T + p["b2"]
        h2 = np.maximum(z2, 0.0)
        value = h2 @ p["wv"] + p["bv"][0]
        advantage = h2 @ p["Wa"].T + p["ba"]
        q = value[:, None] + advantage - advantage.mean(axis=1, keepdims=True)
        cache = {"x": x, "z1": z1, "h1": h1, "z2": z2, "h2": h2}
        return q, cache

    def q_values(self, state: np.ndarray) -> np.ndarray:
        q, _ = self.forward(state)
        return q[0]

    def backward(self, cache: Dict[str, np.ndarray], grad_q: np.ndarray) -> Dict[str, np.ndarray]:
        """
        由 ∂L/∂Q 反传 / Backpropagate ∂L/∂Q

        ∂Q_j/∂U = 1，∂Q_j/∂A_k = δ_jk − 1/|A|
        """
        p = self.params
        grad_value = grad_q.sum(axis=1)
        grad_adv = grad_q - grad_value[:, None] / self.num_actions
        h2, h1 = cache["h2"], cache["h1"]

        grads = {
            "wv": h2.T @ grad_value,
            "bv": np.array([grad_value.sum()]),
            "Wa": grad_adv.T @ h2,
            "ba": grad_adv.sum(axis=0),
        }
        d_h2 = np.outer(grad_value, p["wv"]) + grad_adv @ p["Wa"]
        d_z2 = d_h2 * (cache["z2"] > 0)
        grads["W2"] = d_z2.T @ h1
        grads["b2"] = d_z2.sum(axis=0)
        d_z1 = (d_z2 @ p["W2"]) * (cache["z1"] > 0)
        grads["W1"] = d_z1.T @ cache["x"]
        grads["b1"] = d_z1.sum(axis=0)
        return grads

    def copy(self) -> "DuelingNet":
        clone = DuelingNet.__new__(DuelingNet)
        clone.state_dim = self.state_dim
        clone.hidden = self.hidden
        clone.num_actions = self.num_actions
        clone.params = {name: value.copy() for name, value in self.params.items()}
        return clone

    def load_from(self, other: "DuelingNet") -> None:
        for name in NET_PARAM_ORDER:
            self.params[name] = other.params[name].copy()

    def soft_update(self, other: "DuelingNet", tau: float) -> None:
        """θ ← τ·θ_other + (1 − τ)·θ"""
        for name in NET_PARAM_ORDER:
            self.params[name] = tau * other.params[name] + (1.0 - tau) * self.params[name]

    def flat(self) -> np.ndarray:
        return np.concatenate([self.params[name].ravel() for name in NET_PARAM_ORDER])

    def set_flat(self, flat: np.ndarray) -> None:
        offset = 0
        for name in NET_PARAM_ORDER:
            size = self.params[name].size
            if offset + size > flat.size:
                raise CheckpointFormatError("parameter vector too short for the network")
            self.params[name] = flat[offset : offset + size].reshape(self.params[name].shape).copy()
            offset += size
        if offset != flat.size:
            raise CheckpointFormatError(f"expected {offset} parameters, got {flat.size}")

    def save(self, path: str) -> None:
        write_checkpoint(
            path,
            "dueling-net",
            {"layers": [self.state_dim, *self.hidden, self.num_actions]},
            self.flat(),
        )

    @classmethod
    def load(cls, path: str) -> "DuelingNet":
        kind, header, flat = read_checkpoint(path)
        if kind != "dueling-net":
            raise CheckpointFormatError(f"not a dueling network checkpoint: {kind}")
        state_dim, h1, h2, actions = (int(v) for v in header["layers"])
        net = cls(state_dim, (h1, h2), actions)
        net.set_flat(flat)
        return net


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    done: bool


class ReplayMemory:
    """定长环形经验池，均匀采样 / Fixed-capacity ring buffer with uniform sampling"""

    def __init__(self, capacity: int = 5000):
        if capacity < 1:
            raise ValueError(f"replay capacity must be positive: {capacity}")
        self.capacity = capacity
        self.buffer: List[Transition] = []
        self.position = 0

    def push(self, transition: Transition) -> None:
        if len(self.buffer) < self.capacity:
            self.buffer.append(transition)
        else:
            self.buffer[self.position] = transition
        self.position = (self.position + 1) % self.capacity

    def sample(self, batch_size: int, rng: Rng) -> List[Transition]:
        indices = rng.generator.integers(len(self.buffer), size=batch_size)
        return [self.buffer[i] for i in indices]

    def __len__(self) -> int:
        return len(self.buffer)


def target_value(target_net: DuelingNet, transition: Transition, gamma: float) -> float:
    """y = r + γ·max_a Q(s′, a; θ^T)，终止时 y = r / y = r when done"""
    if transition.done or gamma == 0:
        return float(transition.reward)
    return float(transition.reward + gamma * np.max(target_net.q_values(transition.next_state)))


def td_loss_and_gradient(
    net: DuelingNet, target_net: DuelingNet, batch: Sequence[Transition], gamma: float
) -> Tuple[float, Dict[str, np.ndarray]]:
    """批量时序差分均方误差及其梯度 / Mean squared TD error over a batch and its gradient"""
    if not batch:
        raise ValueError("batch must not be empty")
    states = np.vstack([t.state for t in batch])
    actions = np.array([t.action for t in batch])
    targets = np.array([target_value(target_net, t, gamma) for t in batch])
    q, cache = net.forward(states)
    rows = np.arange(len(batch))
    error = q[rows, actions] - targets
    loss = float(np.mean(error**2))
    grad_q = np.zeros_like(q)
    grad_q[rows, actions] = 2.0 * error / len(batch)
    return loss, net.backward(cache, grad_q)


def train_step(
    net: DuelingNet,
    target_net: DuelingNet,
    batch: Sequence[Transition],
    gamma: float,
    optimizer: AdamOptimizer,
) -> float:
    """
    一次Adam更新，返回更新前的损失 / One Adam update, returning the pre-update loss

    Raises:
        NonfiniteLossError: 损失非有限 / Loss is not finite
    """
    loss, grads = td_loss_and_gradient(net, target_net, batch, gamma)
    if not np.isfinite(loss):
        raise NonfiniteLossError(
            "DQN训练损失非有限 / DQN training loss is non-finite",
            {
                "step": optimizer.t + 1,
                "max_abs_param": float(np.max(np.abs(net.flat()))),
                "batch_size": len(batch),
            },
        )
    optimizer.step(net.params, grads)
    return loss


def act(net: DuelingNet, state: np.ndarray, epsilon: float, rng: Rng) -> int:
    """ε-贪心动作，argmax 平局取最小下标 / ε-greedy action; argmax ties go to the lowest index"""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1]: {epsilon}")
    gen = rng.generator
    if gen.random() < epsilon:
        return int(gen.integers(net.num_actions))
    return int(np.argmax(net.q_values(state)))


@dataclass(frozen=True)
class RLConfig:
    """强化学习配置 / Reinforcement learning configuration"""

    episodes: int = 1000
    steps: int = 100
    hidden: Tuple[int, int] = (64, 64)
    gamma: float = 0.99
    learning_rate: float = 1e-4
    target_mode: str = "hard"
    target_period: int = 100
    tau: float = 1e-3
    memory_capacity: int = 5000
    batch_size: int = 32
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_fraction: float = 0.3
    reward_split: str = "last"
    eval_seeds: int = 20

    def __post_init__(self):
        if self.target_mode not in ("hard", "soft"):
            raise ValueError(f"target_mode must be 'hard' or 'soft': {self.target_mode}")
        if self.reward_split not in ("last", "equal"):
            raise ValueError(f"reward_split must be 'last' or 'equal': {self.reward_split}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1]: {self.gamma}")


def epsilon_at(cfg: RLConfig, episode: int) -> float:
    """前 decay_fraction 的回合内线性衰减 / Linear decay over the first decay_fraction of episodes"""
    horizon = max(1.0, cfg.epsilon_decay_fraction * cfg.episodes)
    progress = min(1.0, episode / horizon)
    return cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * progress


class DuelingDQNAgent:
    """主网络、目标网络、经验池与Adam / Primary and target networks, replay memory and Adam"""

    def __init__(self, cfg: RLConfig, rng: Rng):
        self.cfg = cfg
        self.rng = rng
        self.net = DuelingNet(STATE_DIM, cfg.hidden, NUM_ACTIONS, rng.child(0))
        self.target_net = self.net.copy()
        self.optimizer = AdamOptimizer(cfg.learning_rate)
        self.memory = ReplayMemory(cfg.memory_capacity)
        self.learn_steps = 0
        self.logger = logging.getLogger(__name__)

    def act(self, state: np.ndarray, epsilon: float) -> int:
        return act(self.net, state, epsilon, self.rng)

    def remember(self, transition: Transition) -> None:
        self.memory.push(transition)

    def learn(self) -> Optional[float]:
        """经验足够时训练一步并维护目标网络 / Train one step once enough experience exists"""
        if len(self.memory) < self.cfg.batch_size:
            return None
        batch = self.memory.sample(self.cfg.batch_size, self.rng)
        loss = train_step(self.net, self.target_net, batch, self.cfg.gamma, self.optimizer)
        self.learn_steps += 1
        if self.cfg.target_mode == "soft":
            self.target_net.soft_update(self.net, self.cfg.tau)
        elif self.learn_steps % self.cfg.target_period == 0:
            self.target_net.load_from(self.net)
            self.logger.debug(
                f"目标网络已同步 (第{self.learn_steps}步) / Target network copied at step {self.learn_steps}"
            )
        return loss


@dataclass(frozen=True)
class StateEncoder:
    """
    状态向量编码 / State vector encoding

    [L¹..L⁵ / L_max, Z / z_scale, Ω¹..Ω⁵ / workload_scale, b / bit_scale]
    """

    l_max: Tuple[float, ...] = (1.5, 1.5, 1.5, 1.5, 1.5)
    z_scale: float = 10.0
    workload_scale: float = 1e4
    bit_scale: float = 3e6

    def encode(
        self, lengths: Sequence[float], z: float, workloads: Sequence[float], bit_rate: float
    ) -> np.ndarray:
        return np.concatenate(
            [
                np.asarray(lengths, dtype=np.float64) / np.asarray(self.l_max),
                [z / self.z_scale],
                np.asarray(workloads, dtype=np.float64) / self.workload_scale,
                [bit_rate / self.bit_scale],
            ]
        )

    def terminal(self, lengths: Sequence[float], z: float) -> np.ndarray:
        """无待决策GoP的状态 / State with no GoP under decision"""
        return self.encode(lengths, z, np.zeros(5), 0.0)


@dataclass(frozen=True)
class SlotFeedback:
    """时隙结束反馈 / End-of-slot feedback"""

    reward: float
    next_lengths: Tuple[float, ...]
    next_z: float
    done: bool


class DDQNScheduler(Scheduler):
    """
    以对决DQN逐GoP决策的调度器 / Scheduler deciding GoP by GoP with a dueling DQN

    每个GoP决策后通过孪生入队刷新观测；时隙奖励默认归于最后一个GoP。
    After each GoP the observation is refreshed through a twin enqueue; the
    slot reward goes to the last GoP by default.
    """

    def __init__(
        self,
        name: str,
        agent: DuelingDQNAgent,
        twin: DigitalTwin,
        encoder: StateEncoder,
    ):
        super().__init__()
        self.name = name
        self.agent = agent
        self.twin = twin
        self.encoder = encoder
        self.epsilon = 0.0
        self.training = False
        self._pending: List[Tuple[np.ndarray, int]] = []

    def decide(self, inp: SchedulerInput) -> List[TranscodeDecision]:
        state: TwinQueueState = inp.twin_state
        decisions = []
        self._pending = []
        for gop in inp.gops:
            estimate = inp.estimates[gop.gop_id]
            observation = self.encoder.encode(state.lengths, inp.z, estimate.workloads, gop.bit_rate)
            action = self.agent.act(observation, self.epsilon if self.training else 0.0)
            x = FEASIBLE_DECISIONS[action]
            self._pending.append((observation, action))
            decisions.append(x)
            state = self.twin.enqueue(state, [(gop, x)], inp.estimates)
        return decisions

    def learn(self, feedback: SlotFeedback) -> Optional[float]:
        """
        由本时隙决策构造转移并训练一步 / Build transitions from this slot and train one step

        Returns:
            训练损失，未训练时为 None / Training loss, None when no step ran
        """
        if not self.training:
            self._pending = []
            return None
        count = len(self._pending)
        if count:
            terminal = self.encoder.terminal(feedback.next_lengths, feedback.next_z)
            for index, (observation, action) in enumerate(self._pending):
                last = index == count - 1
                if self.agent.cfg.reward_split == "equal":
                    r = feedback.reward / count
                else:
                    r = feedback.reward if last else 0.0
                next_state = terminal if last else self._pending[index + 1][0]
                self.agent.remember(
                    Transition(observation, action, r, next_state, feedback.done and last)
                )
        self._pending = []
        return self.agent.learn()

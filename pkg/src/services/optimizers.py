"""
优化器 / Optimizers

在参数字典上原地执行梯度更新，供工作量模型与对决Q网络共用
In-place gradient updates over parameter dictionaries, shared by the workload
model and the dueling Q-network.
"""

from typing import Dict

import numpy as np


class GradientDescentOptimizer:
    """全批量梯度下降 / Plain full-batch gradient descent"""

    def __init__(self, learning_rate: float):
        self.learning_rate = float(learning_rate)

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]) -> None:
        for name, grad in grads.items():
            params[name] -= self.learning_rate * grad


class AdamOptimizer:
    """
    Adam自适应矩估计 / Adam adaptive moment estimation

    m ← β1·m + (1−β1)·g,  v ← β2·v + (1−β2)·g²,
    θ ← θ − lr·m̂ / (sqrt(v̂) + ε)，其中 m̂、v̂ 为偏差修正值 / with bias-corrected m̂, v̂.
    """

    def __init__(
        self,
        learning_rate: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
    ):
        self.learning_rate = float(learning_rate)
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.t = 0
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]) -> None:
        self.t += 1
        bias1 = 1.0 - self.beta1**self.t
        bias2 = 1.0 - self.beta2**self.t
        for name in sorted(grads):
            grad = grads[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(grad)
                self.v[name] = np.zeros_like(grad)
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * grad
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * grad**2
            m_hat = self.m[name] / bias1
            v_hat = self.v[name] / bias2
            params[name] -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.epsilon)


def build_optimizer(name: str, learning_rate: float):
    """按名称创建优化器 / Create an optimizer by name"""
    if name == "adam":
        return AdamOptimizer(learning_rate)
    if name == "gd":
        return GradientDescentOptimizer(learning_rate)
    raise ValueError(f"unknown optimizer: {name}")

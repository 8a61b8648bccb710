# -*- coding: utf-8 -*-
"""
pytest配置文件 / pytest configuration file

提供测试环境的全局配置和fixture定义。
Provides global configuration and fixture definitions for the test environment.
"""

import sys
from dataclasses import replace
from pathlib import Path

import pytest

# 添加项目根目录到Python路径 / Add the project root to the Python path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from src.config.config_manager import ExperimentConfig  # noqa: E402
from src.models.core import GoP, Rng  # noqa: E402
from src.models.queues import QueueParams  # noqa: E402
from src.services.dueling_dqn import RLConfig  # noqa: E402
from src.services.simulation import SimulationConfig  # noqa: E402
from src.services.workload_estimator import TrainCfg  # noqa: E402


@pytest.fixture
def queue_params():
    """默认五个TQ参数 / Default parameters of the five TQs"""
    return QueueParams()


@pytest.fixture
def make_gop():
    """
    GoP工厂 / GoP factory

    用法 / usage: make_gop(gop_id=1, requests=(1, 2, 3))
    """

    def _make(gop_id=0, bit_rate=2e6, requests=(1, 1, 1), si=20.0, ti=5.0, width=1920, height=1080):
        return GoP(
            gop_id=gop_id,
            bit_rate=bit_rate,
            num_frames=16,
            width=width,
            height=height,
            si=si,
            ti=ti,
            requests=requests,
        )

    return _make


@pytest.fixture
def rng():
    return Rng(1234)


@pytest.fixture
def small_config(tmp_path):
    """
    缩小规模的实验配置（快速测试用）/ Scaled-down experiment configuration for fast tests
    """
    base = ExperimentConfig()
    return replace(
        base,
        simulation=SimulationConfig(seed=11, slots=20),
        twe=replace(
            base.twe,
            records=600,
            train=TrainCfg(hidden=8, epochs=60, lambda_interval=20, seed=3),
        ),
        rl=RLConfig(
            episodes=3,
            steps=15,
            hidden=(16, 16),
            memory_capacity=200,
            batch_size=8,
            target_period=5,
            eval_seeds=2,
        ),
        output_dir=str(tmp_path / "results"),
        schedulers=("rr", "pf", "ummkp", "ddqn", "dt-ddqn"),
    )


@pytest.fixture
def config_file(tmp_path):
    """写一个最小YAML配置文件 / Write a minimal YAML config file"""
    path = tmp_path / "config.yaml"
    path.write_text(
        "simulation:\n"
        "  seed: 5\n"
        "  slots: 10\n"
        "objective:\n"
        "  d_bar: 1.8\n"
        "twe:\n"
        "  records: 400\n"
        "  epochs: 40\n"
        "  mse_threshold: 1e-3\n"
        "rl:\n"
        "  episodes: 2\n"
        "  steps: 10\n"
        "  batch_size: 4\n"
        f"output:\n  directory: {(tmp_path / 'out').as_posix()}\n",
        encoding="utf-8",
    )
    return path

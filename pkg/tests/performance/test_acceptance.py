"""
验收规模测试 / Acceptance-Scale Tests

默认规模的TWE收敛、调度器比较、队列均衡与请求突增下的满意度。
TWE convergence at default scale, the scheduler comparison, queue balance
and satisfaction under a request surge.
"""

import numpy as np
import pytest

from src.config.config_manager import ConfigManager
from src.services.experiment_controller import ExperimentController
from src.services.schedulers import SCHEDULER_NAMES
from src.utils.csv_io import read_table


def load_config(tmp_path, extra: str = ""):
    """默认配置加上少量覆盖 / Default configuration plus a few overrides"""
    text = f"output:\n  directory: {(tmp_path / 'results').as_posix()}\n" + extra
    return ConfigManager(str(tmp_path / "unused.yaml")).parse(text)


def has_local_minimum(series, center: int, radius: int = 5) -> bool:
    for t in range(max(1, center - radius), min(len(series) - 1, center + radius + 1)):
        if series[t] <= series[t - 1] and series[t] <= series[t + 1]:
            return True
    return False


@pytest.mark.slow
class TestAcceptance:
    """验收规模测试类 / Acceptance-scale test class"""

    def test_default_twe_reaches_held_out_mse(self, tmp_path):
        """测试默认配置下留出集MSE低于1e-3 / Test the held-out MSE is below 1e-3 with the default configuration"""
        config = load_config(tmp_path)
        report = ExperimentController(config=config).train_twe()

        assert report.train_count == 7976
        assert report.test_count == 1994
        assert report.test_mse < 1e-3
        assert report.passed

    def test_dt_ddqn_leads_the_comparison(self, tmp_path):
        """测试DT-DDQN在新种子上满意度领先且时延受约束，队列更均衡
        Test DT-DDQN leads satisfaction on fresh seeds within the delay bound, with better-balanced queues"""
        config = load_config(tmp_path, "rl:\n  episodes: 300\n  eval_seeds: 20\n")
        comparison = ExperimentController(config=config).compare(SCHEDULER_NAMES)

        evaluation = read_table(str(comparison.evaluation_path), "evaluation").set_index("scheduler")
        leader = evaluation.loc["dt-ddqn", "mean_W"]
        for name in ("rr", "pf", "ummkp", "ddqn"):
            assert leader >= evaluation.loc[name, "mean_W"] + 0.03, name
        assert evaluation.loc["dt-ddqn", "mean_D"] <= 1.8 * 1.05

        balance = {name: report.summary["queue_balance_var"] for name, report in comparison.reports.items()}
        assert balance["dt-ddqn"] <= balance["ddqn"]

    def test_surge_gives_satisfaction_minimum(self, tmp_path):
        """测试高质量请求突增附近每个调度器的W出现局部极小
        Test every scheduler's W has a local minimum near a high-quality request surge"""
        config = load_config(
            tmp_path,
            "simulation:\n  slots: 100\n"
            "arrivals:\n  surges:\n    - slot: 50\n      duration: 10\n      high_mix: 0.8\n"
            "twe:\n  records: 2000\n  epochs: 200\n"
            "rl:\n  episodes: 20\n  eval_seeds: 0\n",
        )
        comparison = ExperimentController(config=config).compare(SCHEDULER_NAMES)

        frame = read_table(str(comparison.comparison_path), "comparison")
        for name in SCHEDULER_NAMES:
            series = frame[f"W_{name}"].to_numpy()
            assert np.all((series >= 0.0) & (series <= 1.0))
            assert has_local_minimum(series, 50), name

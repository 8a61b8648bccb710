"""
实验控制器 / Experiment Controller

整合所有组件，提供 run / compare / train-twe / gen-trace 实验操作
Integrates all components and provides the run / compare / train-twe /
gen-trace experiment operations
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import yaml

from src.config.config_manager import ConfigManager, ConfigurationError, ExperimentConfig
from src.exceptions.simulation_exceptions import TranscodingSimError
from src.models.core import GoP, Rng
from src.services.digital_twin import DigitalTwin
from src.services.dueling_dqn import DDQNScheduler, DuelingDQNAgent, StateEncoder
from src.services.objective import (
    DeficitQueue,
    audit_drift_bound,
    delay_box,
    delay_constraint_met,
    gamma_bound,
)
from src.services.physical_plant import ArrivalProcess, PhysicalPlant
from src.services.schedulers import (
    ProportionalFairScheduler,
    RoundRobinScheduler,
    Scheduler,
    UmmkpScheduler,
)
from src.services.simulation import ARRIVAL_STREAM, SlotResult, TranscodingEnvironment, train_agent
from src.services.workload_estimator import (
    DigitalTwinEstimator,
    MeanWorkloadEstimator,
    WorkloadModel,
    WorkloadTrainer,
    generate_training_records,
    split_by_processor,
)
from src.utils.csv_io import (
    EVALUATION_COLUMNS,
    HISTOGRAM_COLUMNS,
    MSE_CURVE_COLUMNS,
    SLOT_METRICS_COLUMNS,
    TRAINING_CURVE_COLUMNS,
    read_trace,
    write_records,
    write_table,
    write_trace,
)

LIBRARY_STREAM = 10
RECORD_STREAM = 11
SPLIT_STREAM = 12
AGENT_STREAM = 13
LEARNING_SCHEDULERS = ("ddqn", "dt-ddqn")


class ExperimentError(TranscodingSimError):
    """实验执行失败 / Experiment execution failed"""


@dataclass(frozen=True)
class RunReport:
    """单个调度器的运行报告 / Run report of one scheduler"""

    scheduler: str
    metrics_path: Path
    summary_path: Path
    summary: Dict[str, object]
    training_path: Optional[Path] = None
    results: List[SlotResult] = field(default_factory=list, repr=False, compare=False)
    environment: Optional[TranscodingEnvironment] = field(default=None, repr=False, compare=False)
    policy: Optional[Scheduler] = field(default=None, repr=False, compare=False)


@dataclass(frozen=True)
class ComparisonReport:
    reports: Dict[str, RunReport]
    comparison_path: Path
    queue_stats_path: Path
    evaluation_path: Optional[Path] = None


@dataclass(frozen=True)
class TWEReport:
    """TWE训练报告 / TWE training report"""

    train_count: int
    test_count: int
    cloud_test_mse: float
    edge_test_mse: float
    test_mse: float
    passed: bool
    mean_workload: float
    paths: Dict[str, Path]
    cloud_model: WorkloadModel = field(repr=False, compare=False)
    edge_model: WorkloadModel = field(repr=False, compare=False)


def summarize(results: Sequence[SlotResult], d_bar: float, gamma: float, box: Tuple[float, float]) -> Dict[str, object]:
    """
    由逐时隙结果计算汇总（可由CSV重算）/ Summary from per-slot results, recomputable from the CSV

    Returns:
        汇总字典 / Summary dictionary
    """
    lengths = np.array([r.lengths for r in results], dtype=np.float64).reshape(-1, 5)
    delays = [r.delay for r in results]
    audit = audit_drift_bound([(r.z, r.delay) for r in results], gamma, d_bar, box, strict=False)
    queue_mean = lengths.mean(axis=0) if len(results) else np.zeros(5)
    return {
        "slots": len(results),
        "mean_W": float(np.mean([r.satisfaction for r in results])) if results else 1.0,
        "mean_D": float(np.mean(delays)) if results else 0.0,
        "final_Z": float(results[-1].z) if results else 0.0,
        "queue_mean": [float(v) for v in queue_mean],
        "queue_var": [float(v) for v in (lengths.var(axis=0) if len(results) else np.zeros(5))],
        "queue_balance_var": float(np.var(queue_mean)),
        "delay_constraint_met": bool(delay_constraint_met(delays, d_bar)),
        "drift_bound_holds": bool(audit.holds),
        "drift_checked": audit.checked,
        "drift_skipped": audit.skipped,
        "syncs": int(sum(r.syncs for r in results)),
    }


class ExperimentController:
    """实验控制器 / Experiment Controller"""

    def __init__(self, config_path: Optional[str] = None, config: Optional[ExperimentConfig] = None):
        """
        初始化实验控制器 / Initialize experiment controller

        Args:
            config_path: 配置文件路径 / Configuration file path
            config: 已构造的配置（优先）/ Prebuilt configuration, takes precedence
        """
        self.logger = logging.getLogger(__name__)
        self.config_manager = ConfigManager(config_path)
        self.config = config if config is not None else self.config_manager.load_config()
        self._arrival_process: Optional[ArrivalProcess] = None
        self._twe: Optional[TWEReport] = None

    @property
    def output_dir(self) -> Path:
        return Path(self.config.output_dir)

    @property
    def arrival_process(self) -> ArrivalProcess:
        if self._arrival_process is None:
            self._arrival_process = ArrivalProcess(
                self.config.arrivals, Rng(self.config.seed, LIBRARY_STREAM)
            )
        return self._arrival_process

    # 组件装配 / component assembly

    def build_estimator(self, scheduler_name: str):
        """
        为调度器选择工作量估计器 / Pick the workload estimator for a scheduler

        ddqn 使用通用平均估计器，其余使用CTDT/ETDT模型。
        ddqn uses the universal mean estimator; the others use the CTDT/ETDT models.
        """
        twe = self.ensure_twe()
        if scheduler_name == "ddqn":
            return MeanWorkloadEstimator(twe.mean_workload)
        return DigitalTwinEstimator(twe.cloud_model, twe.edge_model)

    def build_environment(
        self, estimator, trace: Optional[Dict[int, List[GoP]]] = None
    ) -> TranscodingEnvironment:
        cfg = self.config
        plant = PhysicalPlant(
            cfg.queues,
            cfg.objective.i_max,
            cfg.twe.noise,
            cfg.simulation.record_threshold,
            cfg.simulation.edge_dispatch,
        )
        twin = DigitalTwin(cfg.queues, estimator, cfg.simulation.effective_t_cap)
        deficit = DeficitQueue(0.0, cfg.objective.d_bar, cfg.objective.v_weight)
        return TranscodingEnvironment(
            cfg.simulation,
            cfg.queues,
            plant,
            twin,
            deficit,
            arrivals=None if trace is not None else self.arrival_process,
            trace=trace,
            refit_cfg=cfg.twe.train,
        )

    def build_scheduler(self, name: str, env: TranscodingEnvironment) -> Scheduler:
        if name == "rr":
            return RoundRobinScheduler()
        if name == "pf":
            return ProportionalFairScheduler()
        if name == "ummkp":
            return UmmkpScheduler()
        if name in LEARNING_SCHEDULERS:
            cfg = self.config
            encoder = StateEncoder(
                l_max=cfg.queues.l_max_vector,
                z_scale=10.0,
                workload_scale=1e4,
                bit_scale=cfg.arrivals.bit_rate_range[1],
            )
            agent = DuelingDQNAgent(cfg.rl, Rng(cfg.seed, AGENT_STREAM))
            return DDQNScheduler(name, agent, env.twin, encoder)
        raise ConfigurationError(f"unknown scheduler: {name}")

    # TWE训练 / TWE training

    def ensure_twe(self) -> TWEReport:
        if self._twe is None:
            self._twe = self.train_twe()
        return self._twe

    def train_twe(self) -> TWEReport:
        """
        生成合成记录，训练CTDT/ETDT模型并输出检查点与误差报告
        Generate synthetic records, fit the CTDT/ETDT models and write
        checkpoints plus error reports

        Returns:
            TWE训练报告 / TWE training report
        """
        try:
            twe_cfg = self.config.twe
            out = self.output_dir / "twe"
            self.logger.info(f"开始训练TWE模型 / Starting TWE training: {twe_cfg.records} records")

            records = generate_training_records(
                Rng(twe_cfg.train.seed, RECORD_STREAM),
                self.arrival_process.library,
                twe_cfg.records,
                twe_cfg.noise,
            )
            order = Rng(twe_cfg.train.seed, SPLIT_STREAM).generator.permutation(len(records))
            n_train = int(round(len(records) * twe_cfg.train_fraction))
            train = [records[i] for i in order[:n_train]]
            test = [records[i] for i in order[n_train:]]

            trainer = WorkloadTrainer(twe_cfg.train)
            paths = {"records": write_records(str(out / "train_records.csv"), train)}
            models, mses, counts = {}, {}, {}
            for tag, train_part, test_part in zip(
                ("ctdt", "etdt"), split_by_processor(train), split_by_processor(test)
            ):
                model = trainer.fit(train_part)
                models[tag] = model
                model.save(str(out / f"{tag}.ckpt"))
                paths[f"{tag}_model"] = out / f"{tag}.ckpt"

                report = model.error_report(test_part if test_part else train_part)
                mses[tag], counts[tag] = report.mse, len(test_part)
                paths[f"{tag}_histogram"] = write_table(
                    str(out / f"{tag}_histogram.csv"),
                    "twe_histogram",
                    pd.DataFrame(report.histogram, columns=HISTOGRAM_COLUMNS),
                )
                paths[f"{tag}_mse"] = write_table(
                    str(out / f"{tag}_mse_curve.csv"),
                    "twe_mse_curve",
                    pd.DataFrame(
                        {
                            "epoch": np.arange(1, len(model.mse_history) + 1),
                            "mse": model.mse_history,
                            "lambda": model.lambda_history,
                        },
                        columns=MSE_CURVE_COLUMNS,
                    ),
                )

            total = max(1, counts["ctdt"] + counts["etdt"])
            test_mse = (mses["ctdt"] * counts["ctdt"] + mses["etdt"] * counts["etdt"]) / total
            report = TWEReport(
                train_count=len(train),
                test_count=len(test),
                cloud_test_mse=mses["ctdt"],
                edge_test_mse=mses["etdt"],
                test_mse=test_mse,
                passed=test_mse < twe_cfg.mse_threshold,
                mean_workload=MeanWorkloadEstimator.from_records(train).mean_workload,
                paths=paths,
                cloud_model=models["ctdt"],
                edge_model=models["etdt"],
            )
            self.logger.info(
                f"TWE训练完成: 测试MSE={test_mse:.3e} / TWE training finished: test MSE={test_mse:.3e}"
            )
            self._twe = report
            return report
        except TranscodingSimError:
            raise
        except Exception as e:
            self.logger.error(f"TWE训练失败: {e} / TWE training failed: {e}")
            raise ExperimentError(f"TWE训练失败: {e} / TWE training failed: {e}")

    # 运行与比较 / run and compare

    def _load_trace(self, trace_path: Optional[str]) -> Optional[Dict[int, List[GoP]]]:
        if trace_path is None:
            return None
        return read_trace(trace_path, self.config.simulation.slots)

    def run(self, scheduler_name: Optional[str] = None, trace_path: Optional[str] = None) -> RunReport:
        """
        运行单个调度器并写出CSV与汇总 / Run one scheduler and write its CSVs and summary

        Args:
            scheduler_name: 调度器名称（默认取配置中第一个）/ Scheduler name, defaults to the first configured
            trace_path: 可选的到达轨迹文件 / Optional arrival trace to replay

        Returns:
            运行报告 / Run report
        """
        name = scheduler_name or self.config.schedulers[0]
        try:
            return self._run(name, self._load_trace(trace_path))
        except (TranscodingSimError, ConfigurationError):
            raise
        except Exception as e:
            self.logger.error(f"运行 {name} 失败: {e} / Run of {name} failed: {e}")
            raise ExperimentError(f"运行 {name} 失败: {e} / Run of {name} failed: {e}")

    def _run(self, name: str, trace: Optional[Dict[int, List[GoP]]]) -> RunReport:
        cfg = self.config
        out = self.output_dir / name
        env = self.build_environment(self.build_estimator(name), trace)
        scheduler = self.build_scheduler(name, env)
        self.logger.info(f"开始运行调度器 {name} / Starting run of scheduler {name}")

        training_path = None
        if isinstance(scheduler, DDQNScheduler):
            history = train_agent(env, scheduler, cfg.rl)
            training_path = write_table(
                str(out / "training.csv"),
                "training_curve",
                pd.DataFrame([h.as_row() for h in history], columns=TRAINING_CURVE_COLUMNS),
            )
            scheduler.agent.net.save(str(out / "agent.ckpt"))

        env.reset(cfg.seed)
        results = env.run(scheduler, cfg.simulation.slots)
        metrics_path = write_table(
            str(out / "slot_metrics.csv"),
            "slot_metrics",
            pd.DataFrame([r.as_row() for r in results], columns=SLOT_METRICS_COLUMNS),
        )

        summary = summarize(
            results,
            cfg.objective.d_bar,
            gamma_bound(cfg.queues, cfg.objective.i_max, cfg.objective.d_bar),
            delay_box(cfg.queues, cfg.objective.i_max, cfg.objective.d_bar),
        )
        summary = {"scheduler": name, **summary, "refits": env.refits}
        summary_path = out / "summary.yaml"
        with open(summary_path, "w", encoding="utf-8") as f:
            yaml.safe_dump(summary, f, allow_unicode=True, sort_keys=False)

        self.logger.info(
            f"{name} 运行完成: W={summary['mean_W']:.3f}, D={summary['mean_D']:.3f} / "
            f"{name} finished: W={summary['mean_W']:.3f}, D={summary['mean_D']:.3f}"
        )
        return RunReport(name, metrics_path, summary_path, summary, training_path, results, env, scheduler)

    def compare(
        self,
        scheduler_names: Optional[Sequence[str]] = None,
        trace_path: Optional[str] = None,
        eval_seeds: Optional[int] = None,
    ) -> ComparisonReport:
        """
        在同一到达轨迹上比较多个调度器，并在新种子上评估
        Compare schedulers on one shared arrival trace, then evaluate them on fresh seeds

        Args:
            scheduler_names: 调度器名称 / Scheduler names
            trace_path: 可选的到达轨迹文件 / Optional arrival trace to replay
            eval_seeds: 评估种子数（默认 rl.eval_seeds，0 表示跳过）/ Evaluation seeds, defaults to rl.eval_seeds, 0 skips

        Raises:
            ConfigurationError: 少于两个调度器 / Fewer than two schedulers
        """
        names = sorted(set(scheduler_names or self.config.schedulers))
        if len(names) < 2:
            raise ConfigurationError(f"compare needs at least two schedulers, got {names}")
        seeds = self.config.rl.eval_seeds if eval_seeds is None else eval_seeds
        if seeds < 0:
            raise ConfigurationError(f"eval_seeds must be non-negative: {seeds}")
        trace = self._load_trace(trace_path)
        if trace is None:
            trace = self.generate_trace(self.config.simulation.slots)

        reports = {name: self.run_with_trace(name, trace) for name in names}

        columns = {"t": [r.t for r in reports[names[0]].results]}
        columns["gops"] = [r.gops for r in reports[names[0]].results]
        for name in names:
            columns[f"W_{name}"] = [r.satisfaction for r in reports[name].results]
            columns[f"D_{name}"] = [r.delay for r in reports[name].results]
        comparison_path = write_table(
            str(self.output_dir / "comparison.csv"), "comparison", pd.DataFrame(columns)
        )

        rows = []
        for name in names:
            summary = reports[name].summary
            row = {"scheduler": name, "mean_W": summary["mean_W"], "mean_D": summary["mean_D"]}
            for i in range(5):
                row[f"L{i + 1}_mean"] = summary["queue_mean"][i]
                row[f"L{i + 1}_var"] = summary["queue_var"][i]
            rows.append(row)
        queue_stats_path = write_table(
            str(self.output_dir / "queue_stats.csv"), "queue_stats", pd.DataFrame(rows)
        )

        evaluation_path = None
        if seeds > 0:
            evaluation = [
                {"scheduler": name, "seeds": seeds, **self.evaluate_across_seeds(name, seeds, reports[name])}
                for name in names
            ]
            evaluation_path = write_table(
                str(self.output_dir / "evaluation.csv"),
                "evaluation",
                pd.DataFrame(evaluation, columns=EVALUATION_COLUMNS),
            )
        self.logger.info(f"比较完成: {names} / Comparison finished: {names}")
        return ComparisonReport(reports, comparison_path, queue_stats_path, evaluation_path)

    def run_with_trace(self, name: str, trace: Dict[int, List[GoP]]) -> RunReport:
        try:
            return self._run(name, trace)
        except (TranscodingSimError, ConfigurationError):
            raise
        except Exception as e:
            self.logger.error(f"运行 {name} 失败: {e} / Run of {name} failed: {e}")
            raise ExperimentError(f"运行 {name} 失败: {e} / Run of {name} failed: {e}")

    # 轨迹 / traces

    def generate_trace(self, slots: int, seed: Optional[int] = None) -> Dict[int, List[GoP]]:
        rng = Rng(self.config.seed if seed is None else seed, ARRIVAL_STREAM)
        return {t: self.arrival_process.arrivals(rng, t) for t in range(slots)}

    def gen_trace(self, path: Optional[str] = None, slots: Optional[int] = None) -> Path:
        """生成并写出到达轨迹 / Generate and write an arrival trace"""
        count = self.config.simulation.slots if slots is None else slots
        target = path or str(self.output_dir / "trace.csv")
        written = write_trace(target, self.generate_trace(count))
        self.logger.info(f"到达轨迹已写出: {written} / Arrival trace written: {written}")
        return written

    def evaluate_across_seeds(
        self, name: str, seeds: Optional[int] = None, report: Optional[RunReport] = None
    ) -> Dict[str, float]:
        """
        在多个新种子的随机到达上评估调度器 / Evaluate a scheduler on random arrivals of fresh seeds

        Args:
            name: 调度器名称 / Scheduler name
            seeds: 种子数（默认 rl.eval_seeds）/ Number of seeds, defaults to rl.eval_seeds
            report: 已有运行报告；复用其已训练的调度器与估计器
                / Earlier run whose trained scheduler and estimator are reused

        Returns:
            {"mean_W": ..., "mean_D": ...}
        """
        cfg = self.config
        count = cfg.rl.eval_seeds if seeds is None else seeds
        if count < 1:
            raise ConfigurationError(f"evaluation needs at least one seed, got {count}")
        if report is not None and report.policy is not None:
            env = self.build_environment(report.environment.twin.estimator)
            scheduler = report.policy
        else:
            env = self.build_environment(self.build_estimator(name))
            scheduler = self.build_scheduler(name, env)
            if isinstance(scheduler, DDQNScheduler):
                train_agent(env, scheduler, cfg.rl)
        ws, ds = [], []
        for offset in range(count):
            env.reset(cfg.seed + 100_000 + offset)
            scheduler.reset()
            results = env.run(scheduler, cfg.simulation.slots)
            ws.extend(r.satisfaction for r in results)
            ds.extend(r.delay for r in results)
        self.logger.info(
            f"{name} 多种子评估完成（{count} 个种子）/ {name} evaluated on {count} seeds"
        )
        return {
            "mean_W": float(np.mean(ws)) if ws else 1.0,
            "mean_D": float(np.mean(ds)) if ds else 0.0,
        }

"""
转码工作量估计（TWE）/ Transcoding Workload Estimation (TWE)

以L2正则并按证据框架自适应λ的单隐层网络近似贝叶斯正则化神经网络，
并提供合成的真实工作量函数供物理仿真使用。
A single-hidden-layer network trained on MSE + λ‖θ‖² with evidence-style λ
adaptation stands in for the Bayesian-regularized network of both twins; a
synthetic ground-truth workload function feeds the physical plant.

真实工作量公式 / Ground-truth workload formula (flops per bit):

    Ω(v) = 1500 · 4^(1 − preset) · (1 + si/30) · (1 + ti/10)
           · (resolution / 1920·1080) · sqrt(num_frames / 16)
           · (1 + 0.2·processor) · exp(noise · N(0, 1))

preset: 0 slow, 1 medium, 2 fast; processor: 0 cloud, 1 edge.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.exceptions.simulation_exceptions import (
    CheckpointFormatError,
    InsufficientDataError,
    ModelNotFittedError,
    NonfiniteLossError,
)
from src.models.core import GoP, Rng
from src.models.queues import Processor, QueueSpec
from src.services.optimizers import build_optimizer
from src.utils.checkpoint_io import read_checkpoint, write_checkpoint

logger = logging.getLogger(__name__)

FEATURE_NAMES: Tuple[str, ...] = (
    "encoding_preset",
    "num_frames",
    "resolution",
    "si",
    "ti",
    "computing_processor",
    "computing_density",
    "computing_capability",
)
NUM_FEATURES = len(FEATURE_NAMES)
PARAM_ORDER: Tuple[str, ...] = ("W1", "b1", "w2", "b2")
REFERENCE_RESOLUTION = 1920 * 1080
HISTOGRAM_BINS = 20
MIN_RECORDS = 50


@dataclass(frozen=True)
class FeatureVector:
    """TWE模型输入向量 / Input vector of the TWE model"""

    encoding_preset: float
    num_frames: float
    resolution: float
    si: float
    ti: float
    computing_processor: float
    computing_density: float
    computing_capability: float

    def to_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in FEATURE_NAMES], dtype=np.float64)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "FeatureVector":
        return cls(*(float(v) for v in values))


@dataclass(frozen=True)
class TrainingRecord:
    """记录的实际转码数据 / Recorded actual transcoding data"""

    features: FeatureVector
    actual_workload: float

    def __post_init__(self):
        if not self.actual_workload > 0:
            raise ValueError(f"actual workload must be positive: {self.actual_workload}")


def build_feature_vector(gop: GoP, spec: QueueSpec) -> FeatureVector:
    """由GoP与队列配置构造输入向量 / Build the input vector of a GoP in a queue"""
    return FeatureVector(
        encoding_preset=float(spec.preset),
        num_frames=float(gop.num_frames),
        resolution=float(gop.resolution),
        si=float(gop.si),
        ti=float(gop.ti),
        computing_processor=float(spec.processor),
        computing_density=float(spec.kappa),
        computing_capability=float(spec.f_ghz),
    )


def base_workload(v: FeatureVector) -> float:
    """无噪声真实工作量 / Noise-free ground-truth workload (flops per bit)"""
    return float(
        1500.0
        * 4.0 ** (1.0 - v.encoding_preset)
        * (1.0 + v.si / 30.0)
        * (1.0 + v.ti / 10.0)
        * (v.resolution / REFERENCE_RESOLUTION)
        * np.sqrt(v.num_frames / 16.0)
        * (1.0 + 0.2 * v.computing_processor)
    )


def ground_truth_workload(v: FeatureVector, rng: Optional[Rng], noise: float) -> float:
    """
    带对数正态噪声的真实工作量 / Ground-truth workload with log-normal noise

    Args:
        v: 输入向量 / Input vector
        rng: 随机数流（noise=0 时可为空）/ Random stream (may be None when noise=0)
        noise: 对数正态σ，取值 [0, 0.2] / Log-normal sigma in [0, 0.2]
    """
    if not 0.0 <= noise <= 0.2:
        raise ValueError(f"noise must lie in [0, 0.2]: {noise}")
    base = base_workload(v)
    if rng is None:
        if noise > 0:
            raise ValueError("a random stream is required when noise > 0")
        return base
    z = float(rng.generator.standard_normal())
    return base * float(np.exp(noise * z))


def generate_training_records(
    rng: Rng,
    contents: Sequence[GoP],
    count: int,
    noise: float,
    f_range: Tuple[float, float] = (5.0, 20.0),
    kappa_range: Tuple[float, float] = (1.0, 10.0),
) -> List[TrainingRecord]:
    """
    生成合成训练记录 / Generate synthetic training records

    内容特征取自给定GoP库，队列配置（预设、处理器、f、κ）随机抽取。
    Content features come from the given GoP library; queue configuration
    (preset, processor, f, κ) is drawn at random.
    """
    if not contents:
        raise InsufficientDataError("content library is empty")
    gen = rng.generator
    records = []
    for _ in range(count):
        gop = contents[int(gen.integers(len(contents)))]
        v = FeatureVector(
            encoding_preset=float(gen.integers(3)),
            num_frames=float(gop.num_frames),
            resolution=float(gop.resolution),
            si=gop.si,
            ti=gop.ti,
            computing_processor=float(gen.integers(2)),
            computing_density=float(gen.uniform(*kappa_range)),
            computing_capability=float(gen.uniform(*f_range)),
        )
        records.append(TrainingRecord(v, ground_truth_workload(v, rng, noise)))
    return records


def records_to_arrays(records: Sequence[TrainingRecord]) -> Tuple[np.ndarray, np.ndarray]:
    X = np.vstack([r.features.to_array() for r in records]) if records else np.zeros((0, NUM_FEATURES))
    y = np.array([r.actual_workload for r in records], dtype=np.float64)
    return X, y


# 网络前向与梯度 / network forward pass and gradients


def forward(params: Dict[str, np.ndarray], X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    hidden = np.tanh(X @ params["W1"].T + params["b1"])
    return hidden @ params["w2"] + params["b2"][0], hidden


def squared_norm(params: Dict[str, np.ndarray]) -> float:
    return float(sum(np.sum(params[name] ** 2) for name in PARAM_ORDER))


def loss_and_gradient(
    params: Dict[str, np.ndarray], X: np.ndarray, y: np.ndarray, lam: float
) -> Tuple[float, float, Dict[str, np.ndarray]]:
    """
    计算 MSE + λ‖θ‖² 及其解析梯度 / Loss MSE + λ‖θ‖² and its analytic gradient

    Returns:
        (损失, MSE, 梯度字典) / (loss, mse, gradients)
    """
    n = X.shape[0]
    pred, hidden = forward(params, X)
    err = pred - y
    mse = float(np.mean(err**2))
    loss = mse + lam * squared_norm(params)

    g = 2.0 * err / n
    dz = np.outer(g, params["w2"]) * (1.0 - hidden**2)
    grads = {
        "W1": dz.T @ X + 2.0 * lam * params["W1"],
        "b1": dz.sum(axis=0) + 2.0 * lam * params["b1"],
        "w2": hidden.T @ g + 2.0 * lam * params["w2"],
        "b2": np.array([g.sum()]) + 2.0 * lam * params["b2"],
    }
    return loss, mse, grads


def output_jacobian(params: Dict[str, np.ndarray], X: np.ndarray) -> np.ndarray:
    """逐样本输出对参数的雅可比矩阵 / Per-sample Jacobian of the output, PARAM_ORDER layout"""
    n = X.shape[0]
    _, hidden = forward(params, X)
    dz = params["w2"][None, :] * (1.0 - hidden**2)
    j_w1 = (dz[:, :, None] * X[:, None, :]).reshape(n, -1)
    return np.hstack([j_w1, dz, hidden, np.ones((n, 1))])


def flatten_params(params: Dict[str, np.ndarray]) -> np.ndarray:
    return np.concatenate([params[name].ravel() for name in PARAM_ORDER])


def unflatten_params(flat: np.ndarray, hidden: int, inputs: int = NUM_FEATURES) -> Dict[str, np.ndarray]:
    shapes = {"W1": (hidden, inputs), "b1": (hidden,), "w2": (hidden,), "b2": (1,)}
    expected = sum(int(np.prod(s)) for s in shapes.values())
    if flat.size != expected:
        raise CheckpointFormatError(f"expected {expected} parameters, got {flat.size}")
    params, offset = {}, 0
    for name in PARAM_ORDER:
        size = int(np.prod(shapes[name]))
        params[name] = flat[offset : offset + size].reshape(shapes[name]).copy()
        offset += size
    return params


def init_params(hidden: int, rng: Rng, inputs: int = NUM_FEATURES) -> Dict[str, np.ndarray]:
    gen = rng.generator
    return {
        "W1": gen.normal(0.0, 1.0 / np.sqrt(inputs), size=(hidden, inputs)),
        "b1": np.zeros(hidden),
        "w2": gen.normal(0.0, 1.0 / np.sqrt(hidden), size=hidden),
        "b2": np.zeros(1),
    }


@dataclass(frozen=True)
class ErrorReport:
    """误差直方图与MSE / Error histogram and MSE"""

    histogram: List[Tuple[float, float, int]]
    mse: float
    errors: np.ndarray = field(repr=False)

    @property
    def zero_bin(self) -> int:
        for index, (lo, hi, _) in enumerate(self.histogram):
            if lo <= 0.0 < hi:
                return index
        return len(self.histogram) - 1


@dataclass
class WorkloadModel:
    """
    已训练的工作量模型 / Fitted workload model

    输入按特征做 z-score 归一化；目标（可先取对数）映射到 [-1, 1]。
    Inputs are z-scored per feature; targets (optionally log-transformed) are
    min-max mapped to [-1, 1]. MSE figures are reported on that scale.
    """

    hidden: int
    params: Dict[str, np.ndarray]
    lam: float
    input_mean: np.ndarray
    input_std: np.ndarray
    target_low: float
    target_high: float
    transform: str = "log"
    omega_max: float = float("inf")
    train_mse: float = float("nan")
    gamma: float = float("nan")
    mse_history: List[float] = field(default_factory=list)
    loss_history: List[float] = field(default_factory=list)
    lambda_history: List[float] = field(default_factory=list)
    fitted: bool = True

    # 归一化 / normalization

    def normalize_inputs(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.input_mean) / self.input_std

    def denormalize_inputs(self, Xn: np.ndarray) -> np.ndarray:
        return np.asarray(Xn, dtype=np.float64) * self.input_std + self.input_mean

    def normalize_targets(self, y: np.ndarray) -> np.ndarray:
        t = np.log(y) if self.transform == "log" else np.asarray(y, dtype=np.float64)
        return 2.0 * (t - self.target_low) / (self.target_high - self.target_low) - 1.0

    def denormalize_targets(self, yn: np.ndarray) -> np.ndarray:
        t = (np.asarray(yn) + 1.0) * (self.target_high - self.target_low) / 2.0 + self.target_low
        return np.exp(t) if self.transform == "log" else t

    # 推断 / inference

    def _check_fitted(self) -> None:
        if not self.fitted:
            raise ModelNotFittedError("模型尚未训练 / model has not been fitted")

    def predict_normalized(self, X: np.ndarray) -> np.ndarray:
        self._check_fitted()
        pred, _ = forward(self.params, self.normalize_inputs(np.atleast_2d(X)))
        return pred

    def estimate_batch(self, vectors: Sequence[FeatureVector]) -> np.ndarray:
        """批量估计，输出截断到 (0, Ω_max] / Batch estimate clamped to (0, Ω_max]"""
        self._check_fitted()
        if len(vectors) == 0:
            return np.zeros(0)
        X = np.vstack([v.to_array() for v in vectors])
        raw = self.denormalize_targets(self.predict_normalized(X))
        floor = self.omega_max * 1e-12 if np.isfinite(self.omega_max) else 1e-12
        return np.clip(raw, floor, self.omega_max)

    def estimate(self, v: FeatureVector) -> float:
        return float(self.estimate_batch([v])[0])

    def error_report(self, records: Sequence[TrainingRecord]) -> ErrorReport:
        """
        有符号误差直方图（20个区间）与MSE / Signed-error histogram (20 bins) and MSE

        误差 = 归一化目标 − 归一化输出 / error = normalized target − normalized output
        """
        if not records:
            raise InsufficientDataError("error report needs at least one record")
        X, y = records_to_arrays(records)
        errors = self.normalize_targets(y) - self.predict_normalized(X)
        mse = float(np.mean(errors**2))
        lo, hi = float(errors.min()), float(errors.max())
        if hi - lo < 1e-12:
            # 退化情形：零点落在中间区间内部 / degenerate: zero sits inside a middle bin
            width = 1.0 / HISTOGRAM_BINS
            lo, hi = lo - 0.5 + width / 2.0, lo + 0.5 + width / 2.0
        counts, edges = np.histogram(errors, bins=HISTOGRAM_BINS, range=(lo, hi))
        histogram = [
            (float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(HISTOGRAM_BINS)
        ]
        return ErrorReport(histogram=histogram, mse=mse, errors=errors)

    # 持久化 / persistence

    def save(self, path: str) -> None:
        write_checkpoint(
            path,
            "workload-model",
            {
                "layers": [NUM_FEATURES, self.hidden, 1],
                "transform": [self.transform],
                "lambda": [self.lam],
                "input_mean": list(self.input_mean),
                "input_std": list(self.input_std),
                "target_range": [self.target_low, self.target_high],
                "omega_max": [self.omega_max],
                "train_mse": [self.train_mse],
            },
            flatten_params(self.params),
        )

    @classmethod
    def load(cls, path: str) -> "WorkloadModel":
        kind, header, flat = read_checkpoint(path)
        if kind != "workload-model":
            raise CheckpointFormatError(f"not a workload model checkpoint: {kind}")
        try:
            hidden = int(header["layers"][1])
            return cls(
                hidden=hidden,
                params=unflatten_params(flat, hidden),
                lam=float(header["lambda"][0]),
                input_mean=np.array([float(v) for v in header["input_mean"]]),
                input_std=np.array([float(v) for v in header["input_std"]]),
                target_low=float(header["target_range"][0]),
                target_high=float(header["target_range"][1]),
                transform=header["transform"][0],
                omega_max=float(header["omega_max"][0]),
                train_mse=float(header["train_mse"][0]),
            )
        except (KeyError, IndexError, ValueError) as e:
            raise CheckpointFormatError(f"检查点头部不完整: {e} / incomplete checkpoint header: {e}")


@dataclass(frozen=True)
class TrainCfg:
    """TWE训练配置 / TWE training configuration"""

    hidden: int = 16
    epochs: int = 1000
    learning_rate: float = 0.01
    optimizer: str = "adam"
    initial_lambda: float = 1e-4
    fixed_lambda: bool = False
    lambda_interval: int = 50
    lambda_bounds: Tuple[float, float] = (1e-10, 1e-1)
    target_transform: str = "log"
    seed: int = 0


class WorkloadTrainer:
    """贝叶斯正则化风格的全批量训练器 / Full-batch trainer with Bayesian-style regularization"""

    def __init__(self, cfg: Optional[TrainCfg] = None):
        self.cfg = cfg or TrainCfg()
        self.logger = logging.getLogger(__name__)

    def fit(self, records: Sequence[TrainingRecord]) -> WorkloadModel:
        """
        训练工作量模型 / Fit a workload model

        Args:
            records: 训练记录（至少50条）/ Training records (at least 50)

        Returns:
            训练好的模型 / Fitted model

        Raises:
            InsufficientDataError: 记录不足 / Too few records
            NonfiniteLossError: 损失非有限 / Loss became non-finite
        """
        cfg = self.cfg
        if len(records) < MIN_RECORDS:
            raise InsufficientDataError(
                f"训练记录不足: {len(records)} < {MIN_RECORDS} / not enough records: {len(records)} < {MIN_RECORDS}"
            )

        X, y = records_to_arrays(records)
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        std = np.where(std > 0, std, 1.0)
        t = np.log(y) if cfg.target_transform == "log" else y
        low, high = float(t.min()), float(t.max())
        if high - low <= 0:
            high = low + 1.0

        model = WorkloadModel(
            hidden=cfg.hidden,
            params=init_params(cfg.hidden, Rng(cfg.seed, 7)),
            lam=cfg.initial_lambda,
            input_mean=mean,
            input_std=std,
            target_low=low,
            target_high=high,
            transform=cfg.target_transform,
            omega_max=10.0 * float(y.max()),
        )
        Xn = model.normalize_inputs(X)
        yn = model.normalize_targets(y)
        optimizer = build_optimizer(cfg.optimizer, cfg.learning_rate)
        n = len(yn)

        lam = cfg.initial_lambda
        _, mse0, _ = loss_and_gradient(model.params, Xn, yn, lam)
        beta = n / (2.0 * max(mse0 * n, 1e-12))
        alpha = lam * beta * n

        self.logger.info(
            f"开始训练TWE模型: {n} 条记录, {cfg.epochs} 轮 / Training TWE model: {n} records, {cfg.epochs} epochs"
        )
        last_finite = mse0
        for epoch in range(1, cfg.epochs + 1):
            loss, mse, grads = loss_and_gradient(model.params, Xn, yn, lam)
            if not np.isfinite(loss):
                raise NonfiniteLossError(
                    "TWE训练损失非有限 / TWE training loss is non-finite",
                    {
                        "epoch": epoch,
                        "last_finite_mse": last_finite,
                        "lambda": lam,
                        "max_abs_param": float(np.max(np.abs(flatten_params(model.params)))),
                    },
                )
            last_finite = mse
            model.mse_history.append(mse)
            model.loss_history.append(loss)
            model.lambda_history.append(lam)
            optimizer.step(model.params, grads)

            if not cfg.fixed_lambda and epoch % cfg.lambda_interval == 0:
                alpha, beta, model.gamma = self._evidence_update(model.params, Xn, yn, alpha, beta)
                lam = float(np.clip(alpha / (beta * n), *cfg.lambda_bounds))
                self.logger.debug(
                    f"第{epoch}轮 λ={lam:.3e} γ={model.gamma:.2f} / epoch {epoch} lambda={lam:.3e} gamma={model.gamma:.2f}"
                )

        _, model.train_mse, _ = loss_and_gradient(model.params, Xn, yn, lam)
        model.lam = lam
        self.logger.info(
            f"TWE模型训练完成, MSE={model.train_mse:.3e} / TWE model fitted, MSE={model.train_mse:.3e}"
        )
        return model

    @staticmethod
    def _evidence_update(
        params: Dict[str, np.ndarray], X: np.ndarray, y: np.ndarray, alpha: float, beta: float
    ) -> Tuple[float, float, float]:
        """
        证据框架下的 α、β 重估 / Evidence re-estimation of α and β

        γ = Σ βμ/(βμ + α)（μ 为 JᵀJ 的特征值），α = γ/(2‖θ‖²)，β = (N − γ)/(2·SSE)
        γ = Σ βμ/(βμ + α) over eigenvalues μ of JᵀJ; α = γ/(2‖θ‖²); β = (N − γ)/(2·SSE)
        """
        n = len(y)
        pred, _ = forward(params, X)
        sse = max(float(np.sum((pred - y) ** 2)), 1e-12)
        weight_norm = max(squared_norm(params), 1e-12)
        jac = output_jacobian(params, X)
        eig = np.clip(np.linalg.eigvalsh(jac.T @ jac), 0.0, None)
        gamma = float(np.sum(beta * eig / (beta * eig + alpha)))
        alpha = max(gamma / (2.0 * weight_norm), 1e-12)
        beta = max(n - gamma, 1e-12) / (2.0 * sse)
        return alpha, beta, gamma


class GroundTruthEstimator:
    """以真实工作量函数作为估计器（无噪声）/ Noise-free ground truth used as an estimator"""

    def estimate(self, v: FeatureVector) -> float:
        return base_workload(v)

    def estimate_batch(self, vectors: Sequence[FeatureVector]) -> np.ndarray:
        return np.array([base_workload(v) for v in vectors], dtype=np.float64)


class MeanWorkloadEstimator:
    """
    通用估计器：对所有GoP和队列返回同一平均工作量
    Universal estimator: one mean workload for every GoP and queue
    """

    def __init__(self, mean_workload: float):
        if not mean_workload > 0:
            raise ValueError(f"mean workload must be positive: {mean_workload}")
        self.mean_workload = float(mean_workload)

    @classmethod
    def from_records(cls, records: Sequence[TrainingRecord]) -> "MeanWorkloadEstimator":
        if not records:
            raise InsufficientDataError("no records for the universal estimator")
        return cls(float(np.mean([r.actual_workload for r in records])))

    def estimate(self, v: FeatureVector) -> float:
        return self.mean_workload

    def estimate_batch(self, vectors: Sequence[FeatureVector]) -> np.ndarray:
        return np.full(len(vectors), self.mean_workload)


class DigitalTwinEstimator:
    """
    云端DT与边缘DT各自一个模型 / One model per twin (cloud and edge)

    按输入向量中的处理器字段分派 / Dispatched on the processor field of the input.
    """

    def __init__(self, cloud_model: WorkloadModel, edge_model: WorkloadModel):
        self.models = {Processor.CLOUD: cloud_model, Processor.EDGE: edge_model}

    def model_for(self, processor: float) -> WorkloadModel:
        return self.models[Processor(int(round(processor)))]

    def estimate(self, v: FeatureVector) -> float:
        return self.model_for(v.computing_processor).estimate(v)

    def estimate_batch(self, vectors: Sequence[FeatureVector]) -> np.ndarray:
        out = np.zeros(len(vectors))
        for processor, model in self.models.items():
            idx = [i for i, v in enumerate(vectors) if int(round(v.computing_processor)) == processor]
            if idx:
                out[idx] = model.estimate_batch([vectors[i] for i in idx])
        return out


def split_by_processor(
    records: Sequence[TrainingRecord],
) -> Tuple[List[TrainingRecord], List[TrainingRecord]]:
    cloud = [r for r in records if int(round(r.features.computing_processor)) == Processor.CLOUD]
    edge = [r for r in records if int(round(r.features.computing_processor)) == Processor.EDGE]
    return cloud, edge

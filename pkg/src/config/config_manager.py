"""
配置管理器 / Configuration Manager

负责加载、解析和验证实验配置文件（YAML，按节组织）
Responsible for loading, parsing and validating experiment configuration
files (sectioned YAML)
"""

import copy
import logging
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import yaml

from src.models.core import ALL_QUEUES
from src.models.queues import QueueParams, make_queue_spec
from src.services.dueling_dqn import RLConfig
from src.services.physical_plant import EDGE_DISPATCH_MODES, ArrivalConfig, Surge
from src.services.schedulers import SCHEDULER_NAMES
from src.services.simulation import SimulationConfig
from src.services.workload_estimator import TrainCfg


class ConfigurationError(Exception):
    """配置错误（可带行号）/ Configuration error, optionally carrying a line number"""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


DEFAULT_CONFIG: Dict[str, Any] = {
    "simulation": {
        "seed": 2024,
        "slot_length": 0.5,
        "slots": 100,
        "sync_threshold": 0.1,
        "t_cap": None,
        "clamp_delay_lengths": True,
        "record_threshold": 0.05,
        "refit_interval": 0,
        "refit_min_records": 200,
        "refit_max_records": 5000,
        "edge_dispatch": "fluid",
    },
    "queues": {
        "q1": {"f_ghz": 20.0, "kappa": 5.0, "l_max": 1.5},
        "q2": {"f_ghz": 15.0, "kappa": 5.0, "l_max": 1.5},
        "q3": {"f_ghz": 10.0, "kappa": 5.0, "l_max": 1.5},
        "q4": {"f_ghz": 10.0, "kappa": 4.0, "l_max": 1.5},
        "q5": {"f_ghz": 8.0, "kappa": 4.0, "l_max": 1.5},
    },
    "arrivals": {
        "gops_per_slot": 3.0,
        "poisson": True,
        "bit_rate_min": 1.5e6,
        "bit_rate_max": 3.0e6,
        "mean_requests": 4.0,
        "request_mix": [0.2, 0.4, 0.4],
        "surges": [],
        "content_profiles": [[0.2, 0.2], [0.5, 0.5], [0.8, 0.3], [0.4, 0.9]],
        "resolutions": [[1280, 720], [1920, 1080]],
        "frames_per_gop": 16,
        "analysis_width": 64,
        "analysis_height": 36,
    },
    "objective": {
        "d_bar": 1.8,
        "v_weight": 10.0,
        "i_max": 0.5,
    },
    "twe": {
        "hidden": 16,
        "epochs": 1000,
        "learning_rate": 0.01,
        "optimizer": "adam",
        "initial_lambda": 1e-4,
        "fixed_lambda": False,
        "lambda_interval": 50,
        "target_transform": "log",
        "records": 9970,
        "train_fraction": 0.8,
        "noise": 0.05,
        "mse_threshold": 1e-3,
        "seed": 7,
    },
    "rl": {
        "episodes": 1000,
        "steps": 100,
        "hidden": [64, 64],
        "gamma": 0.99,
        "learning_rate": 1e-4,
        "target_mode": "hard",
        "target_period": 100,
        "tau": 1e-3,
        "memory_capacity": 5000,
        "batch_size": 32,
        "epsilon_start": 1.0,
        "epsilon_end": 0.05,
        "epsilon_decay_fraction": 0.3,
        "reward_split": "last",
        "eval_seeds": 20,
    },
    "output": {"directory": "./results"},
    "schedulers": ["rr", "pf", "ummkp", "ddqn", "dt-ddqn"],
}

SURGE_KEYS = ("slot", "duration", "high_mix")

# (节, 键) -> (检查, 要求) / (section, key) -> (check, requirement)
RANGE_CHECKS: Dict[Tuple[str, str], Tuple[Callable[[Any], bool], str]] = {
    ("simulation", "slots"): (lambda v: v > 0, "a positive integer"),
    ("simulation", "slot_length"): (lambda v: v > 0, "positive"),
    ("simulation", "sync_threshold"): (lambda v: v > 0, "positive"),
    ("simulation", "refit_interval"): (lambda v: v >= 0, "non-negative"),
    ("simulation", "refit_min_records"): (lambda v: v >= 1, "at least 1"),
    ("simulation", "refit_max_records"): (lambda v: v >= 1, "at least 1"),
    ("simulation", "edge_dispatch"): (lambda v: v in EDGE_DISPATCH_MODES, f"one of {list(EDGE_DISPATCH_MODES)}"),
    ("twe", "hidden"): (lambda v: v > 0, "a positive integer"),
    ("twe", "epochs"): (lambda v: v > 0, "a positive integer"),
    ("twe", "lambda_interval"): (lambda v: v > 0, "a positive integer"),
    ("twe", "records"): (lambda v: v > 0, "a positive integer"),
    ("twe", "learning_rate"): (lambda v: v > 0, "positive"),
    ("rl", "episodes"): (lambda v: v > 0, "a positive integer"),
    ("rl", "steps"): (lambda v: v > 0, "a positive integer"),
    ("rl", "target_period"): (lambda v: v > 0, "a positive integer"),
    ("rl", "batch_size"): (lambda v: v > 0, "a positive integer"),
    ("rl", "memory_capacity"): (lambda v: v > 0, "a positive integer"),
    ("rl", "eval_seeds"): (lambda v: v >= 0, "non-negative"),
    ("rl", "learning_rate"): (lambda v: v > 0, "positive"),
    ("rl", "tau"): (lambda v: 0 < v <= 1, "in (0, 1]"),
    ("rl", "hidden"): (
        lambda v: len(v) == 2 and all(isinstance(h, int) and not isinstance(h, bool) and h > 0 for h in v),
        "a list of exactly two positive integers",
    ),
}


class ConfigLoader(yaml.SafeLoader):
    """同时识别 1e-3 这类科学计数法的安全加载器 / Safe loader that also reads floats such as 1e-3"""


ConfigLoader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"^[-+]?(?:[0-9][0-9_]*)(?:\.[0-9_]*)?[eE][-+]?[0-9]+$"),
    list("-+0123456789"),
)


@dataclass(frozen=True)
class ObjectiveConfig:
    d_bar: float = 1.8
    v_weight: float = 10.0
    i_max: float = 0.5


@dataclass(frozen=True)
class TWEConfig:
    """TWE训练实验配置 / TWE training experiment configuration"""

    train: TrainCfg = field(default_factory=TrainCfg)
    records: int = 9970
    train_fraction: float = 0.8
    noise: float = 0.05
    mse_threshold: float = 1e-3


@dataclass(frozen=True)
class ExperimentConfig:
    """完整实验配置 / Complete experiment configuration"""

    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    queues: QueueParams = field(default_factory=QueueParams)
    arrivals: ArrivalConfig = field(default_factory=ArrivalConfig)
    objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)
    twe: TWEConfig = field(default_factory=TWEConfig)
    rl: RLConfig = field(default_factory=RLConfig)
    output_dir: str = "./results"
    schedulers: Tuple[str, ...] = SCHEDULER_NAMES

    @property
    def seed(self) -> int:
        return self.simulation.seed

    def with_overrides(
        self,
        seed: Optional[int] = None,
        schedulers: Optional[List[str]] = None,
        output_dir: Optional[str] = None,
    ) -> "ExperimentConfig":
        """命令行覆盖 / Apply command-line overrides"""
        cfg = self
        if seed is not None:
            cfg = replace(cfg, simulation=replace(cfg.simulation, seed=int(seed)))
        if schedulers:
            unknown = [s for s in schedulers if s not in SCHEDULER_NAMES]
            if unknown:
                raise ConfigurationError(f"unknown scheduler(s) {unknown}; choose from {list(SCHEDULER_NAMES)}")
            cfg = replace(cfg, schedulers=tuple(schedulers))
        if output_dir is not None:
            cfg = replace(cfg, output_dir=output_dir)
        return cfg


def _line_index(node: yaml.Node, path: Tuple[str, ...], out: Dict[Tuple[str, ...], int]) -> None:
    """记录每个键的行号（1起始）/ Record the 1-based line of every mapping key"""
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            key_path = path + (str(key_node.value),)
            out[key_path] = key_node.start_mark.line + 1
            _line_index(value_node, key_path, out)
    elif isinstance(node, yaml.SequenceNode):
        for index, item in enumerate(node.value):
            item_path = path + (str(index),)
            out[item_path] = item.start_mark.line + 1
            _line_index(item, item_path, out)


class ConfigManager:
    """配置管理器 / Configuration Manager"""

    def __init__(self, config_path: Optional[str] = None):
        """
        初始化配置管理器 / Initialize configuration manager

        Args:
            config_path: 配置文件路径 / Configuration file path
        """
        self.config_path = config_path or "config.yaml"
        self.config_data: Dict[str, Any] = {}
        self.lines: Dict[Tuple[str, ...], int] = {}
        self.logger = logging.getLogger(__name__)

    def load_config(self) -> ExperimentConfig:
        """
        加载配置文件 / Load configuration file

        Returns:
            实验配置 / Experiment configuration

        Raises:
            ConfigurationError: 配置文件加载、解析或校验失败 / Loading, parsing or validation failed
        """
        config_path = Path(self.config_path)

        # 如果配置文件不存在，创建默认配置 / If config file doesn't exist, create default config
        if not config_path.exists():
            self.logger.warning(
                f"配置文件不存在，创建默认配置: {config_path} / Config file not found, creating default config: {config_path}"
            )
            self._create_default_config()

        try:
            text = config_path.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigurationError(f"配置文件读取失败 / Configuration file reading failed: {e}")
        config = self.parse(text)
        self.logger.info(f"配置文件加载成功: {config_path} / Configuration loaded successfully: {config_path}")
        return config

    def parse(self, text: str) -> ExperimentConfig:
        """解析YAML文本 / Parse YAML text into an ExperimentConfig"""
        try:
            node = yaml.compose(text, Loader=ConfigLoader)
            data = yaml.load(text, Loader=ConfigLoader) or {}
        except yaml.YAMLError as e:
            mark = getattr(e, "problem_mark", None)
            raise ConfigurationError(
                f"配置文件解析失败 / Configuration file parsing failed: {e}",
                mark.line + 1 if mark is not None else None,
            )
        if not isinstance(data, dict):
            raise ConfigurationError("top level must be a mapping", 1)

        self.lines = {}
        if node is not None:
            _line_index(node, (), self.lines)
        self._check_keys(data, DEFAULT_CONFIG, ())
        self.config_data = self._merge(copy.deepcopy(DEFAULT_CONFIG), data)
        self._check_ranges(self.config_data)
        return self._build(self.config_data)

    def _line(self, *path: str) -> Optional[int]:
        return self.lines.get(tuple(path))

    def _check_keys(self, data: Dict[str, Any], schema: Dict[str, Any], path: Tuple[str, ...]) -> None:
        """拒绝未知键并检查类型 / Reject unknown keys and check value types"""
        section = ".".join(path) or "top level"
        for key, value in data.items():
            key_path = path + (str(key),)
            if key not in schema:
                raise ConfigurationError(f"unknown key '{key}' in section '{section}'", self._line(*key_path))
            expected = schema[key]
            if isinstance(expected, dict):
                if not isinstance(value, dict):
                    raise ConfigurationError(f"'{key}' must be a mapping", self._line(*key_path))
                self._check_keys(value, expected, key_path)
            elif key == "surges":
                self._check_surges(value, key_path)
            elif expected is None or value is None:
                continue
            elif isinstance(expected, bool):
                if not isinstance(value, bool):
                    raise ConfigurationError(f"'{key}' must be true or false, got {value!r}", self._line(*key_path))
            elif isinstance(expected, (int, float)):
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise ConfigurationError(f"'{key}' must be a number, got {value!r}", self._line(*key_path))
                if isinstance(expected, int) and not isinstance(value, int):
                    raise ConfigurationError(f"'{key}' must be an integer, got {value!r}", self._line(*key_path))
            elif isinstance(expected, str) and not isinstance(value, str):
                raise ConfigurationError(f"'{key}' must be a string, got {value!r}", self._line(*key_path))
            elif isinstance(expected, list) and not isinstance(value, list):
                raise ConfigurationError(f"'{key}' must be a list, got {value!r}", self._line(*key_path))

    def _check_surges(self, value: Any, path: Tuple[str, ...]) -> None:
        if not isinstance(value, list):
            raise ConfigurationError("'surges' must be a list", self._line(*path))
        for index, surge in enumerate(value):
            item_path = path + (str(index),)
            if not isinstance(surge, dict):
                raise ConfigurationError("each surge must be a mapping", self._line(*item_path))
            for key in surge:
                if key not in SURGE_KEYS:
                    raise ConfigurationError(
                        f"unknown key '{key}' in section 'arrivals.surges'", self._line(*item_path, str(key))
                    )
            if "slot" not in surge:
                raise ConfigurationError("a surge needs a 'slot'", self._line(*item_path))

    def _check_ranges(self, data: Dict[str, Any]) -> None:
        """合并后检查值域，错误指向该键所在行 / Check value ranges after the merge, pointing at the key's line"""
        for (section, key), (check, requirement) in RANGE_CHECKS.items():
            value = data[section][key]
            if value is None:
                continue
            try:
                valid = bool(check(value))
            except TypeError:
                valid = False
            if not valid:
                raise ConfigurationError(
                    f"'{section}.{key}' must be {requirement}, got {value!r}",
                    self._line(section, key) or self._line(section),
                )

    def _merge(self, base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
        for key, value in override.items():
            if isinstance(value, dict) and isinstance(base.get(key), dict):
                base[key] = self._merge(base[key], value)
            else:
                base[key] = value
        return base

    def _build(self, data: Dict[str, Any]) -> ExperimentConfig:
        """构造各节配置对象，值域错误带上节所在行 / Build section objects; range errors carry the section line"""
        sections = {
            "simulation": lambda s: SimulationConfig(**s),
            "queues": self._build_queues,
            "arrivals": self._build_arrivals,
            "objective": lambda s: ObjectiveConfig(**s),
            "twe": self._build_twe,
            "rl": lambda s: RLConfig(**{**s, "hidden": tuple(s["hidden"])}),
        }
        built = {}
        for name, factory in sections.items():
            try:
                built[name] = factory(data[name])
            except (ValueError, TypeError) as e:
                raise ConfigurationError(f"invalid section '{name}': {e}", self._line(name))

        objective = built["objective"]
        if not objective.i_max > 0 or not objective.d_bar > 0:
            raise ConfigurationError("i_max and d_bar must be positive", self._line("objective"))

        schedulers = tuple(data["schedulers"])
        unknown = [s for s in schedulers if s not in SCHEDULER_NAMES]
        if unknown:
            raise ConfigurationError(
                f"unknown scheduler(s) {unknown}; choose from {list(SCHEDULER_NAMES)}", self._line("schedulers")
            )

        return ExperimentConfig(
            simulation=built["simulation"],
            queues=built["queues"],
            arrivals=built["arrivals"],
            objective=objective,
            twe=built["twe"],
            rl=built["rl"],
            output_dir=str(data["output"]["directory"]),
            schedulers=schedulers,
        )

    @staticmethod
    def _build_queues(section: Dict[str, Any]) -> QueueParams:
        specs = []
        for q in ALL_QUEUES:
            entry = section[f"q{int(q)}"]
            specs.append(make_queue_spec(q, float(entry["f_ghz"]), float(entry["kappa"]), float(entry["l_max"])))
        return QueueParams(tuple(specs))

    @staticmethod
    def _build_arrivals(section: Dict[str, Any]) -> ArrivalConfig:
        surges = tuple(
            Surge(
                slot=int(s["slot"]),
                duration=int(s.get("duration", 1)),
                high_mix=float(s.get("high_mix", 0.8)),
            )
            for s in section["surges"]
        )
        if len(section["request_mix"]) != 3:
            raise ValueError("request_mix needs exactly three entries")
        return ArrivalConfig(
            gops_per_slot=float(section["gops_per_slot"]),
            poisson=bool(section["poisson"]),
            bit_rate_range=(float(section["bit_rate_min"]), float(section["bit_rate_max"])),
            mean_requests=float(section["mean_requests"]),
            request_mix=tuple(float(p) for p in section["request_mix"]),
            surges=surges,
            profiles=tuple((float(t), float(m)) for t, m in section["content_profiles"]),
            resolutions=tuple((int(w), int(h)) for w, h in section["resolutions"]),
            frames_per_gop=int(section["frames_per_gop"]),
            analysis_size=(int(section["analysis_width"]), int(section["analysis_height"])),
        )

    @staticmethod
    def _build_twe(section: Dict[str, Any]) -> TWEConfig:
        if section["optimizer"] not in ("adam", "gd"):
            raise ValueError(f"optimizer must be 'adam' or 'gd': {section['optimizer']}")
        if section["target_transform"] not in ("log", "identity"):
            raise ValueError(f"target_transform must be 'log' or 'identity': {section['target_transform']}")
        if not 0.0 <= section["noise"] <= 0.2:
            raise ValueError(f"noise must lie in [0, 0.2]: {section['noise']}")
        if not 0.0 < section["train_fraction"] < 1.0:
            raise ValueError(f"train_fraction must lie in (0, 1): {section['train_fraction']}")
        train = TrainCfg(
            hidden=int(section["hidden"]),
            epochs=int(section["epochs"]),
            learning_rate=float(section["learning_rate"]),
            optimizer=section["optimizer"],
            initial_lambda=float(section["initial_lambda"]),
            fixed_lambda=bool(section["fixed_lambda"]),
            lambda_interval=int(section["lambda_interval"]),
            target_transform=section["target_transform"],
            seed=int(section["seed"]),
        )
        return TWEConfig(
            train=train,
            records=int(section["records"]),
            train_fraction=float(section["train_fraction"]),
            noise=float(section["noise"]),
            mse_threshold=float(section["mse_threshold"]),
        )

    def _create_default_config(self) -> None:
        """
        创建默认配置文件 / Create default configuration file
        """
        try:
            path = Path(self.config_path)
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w", encoding="utf-8") as file:
                yaml.safe_dump(DEFAULT_CONFIG, file, allow_unicode=True, sort_keys=False)
            self.logger.info(f"默认配置文件已创建: {path} / Default config file created: {path}")
        except OSError as e:
            raise ConfigurationError(f"创建默认配置文件失败 / Failed to create default config file: {e}")

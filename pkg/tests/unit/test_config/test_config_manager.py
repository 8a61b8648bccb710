"""
ConfigManager单元测试 / ConfigManager Unit Tests

测试配置管理器的各项功能，包括默认配置创建、键与类型校验、行号报告和命令行覆盖
Test various functions of the configuration manager, including default config
creation, key and type validation, line-number reporting and command-line overrides
"""

import tempfile
from pathlib import Path

import pytest
import yaml

from src.config.config_manager import (
    DEFAULT_CONFIG,
    ConfigManager,
    ConfigurationError,
    ExperimentConfig,
)


class TestConfigManager:
    """ConfigManager测试类 / ConfigManager test class"""

    def setup_method(self):
        """测试方法设置 / Test method setup"""
        self.temp_dir = tempfile.mkdtemp()
        self.config_path = Path(self.temp_dir) / "test_config.yaml"

    def create_test_config(self, config_data: dict):
        """创建测试配置文件 / Create test configuration file"""
        with open(self.config_path, "w", encoding="utf-8") as f:
            yaml.dump(config_data, f, default_flow_style=False, allow_unicode=True)

    def write_text(self, text: str):
        self.config_path.write_text(text, encoding="utf-8")

    def test_load_valid_config(self):
        """测试加载有效配置 / Test loading valid configuration"""
        self.create_test_config(
            {
                "simulation": {"seed": 9, "slots": 40},
                "rl": {"hidden": [32, 16], "episodes": 5},
                "output": {"directory": "./out"},
                "schedulers": ["rr", "dt-ddqn"],
            }
        )
        config = ConfigManager(str(self.config_path)).load_config()

        assert config.seed == 9
        assert config.simulation.slots == 40
        assert config.simulation.slot_length == 0.5
        assert config.rl.hidden == (32, 16)
        assert config.rl.episodes == 5
        assert config.output_dir == "./out"
        assert config.schedulers == ("rr", "dt-ddqn")

    def test_create_default_config_when_missing(self):
        """测试配置文件不存在时创建默认配置 / Test default config creation when the file is missing"""
        path = Path(self.temp_dir) / "nested" / "config.yaml"
        config = ConfigManager(str(path)).load_config()

        assert path.exists()
        assert yaml.safe_load(path.read_text(encoding="utf-8"))["simulation"]["seed"] == 2024
        assert config.seed == DEFAULT_CONFIG["simulation"]["seed"]
        assert config.queues.capacity(1) == pytest.approx(20e9 * 5)
        assert config.twe.records == 9970
        assert config.twe.train.hidden == 16

    def test_example_config_parses(self):
        """测试示例配置可被加载 / Test the shipped example config loads"""
        example = Path(__file__).resolve().parents[3] / "config.yaml.example"
        config = ConfigManager(str(example)).load_config()
        assert config.arrivals.bit_rate_range == (1.5e6, 3.0e6)
        assert config.arrivals.surges[0].slot == 50
        assert config.rl.tau == 1e-3

    def test_scientific_notation_floats(self):
        """测试 1e-3 形式的浮点数 / Test floats written as 1e-3"""
        self.write_text("twe:\n  mse_threshold: 1e-3\n  initial_lambda: 5E-5\nrl:\n  learning_rate: 1e-4\n")
        config = ConfigManager(str(self.config_path)).load_config()
        assert config.twe.mse_threshold == 1e-3
        assert config.twe.train.initial_lambda == 5e-5
        assert config.rl.learning_rate == 1e-4

    def test_unknown_key_reports_line(self):
        """测试未知键报告行号 / Test an unknown key reports its line"""
        self.write_text("simulation:\n  seed: 5\n  slotz: 3\n")
        with pytest.raises(ConfigurationError) as exc_info:
            ConfigManager(str(self.config_path)).load_config()
        assert exc_info.value.line == 3
        assert "slotz" in str(exc_info.value)
        assert str(exc_info.value).startswith("line 3:")

    def test_unknown_section(self):
        self.write_text("aws:\n  region: us-east-1\n")
        with pytest.raises(ConfigurationError) as exc_info:
            ConfigManager(str(self.config_path)).load_config()
        assert exc_info.value.line == 1

    def test_wrong_type_reports_line(self):
        self.write_text("simulation:\n  slots: many\n")
        with pytest.raises(ConfigurationError) as exc_info:
            ConfigManager(str(self.config_path)).load_config()
        assert exc_info.value.line == 2

    def test_integer_required(self):
        self.write_text("rl:\n  episodes: 2.5\n")
        with pytest.raises(ConfigurationError):
            ConfigManager(str(self.config_path)).load_config()

    def test_boolean_required(self):
        self.write_text("arrivals:\n  poisson: 1\n")
        with pytest.raises(ConfigurationError):
            ConfigManager(str(self.config_path)).load_config()

    def test_out_of_range_value_reports_key_line(self):
        """测试取值越界时报告该键所在行 / Test out-of-range values report the line of their key"""
        self.write_text("objective:\n  d_bar: 1.8\nsimulation:\n  slot_length: 0\n")
        with pytest.raises(ConfigurationError) as exc_info:
            ConfigManager(str(self.config_path)).load_config()
        assert exc_info.value.line == 4
        assert "simulation.slot_length" in str(exc_info.value)

    @pytest.mark.parametrize(
        "text, line",
        [
            ("twe:\n  lambda_interval: 0\n", 2),
            ("twe:\n  hidden: 4\n  epochs: 0\n", 3),
            ("rl:\n  target_period: 0\n", 2),
            ("rl:\n  episodes: 3\n  batch_size: 0\n", 3),
            ("rl:\n  memory_capacity: -1\n", 2),
            ("rl:\n  hidden: [8]\n", 2),
            ("rl:\n  hidden: [8, 0]\n", 2),
            ("rl:\n  tau: 0\n", 2),
            ("rl:\n  eval_seeds: -2\n", 2),
            ("simulation:\n  seed: 1\n  slots: 0\n", 3),
            ("simulation:\n  edge_dispatch: teleport\n", 2),
        ],
    )
    def test_range_checks_report_key_line(self, text, line):
        """测试非法取值在加载时即被拒绝 / Test invalid values are rejected at load time"""
        self.write_text(text)
        with pytest.raises(ConfigurationError) as exc_info:
            ConfigManager(str(self.config_path)).load_config()
        assert exc_info.value.line == line

    def test_range_boundaries_accepted(self):
        self.write_text(
            "simulation:\n  refit_interval: 0\n  edge_dispatch: gop\nrl:\n  tau: 1.0\n  eval_seeds: 0\n"
        )
        config = ConfigManager(str(self.config_path)).load_config()
        assert config.simulation.refit_interval == 0
        assert config.simulation.edge_dispatch == "gop"
        assert config.rl.tau == 1.0
        assert config.rl.eval_seeds == 0

    def test_invalid_twe_options(self):
        self.write_text("twe:\n  optimizer: sgd\n")
        with pytest.raises(ConfigurationError):
            ConfigManager(str(self.config_path)).load_config()
        self.write_text("twe:\n  noise: 0.5\n")
        with pytest.raises(ConfigurationError):
            ConfigManager(str(self.config_path)).load_config()

    def test_invalid_yaml(self):
        self.write_text("simulation: [unclosed\n")
        with pytest.raises(ConfigurationError):
            ConfigManager(str(self.config_path)).load_config()

    def test_top_level_must_be_mapping(self):
        self.write_text("- 1\n- 2\n")
        with pytest.raises(ConfigurationError):
            ConfigManager(str(self.config_path)).load_config()

    def test_unknown_scheduler(self):
        self.create_test_config({"schedulers": ["rr", "greedy"]})
        with pytest.raises(ConfigurationError):
            ConfigManager(str(self.config_path)).load_config()

    def test_surges(self):
        """测试突发请求配置 / Test surge configuration"""
        self.create_test_config({"arrivals": {"surges": [{"slot": 10, "duration": 5, "high_mix": 0.9}, {"slot": 30}]}})
        config = ConfigManager(str(self.config_path)).load_config()
        first, second = config.arrivals.surges
        assert (first.slot, first.duration, first.high_mix) == (10, 5, 0.9)
        assert (second.duration, second.high_mix) == (1, 0.8)

    def test_surge_unknown_key(self):
        self.write_text("arrivals:\n  surges:\n    - slot: 3\n      length: 2\n")
        with pytest.raises(ConfigurationError) as exc_info:
            ConfigManager(str(self.config_path)).load_config()
        assert exc_info.value.line == 4

    def test_custom_queue_capacity(self):
        self.create_test_config({"queues": {"q5": {"f_ghz": 4.0, "kappa": 2.0, "l_max": 1.0}}})
        config = ConfigManager(str(self.config_path)).load_config()
        assert config.queues.capacity(5) == pytest.approx(8e9)
        assert config.queues.l_max_vector == (1.5, 1.5, 1.5, 1.5, 1.0)


class TestOverrides:
    """命令行覆盖测试类 / Command-line override test class"""

    def test_overrides(self):
        config = ExperimentConfig().with_overrides(seed=42, schedulers=["pf"], output_dir="/tmp/x")
        assert config.seed == 42
        assert config.schedulers == ("pf",)
        assert config.output_dir == "/tmp/x"

    def test_no_overrides_keep_config(self):
        config = ExperimentConfig()
        assert config.with_overrides() == config

    def test_unknown_scheduler_override(self):
        with pytest.raises(ConfigurationError):
            ExperimentConfig().with_overrides(schedulers=["fifo"])

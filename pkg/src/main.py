#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
云边协同转码仿真主程序 / Cloud-Edge Transcoding Simulator Main Application

命令行入口，提供 run / compare / train-twe / gen-trace 子命令。
Command-line entry point providing the run / compare / train-twe / gen-trace subcommands.
"""

import argparse
import logging
import sys
from typing import List, Optional

from src.config.config_manager import ConfigManager, ConfigurationError
from src.exceptions.simulation_exceptions import NonfiniteLossError, TranscodingSimError
from src.services.experiment_controller import ExperimentController
from src.services.schedulers import SCHEDULER_NAMES

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_NONFINITE = 3


def setup_logging(debug: bool = False, log_file: str = "dt_transcode.log"):
    """
    设置日志配置 / Setup logging configuration

    Args:
        debug: 是否启用调试模式 / Whether to enable debug mode
        log_file: 日志文件路径 / Log file path
    """
    level = logging.DEBUG if debug else logging.INFO

    logging.basicConfig(
        level=level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=[
            logging.StreamHandler(),
            logging.FileHandler(log_file, encoding="utf-8"),
        ],
    )


def parse_arguments(argv: Optional[List[str]] = None):
    """
    解析命令行参数 / Parse command line arguments

    Returns:
        解析后的参数 / Parsed arguments
    """
    parser = argparse.ArgumentParser(
        prog="dt-transcode",
        description="数字孪生辅助的云边转码仿真 / Digital-twin-assisted cloud-edge transcoding simulator",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument(
        "--config",
        "-c",
        type=str,
        default="config.yaml",
        help="配置文件路径 / Configuration file path (default: config.yaml)",
    )
    parser.add_argument("--seed", type=int, default=None, help="随机种子 / Random seed")
    parser.add_argument(
        "--scheduler",
        "-s",
        action="append",
        choices=SCHEDULER_NAMES,
        default=None,
        help="调度器（可重复）/ Scheduler, repeatable",
    )
    parser.add_argument("--out", "-o", type=str, default=None, help="输出目录 / Output directory")
    parser.add_argument("--debug", action="store_true", help="启用调试模式 / Enable debug mode")
    parser.add_argument(
        "--log-file", type=str, default="dt_transcode.log", help="日志文件 / Log file"
    )

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", help="运行单个调度器 / Run one scheduler").add_argument(
        "--trace", type=str, default=None, help="回放到达轨迹 / Replay an arrival trace"
    )
    compare = sub.add_parser("compare", help="比较调度器 / Compare schedulers")
    compare.add_argument(
        "--trace", type=str, default=None, help="回放到达轨迹 / Replay an arrival trace"
    )
    compare.add_argument(
        "--eval-seeds",
        type=int,
        default=None,
        help="新种子评估数（默认 rl.eval_seeds，0 跳过）/ Fresh-seed evaluations (default: rl.eval_seeds, 0 skips)",
    )
    sub.add_parser("train-twe", help="训练工作量估计模型 / Train the workload estimator")
    gen = sub.add_parser("gen-trace", help="生成到达轨迹 / Generate an arrival trace")
    gen.add_argument("--slots", type=int, default=None, help="时隙数 / Number of slots")
    gen.add_argument("--path", type=str, default=None, help="轨迹文件路径 / Trace file path")

    return parser.parse_args(argv)


def execute(args) -> int:
    """执行子命令并返回退出码 / Execute the subcommand and return the exit code"""
    logger = logging.getLogger(__name__)
    try:
        config = ConfigManager(args.config).load_config()
        config = config.with_overrides(seed=args.seed, schedulers=args.scheduler, output_dir=args.out)
        controller = ExperimentController(args.config, config=config)

        if args.command == "run":
            for name in config.schedulers if args.scheduler else config.schedulers[:1]:
                report = controller.run(name, trace_path=args.trace)
                print(f"✅ {name}: W={report.summary['mean_W']:.4f} D={report.summary['mean_D']:.4f}")
        elif args.command == "compare":
            comparison = controller.compare(
                config.schedulers, trace_path=args.trace, eval_seeds=args.eval_seeds
            )
            print(f"✅ {comparison.comparison_path}")
            if comparison.evaluation_path is not None:
                print(f"✅ {comparison.evaluation_path}")
        elif args.command == "train-twe":
            twe = controller.train_twe()
            status = "✅" if twe.passed else "⚠️"
            print(f"{status} test MSE={twe.test_mse:.3e} ({twe.train_count}/{twe.test_count})")
        elif args.command == "gen-trace":
            print(f"✅ {controller.gen_trace(args.path, args.slots)}")
        return EXIT_OK

    except ConfigurationError as e:
        logger.error(f"配置错误: {e} / Configuration error: {e}")
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NonfiniteLossError as e:
        logger.error(f"损失非有限: {e} / Non-finite loss: {e}")
        print(f"❌ {e} {e.diagnostics}", file=sys.stderr)
        return EXIT_NONFINITE
    except TranscodingSimError as e:
        logger.error(f"实验失败: {e} / Experiment failed: {e}")
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_FAILURE


def main(argv: Optional[List[str]] = None):
    """
    主函数 / Main function
    """
    args = parse_arguments(argv)
    setup_logging(args.debug, args.log_file)
    logging.getLogger(__name__).info(f"启动子命令 {args.command} / Starting subcommand {args.command}")
    try:
        code = execute(args)
    except KeyboardInterrupt:
        logging.getLogger(__name__).info("用户中断 / Interrupted by user")
        code = EXIT_FAILURE
    sys.exit(code)


if __name__ == "__main__":
    main()

"""
CSV读写工具 / CSV I/O Utilities

所有输出表格第一行为 "# schema: <名称> v<版本>" 注释，其后为带表头的数据。
Every emitted table starts with a "# schema: <name> v<version>" comment line
followed by a header row and the data.
"""

import logging
from pathlib import Path
from typing import Dict, List, Sequence

import pandas as pd

from src.exceptions.simulation_exceptions import TraceFormatError
from src.models.core import GoP

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SCHEMA_PREFIX = "# schema:"

SLOT_METRICS_COLUMNS: List[str] = ["t", "D", "W", "Z", "r", "L1", "L2", "L3", "L4", "L5", "I", "gops", "syncs"]
TRACE_COLUMNS: List[str] = ["slot", "gop_id", "b", "si", "ti", "w1", "w2", "w3", "num_frames", "width", "height"]
TRAINING_CURVE_COLUMNS: List[str] = ["episode", "mean_W", "mean_D", "final_Z", "mean_loss", "epsilon"]
HISTOGRAM_COLUMNS: List[str] = ["bin_low", "bin_high", "count"]
MSE_CURVE_COLUMNS: List[str] = ["epoch", "mse", "lambda"]
EVALUATION_COLUMNS: List[str] = ["scheduler", "seeds", "mean_W", "mean_D"]


def schema_line(name: str, version: int = SCHEMA_VERSION) -> str:
    return f"{SCHEMA_PREFIX} {name} v{version}"


def write_table(path: str, schema: str, frame: pd.DataFrame) -> Path:
    """
    写出带版本注释的CSV / Write a CSV preceded by its schema comment

    Args:
        path: 输出路径 / Output path
        schema: 模式名称 / Schema name (e.g. "slot_metrics")
        frame: 数据表 / Data frame

    Returns:
        写出的路径 / Written path
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with open(target, "w", encoding="utf-8", newline="") as f:
        f.write(schema_line(schema) + "\n")
        frame.to_csv(f, index=False, lineterminator="\n")
    logger.debug(f"写出表格 {target} ({len(frame)} 行) / Wrote table {target} ({len(frame)} rows)")
    return target


def read_table(path: str, schema: str) -> pd.DataFrame:
    """
    读取并校验模式注释 / Read a CSV and check its schema comment

    Raises:
        TraceFormatError: 文件缺失或模式不符 / Missing file or schema mismatch
    """
    source = Path(path)
    try:
        with open(source, encoding="utf-8") as f:
            first = f.readline().strip()
    except OSError as e:
        raise TraceFormatError(f"无法读取 {source}: {e} / cannot read {source}: {e}")
    if first != schema_line(schema):
        raise TraceFormatError(
            f"模式不符: 期望 '{schema_line(schema)}', 实际 '{first}' / schema mismatch in {source}: "
            f"expected '{schema_line(schema)}', found '{first}'"
        )
    return pd.read_csv(source, skiprows=1, float_precision="round_trip")


def _require_columns(frame: pd.DataFrame, columns: Sequence[str], source: str) -> None:
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise TraceFormatError(f"{source} 缺少列 {missing} / {source} is missing columns {missing}")


# 到达轨迹 / arrival traces


def write_trace(path: str, trace: Dict[int, List[GoP]]) -> Path:
    """写出到达轨迹（每个GoP一行）/ Write an arrival trace, one row per GoP"""
    rows = [
        {
            "slot": slot,
            "gop_id": gop.gop_id,
            "b": gop.bit_rate,
            "si": gop.si,
            "ti": gop.ti,
            "w1": gop.requests[0],
            "w2": gop.requests[1],
            "w3": gop.requests[2],
            "num_frames": gop.num_frames,
            "width": gop.width,
            "height": gop.height,
        }
        for slot in sorted(trace)
        for gop in trace[slot]
    ]
    return write_table(path, "arrival_trace", pd.DataFrame(rows, columns=TRACE_COLUMNS))


def read_trace(path: str, slots: int = 0) -> Dict[int, List[GoP]]:
    """
    读取到达轨迹 / Read an arrival trace

    Args:
        path: 轨迹文件 / Trace file
        slots: 至少包含的时隙数（空时隙补空列表）/ Minimum slot count; empty slots get []
    """
    frame = read_table(path, "arrival_trace")
    _require_columns(frame, TRACE_COLUMNS, str(path))
    trace: Dict[int, List[GoP]] = {t: [] for t in range(slots)}
    for row in frame.itertuples(index=False):
        trace.setdefault(int(row.slot), []).append(
            GoP(
                gop_id=int(row.gop_id),
                bit_rate=float(row.b),
                num_frames=int(row.num_frames),
                width=int(row.width),
                height=int(row.height),
                si=float(row.si),
                ti=float(row.ti),
                requests=(int(row.w1), int(row.w2), int(row.w3)),
            )
        )
    return trace


# 训练记录 / training records


def write_records(path: str, records) -> Path:
    """写出TWE训练记录（8个特征列+目标）/ Write TWE records: 8 feature columns plus target"""
    from src.services.workload_estimator import FEATURE_NAMES

    rows = [
        dict(zip(FEATURE_NAMES, r.features.to_array().tolist()), actual_workload=r.actual_workload)
        for r in records
    ]
    return write_table(path, "twe_records", pd.DataFrame(rows, columns=list(FEATURE_NAMES) + ["actual_workload"]))


def read_records(path: str):
    from src.services.workload_estimator import FEATURE_NAMES, FeatureVector, TrainingRecord

    frame = read_table(path, "twe_records")
    _require_columns(frame, list(FEATURE_NAMES) + ["actual_workload"], str(path))
    return [
        TrainingRecord(
            FeatureVector.from_array(row[list(FEATURE_NAMES)].to_numpy(dtype=float)),
            float(row["actual_workload"]),
        )
        for _, row in frame.iterrows()
    ]

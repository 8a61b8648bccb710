"""
检查点读写 / Checkpoint I/O

扁平文本格式：头部若干 "键 值..." 行，随后 "params N" 与每行一个参数
Flat text format: a header of "key value..." lines followed by "params N" and
one parameter per line.
"""

from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from src.exceptions.simulation_exceptions import CheckpointFormatError

MAGIC = "# dt-transcode checkpoint v1"


def write_checkpoint(
    path: str,
    kind: str,
    header: Dict[str, Sequence],
    params: np.ndarray,
) -> Path:
    """
    写出检查点 / Write a checkpoint

    Args:
        path: 文件路径 / File path
        kind: 检查点类型 / Checkpoint kind (e.g. "workload-model")
        header: 头部字段 / Header fields, each a sequence of numbers or strings
        params: 展平的参数向量 / Flattened parameter vector
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    lines = [MAGIC, f"kind {kind}"]
    for key, values in header.items():
        if " " in key or key in ("kind", "params"):
            raise CheckpointFormatError(f"invalid header key: {key!r}")
        lines.append(" ".join([key] + [_fmt(v) for v in values]))
    flat = np.asarray(params, dtype=np.float64).ravel()
    lines.append(f"params {flat.size}")
    lines.extend(repr(float(v)) for v in flat)
    target.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return target


def read_checkpoint(path: str) -> Tuple[str, Dict[str, List[str]], np.ndarray]:
    """
    读取检查点 / Read a checkpoint

    Returns:
        (类型, 头部, 参数) / (kind, header, params)

    Raises:
        CheckpointFormatError: 格式错误 / Malformed file
    """
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise CheckpointFormatError(f"无法读取检查点 {path}: {e} / cannot read checkpoint {path}: {e}")

    if not lines or lines[0].strip() != MAGIC:
        raise CheckpointFormatError(f"缺少检查点标识 / missing checkpoint magic in {path}")

    kind = ""
    header: Dict[str, List[str]] = {}
    for index, line in enumerate(lines[1:], start=1):
        parts = line.split()
        if not parts:
            continue
        key, values = parts[0], parts[1:]
        if key == "kind":
            kind = values[0] if values else ""
        elif key == "params":
            count = int(values[0])
            body = lines[index + 1 : index + 1 + count]
            if len(body) != count:
                raise CheckpointFormatError(
                    f"参数数量不足: {len(body)} != {count} / truncated parameters: {len(body)} != {count}"
                )
            try:
                params = np.array([float(v) for v in body], dtype=np.float64)
            except ValueError as e:
                raise CheckpointFormatError(f"invalid parameter line: {e}")
            return kind, header, params
        else:
            header[key] = values
    raise CheckpointFormatError(f"缺少参数段 / missing params section in {path}")


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)

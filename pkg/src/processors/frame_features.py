"""
帧特征处理器 / Frame Feature Processor

计算GoP的空间信息（SI）与时间信息（TI），生成合成帧序列，并读取原始灰度帧文件
Computes spatial (SI) and temporal (TI) information of GoPs, synthesizes frame
sequences and ingests raw planar 8-bit grayscale frame files.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
from scipy import ndimage

from src.exceptions.simulation_exceptions import (
    DimensionTooSmallError,
    FrameFileError,
    SequenceTooShortError,
)
from src.models.core import GoP, Rng

logger = logging.getLogger(__name__)

SUPPORTED_RESOLUTIONS: Tuple[Tuple[int, int], ...] = ((1280, 720), (1920, 1080))
HEADER_SUFFIX = ".hdr"


@dataclass(frozen=True)
class FrameSequence:
    """
    GoP帧序列 / Frame sequence of one GoP

    frames 形状为 (L, height, width) 的亮度数组，取值 [0, 255]。
    frames is a (L, height, width) luma array with values in [0, 255].
    """

    frames: np.ndarray

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 3:
            raise SequenceTooShortError(
                f"帧序列必须是三维数组: ndim={frames.ndim} / frame sequence must be 3-D: ndim={frames.ndim}"
            )
        object.__setattr__(self, "frames", frames)

    def __len__(self) -> int:
        return int(self.frames.shape[0])

    @property
    def height(self) -> int:
        return int(self.frames.shape[1])

    @property
    def width(self) -> int:
        return int(self.frames.shape[2])


@dataclass(frozen=True)
class SynthProfile:
    """
    合成内容配置 / Synthetic content profile

    Attributes:
        width, height: 声明分辨率 / Declared resolution (1280x720 or 1920x1080)
        num_frames: 每个GoP的帧数 / Frames per GoP
        texture: 纹理强度 [0, 1] / Texture intensity
        motion: 运动强度 [0, 1] / Motion intensity
        bit_rate_range: GoP比特数范围 / Range of GoP bits
        analysis_width, analysis_height: 实际合成的缩小尺寸 / Downscaled synthesis size
    """

    width: int = 1920
    height: int = 1080
    num_frames: int = 16
    texture: float = 0.5
    motion: float = 0.5
    bit_rate_range: Tuple[float, float] = (1.5e6, 3.0e6)
    analysis_width: Optional[int] = None
    analysis_height: Optional[int] = None

    def __post_init__(self):
        if not 0.0 <= self.texture <= 1.0 or not 0.0 <= self.motion <= 1.0:
            raise ValueError("texture/motion must lie in [0, 1]")
        if self.num_frames < 2:
            raise SequenceTooShortError("a GoP needs at least two frames")
        lo, hi = self.bit_rate_range
        if not 0 < lo <= hi:
            raise ValueError(f"invalid bit rate range: {self.bit_rate_range}")

    @property
    def synthesis_shape(self) -> Tuple[int, int]:
        return (
            self.analysis_height or self.height,
            self.analysis_width or self.width,
        )


def _as_frame(frame: np.ndarray) -> np.ndarray:
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 2 or frame.shape[0] < 3 or frame.shape[1] < 3:
        raise DimensionTooSmallError(
            f"帧尺寸至少为3x3: {frame.shape} / frame must be at least 3x3: {frame.shape}"
        )
    return frame


def sobel(frame: np.ndarray) -> np.ndarray:
    """
    Sobel梯度幅值 / Sobel gradient magnitude

    仅保留内部像素（有效卷积），输出尺寸为 (h-2, w-2)。
    Only interior pixels are kept (valid convolution); output is (h-2, w-2).

    Args:
        frame: 二维亮度数组 / 2-D luma array

    Returns:
        梯度幅值图 / Gradient magnitude image

    Raises:
        DimensionTooSmallError: 任一维度小于3 / Either dimension below 3
    """
    frame = _as_frame(frame)
    gx = ndimage.sobel(frame, axis=1)
    gy = ndimage.sobel(frame, axis=0)
    return np.hypot(gx, gy)[1:-1, 1:-1]


def population_std(values: np.ndarray) -> float:
    """总体标准差（除以N）/ Population standard deviation (divide by N)"""
    return float(np.std(values, ddof=0))


def spatial_information(seq: FrameSequence) -> float:
    """
    计算GoP的SI：各帧Sobel输出标准差的最大值
    Compute GoP SI: max over frames of the std of the Sobel output
    """
    return max(population_std(sobel(frame)) for frame in seq.frames)


def temporal_information(seq: FrameSequence) -> float:
    """
    计算GoP的TI：相邻帧差标准差的最大值
    Compute GoP TI: max over adjacent pairs of the std of the difference image

    Raises:
        SequenceTooShortError: 帧数少于2 / Fewer than two frames
    """
    if len(seq) < 2:
        raise SequenceTooShortError(
            f"TI至少需要2帧: {len(seq)} / TI needs at least two frames: {len(seq)}"
        )
    diffs = np.diff(seq.frames, axis=0)
    return max(population_std(diff) for diff in diffs)


def _unit_field(generator: np.random.Generator, shape: Tuple[int, int]) -> np.ndarray:
    """平滑随机场，最大绝对值归一化为1 / Smoothed random field scaled to max |v| = 1"""
    field = ndimage.gaussian_filter(generator.standard_normal(shape), sigma=1.0)
    peak = float(np.max(np.abs(field)))
    return field / peak if peak > 0 else field


def synth_gop(
    rng: Rng,
    profile: SynthProfile,
    gop_id: int = 0,
    requests: Tuple[int, int, int] = (0, 0, 0),
) -> Tuple[FrameSequence, GoP]:
    """
    生成合成GoP / Synthesize a GoP

    帧 l 为 128 + 50·texture·P + 25·motion·(±1)·M，其中 P、M 是固定平滑随机场，
    符号在相邻帧之间交替。SI 随 texture 增大，TI = 50·motion·σ(M)。
    Frame l is 128 + 50·texture·P + 25·motion·(±1)·M with fixed smooth random
    fields P and M and a sign alternating between frames, so SI grows with
    texture and TI = 50·motion·σ(M). Pixel values stay inside [53, 203].

    Args:
        rng: 随机数流 / Random stream
        profile: 内容配置 / Content profile
        gop_id: GoP编号 / GoP identifier
        requests: 请求三元组 / Request triple

    Returns:
        (帧序列, GoP) / (frame sequence, GoP)
    """
    generator = rng.generator
    shape = profile.synthesis_shape
    pattern = _unit_field(generator, shape)
    drift = _unit_field(generator, shape)
    signs = np.where(np.arange(profile.num_frames) % 2 == 0, 1.0, -1.0)

    frames = (
        128.0
        + 50.0 * profile.texture * pattern[None, :, :]
        + 25.0 * profile.motion * signs[:, None, None] * drift[None, :, :]
    )
    seq = FrameSequence(frames)
    lo, hi = profile.bit_rate_range
    bit_rate = float(generator.uniform(lo, hi)) if hi > lo else float(lo)

    gop = GoP(
        gop_id=gop_id,
        bit_rate=bit_rate,
        num_frames=profile.num_frames,
        width=profile.width,
        height=profile.height,
        si=spatial_information(seq),
        ti=temporal_information(seq),
        requests=tuple(int(w) for w in requests),
    )
    return seq, gop


def header_path_for(raw_path: Path) -> Path:
    return raw_path.with_name(raw_path.name + HEADER_SUFFIX)


def read_raw_frames(raw_path: str, header_path: Optional[str] = None) -> FrameSequence:
    """
    读取原始平面8位灰度帧文件 / Read a raw planar 8-bit grayscale frame file

    附带的头文件只有一行 "w h n"；默认路径为 "<文件名>.hdr"。
    The sidecar header holds one line "w h n"; default path is "<file>.hdr".

    Raises:
        FrameFileError: 头文件或数据长度无效 / Invalid header or payload size
    """
    raw = Path(raw_path)
    header = Path(header_path) if header_path else header_path_for(raw)
    try:
        fields = header.read_text(encoding="utf-8").split()
        width, height, count = (int(v) for v in fields[:3])
    except (OSError, ValueError) as e:
        raise FrameFileError(f"头文件无效 {header}: {e} / invalid header {header}: {e}")

    if width < 3 or height < 3 or count < 1:
        raise FrameFileError(f"invalid header values: {width} {height} {count}")

    try:
        payload = np.fromfile(raw, dtype=np.uint8)
    except OSError as e:
        raise FrameFileError(f"无法读取帧文件 {raw}: {e} / cannot read frame file {raw}: {e}")

    expected = width * height * count
    if payload.size != expected:
        raise FrameFileError(
            f"帧数据长度不匹配: {payload.size} != {expected} / payload size mismatch: {payload.size} != {expected}"
        )
    logger.info(
        f"读取原始帧 {raw}: {count}x{width}x{height} / Loaded raw frames {raw}: {count}x{width}x{height}"
    )
    return FrameSequence(payload.reshape(count, height, width).astype(np.float64))


def write_raw_frames(raw_path: str, seq: FrameSequence) -> Path:
    """写出原始帧及头文件 / Write raw frames plus their sidecar header"""
    raw = Path(raw_path)
    raw.parent.mkdir(parents=True, exist_ok=True)
    np.clip(np.rint(seq.frames), 0, 255).astype(np.uint8).tofile(raw)
    header_path_for(raw).write_text(
        f"{seq.width} {seq.height} {len(seq)}\n", encoding="utf-8"
    )
    return raw


def gop_from_frames(
    seq: FrameSequence,
    gop_id: int,
    bit_rate: float,
    requests: Tuple[int, int, int] = (0, 0, 0),
) -> GoP:
    """由真实帧构造GoP / Build a GoP from real frames"""
    return GoP(
        gop_id=gop_id,
        bit_rate=bit_rate,
        num_frames=len(seq),
        width=seq.width,
        height=seq.height,
        si=spatial_information(seq),
        ti=temporal_information(seq),
        requests=requests,
    )

"""
仿真异常类 / Simulation Exception Classes

定义云边协同转码仿真相关的异常体系
Define exception hierarchy for the cloud-edge collaborative transcoding simulator
"""

from typing import Any, Dict, Optional


class TranscodingSimError(Exception):
    """转码仿真基础异常 / Base transcoding simulation exception"""

    pass


class InvalidGoPError(TranscodingSimError):
    """GoP参数无效 / Invalid GoP parameters"""

    pass


class InfeasibleDecisionError(TranscodingSimError):
    """转码决策违反约束 / Transcoding decision violates constraints"""

    pass


class DimensionTooSmallError(TranscodingSimError):
    """帧尺寸过小，无法进行Sobel滤波 / Frame too small for the Sobel operator"""

    pass


class SequenceTooShortError(TranscodingSimError):
    """帧序列过短 / Frame sequence too short"""

    pass


class FrameFileError(TranscodingSimError):
    """原始帧文件读取失败 / Raw frame file could not be read"""

    pass


class InsufficientDataError(TranscodingSimError):
    """训练数据不足 / Not enough training records"""

    pass


class ModelNotFittedError(TranscodingSimError):
    """模型尚未训练 / Model has not been fitted"""

    pass


class NonfiniteLossError(TranscodingSimError):
    """
    损失值非有限 / Loss became non-finite

    diagnostics 保存出错时的上下文（步数、最后有限损失等）。
    diagnostics keeps the context at failure time (step, last finite loss, ...).
    """

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})

    def __str__(self) -> str:
        base = super().__str__()
        if not self.diagnostics:
            return base
        details = ", ".join(f"{k}={v}" for k, v in sorted(self.diagnostics.items()))
        return f"{base} [{details}]"


class NoRequestsError(TranscodingSimError):
    """本时隙没有用户请求 / No user requests in the slot"""

    pass


class DriftPreconditionError(TranscodingSimError):
    """服务时延超出李雅普诺夫界的前提范围 / Delay outside the drift-bound box"""

    pass


class CheckpointFormatError(TranscodingSimError):
    """检查点文件格式错误 / Malformed checkpoint file"""

    pass


class TraceFormatError(TranscodingSimError):
    """到达轨迹CSV格式错误 / Malformed arrival trace CSV"""

    pass

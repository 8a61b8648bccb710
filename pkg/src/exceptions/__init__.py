# 异常模块 / Exceptions Module

# 工具函数模块 / Utility functions module

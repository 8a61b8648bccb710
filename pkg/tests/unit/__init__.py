# 单元测试模块 / Unit tests module
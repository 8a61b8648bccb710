# 集成测试模块 / Integration tests module
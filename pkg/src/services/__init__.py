# 业务逻辑服务模块 / Business logic services module

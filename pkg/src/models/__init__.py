# 数据模型模块 / Data models module

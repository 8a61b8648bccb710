# 数据处理器模块 / Data processors module

# 配置管理模块 / Configuration Management Module

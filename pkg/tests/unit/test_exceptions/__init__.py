# 异常测试模块 / Exception Test Module
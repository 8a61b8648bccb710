# 测试包 / Test Package
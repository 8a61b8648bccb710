# Test config package
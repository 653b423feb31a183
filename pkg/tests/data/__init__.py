# Data tests package

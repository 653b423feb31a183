# Nn tests package

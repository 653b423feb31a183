# Model tests package

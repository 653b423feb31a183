# Geometry tests package

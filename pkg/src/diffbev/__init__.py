"""DiffBEV - conditional diffusion refinement of bird's-eye-view features."""

__version__ = "0.1.0"

"""Neural-network building blocks on top of the tensor engine."""

from diffbev.nn.layers import Conv2d, ConvBlock, Linear, Norm2d
from diffbev.nn.module import KAIMING_GAIN, Module, Parameter, uniform_init

__all__ = [
    "KAIMING_GAIN",
    "Conv2d",
    "ConvBlock",
    "Linear",
    "Module",
    "Norm2d",
    "Parameter",
    "uniform_init",
]

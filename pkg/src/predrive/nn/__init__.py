from .kernels import BACKEND, conv2d_bwd_input, conv2d_bwd_weights, conv2d_forward
from .layers import Conv2d, ConvTranspose2d, Linear, ReLU
from .net import ParamNet
from .adam import Adam

__all__ = [
    "BACKEND", "conv2d_forward", "conv2d_bwd_input", "conv2d_bwd_weights",
    "Conv2d", "ConvTranspose2d", "Linear", "ReLU", "ParamNet", "Adam",
]

from . import functional, kernels
from .autograd import Tensor, no_grad, parameter

__all__ = ["Tensor", "no_grad", "parameter", "functional", "kernels"]

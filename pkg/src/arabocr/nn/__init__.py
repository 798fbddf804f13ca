from arabocr.nn.gradcheck import GradCheckReport, grad_check, numeric_gradient
from arabocr.nn.layers import (
    BatchNormState,
    LayerKind,
    LayerSpec,
    Parameter,
    ShapeError,
    activation_backward,
    activation_forward,
    batchnorm_backward,
    batchnorm_forward,
    conv2d_backward,
    conv2d_forward,
    maxpool_backward,
    maxpool_forward,
)

__all__ = [
    "BatchNormState",
    "GradCheckReport",
    "LayerKind",
    "LayerSpec",
    "Parameter",
    "ShapeError",
    "activation_backward",
    "activation_forward",
    "batchnorm_backward",
    "batchnorm_forward",
    "conv2d_backward",
    "conv2d_forward",
    "grad_check",
    "maxpool_backward",
    "maxpool_forward",
    "numeric_gradient",
]

from .autograd import Param, Tape, Tensor, as_tensor, set_check_finite
from .gradcheck import GradCheckReport, grad_check
from .layers import (
    MLP2,
    BatchNorm,
    GroupedLinear,
    Linear,
    Module,
    MSAEncoding,
    grouped_linear,
    linear,
    masked_group_softmax,
    mlp2,
    msa_weight_encoding,
)

__all__ = [
    "BatchNorm", "GradCheckReport", "GroupedLinear", "Linear", "MLP2", "MSAEncoding",
    "Module", "Param", "Tape", "Tensor", "as_tensor", "grad_check", "grouped_linear",
    "linear", "masked_group_softmax", "mlp2", "msa_weight_encoding", "set_check_finite",
]

"""leafseq: modular sequence-to-sequence toolkit for abstractive summarization."""

from .tensor import (
    ContractError,
    Graph,
    NumericError,
    ShapeError,
    Tensor,
    backward,
    forward_primitive,
    get_default_dtype,
    set_default_dtype,
)
from .gradcheck import grad_check
from .optim import AdamState, adam_step, clip_global_norm

__all__ = [
    "ContractError",
    "Graph",
    "NumericError",
    "ShapeError",
    "Tensor",
    "backward",
    "forward_primitive",
    "get_default_dtype",
    "set_default_dtype",
    "grad_check",
    "AdamState",
    "adam_step",
    "clip_global_norm",
]

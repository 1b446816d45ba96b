"""Dense float64 tensors with reverse-mode automatic differentiation.

Just enough machinery for a small transformer: a dynamic tape recorded
per forward pass, exact analytic backward rules per op, a finite-
difference gradient checker, Adam, and the flat-binary checkpoint
format.  numpy supplies the array storage and vectorized arithmetic;
every derivative is derived and implemented here.
"""

from .tensor import (
    Graph,
    ShapeError,
    Tensor,
    add,
    backward,
    causal_mask_fill,
    concat,
    cross_entropy,
    dropout,
    embedding_lookup,
    gelu,
    layer_norm,
    log_softmax,
    matmul,
    mean,
    mul,
    reshape,
    scale,
    slice_,
    softmax,
    sum_,
    swapaxes,
    zero_grads,
)
from .optim import AdamState, adam_step, clip_global_norm
from .gradcheck import GradCheckReport, grad_check
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint

__all__ = [
    "Tensor", "Graph", "ShapeError", "backward", "zero_grads",
    "add", "mul", "scale", "matmul", "concat", "slice_", "reshape", "swapaxes",
    "embedding_lookup", "softmax", "log_softmax", "layer_norm", "gelu",
    "dropout", "causal_mask_fill", "cross_entropy", "sum_", "mean",
    "AdamState", "adam_step", "clip_global_norm",
    "GradCheckReport", "grad_check",
    "save_checkpoint", "load_checkpoint", "CheckpointError",
]

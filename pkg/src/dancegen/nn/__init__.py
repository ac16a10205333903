from .tensor import Tensor, concat, stack, gather_rows, gather_last, softmax, log_softmax, conv1d
from .layers import (
    Module,
    Linear,
    Conv1d,
    Embedding,
    LayerNorm,
    SelfAttention,
    TransformerBlock,
    ResConv1d,
)
from .optim import AdamW, warmup_lr
from .rng import splitmix64, fnv1a64, derive_seed, generator

__all__ = [
    "Tensor", "concat", "stack", "gather_rows", "gather_last", "softmax", "log_softmax",
    "conv1d", "Module", "Linear", "Conv1d", "Embedding", "LayerNorm", "SelfAttention",
    "TransformerBlock", "ResConv1d", "AdamW", "warmup_lr",
    "splitmix64", "fnv1a64", "derive_seed", "generator",
]

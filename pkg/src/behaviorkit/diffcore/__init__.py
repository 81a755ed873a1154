"""Differentiable numpy core: tensors, ops, optimizers, checkpoints."""

from .tensor import (
    LOGVAR_MAX,
    LOGVAR_MIN,
    STD_FLOOR,
    Tensor,
    no_grad,
    add,
    sub,
    mul,
    neg,
    scale,
    add_const,
    exp,
    log,
    log_abs,
    tanh,
    sigmoid,
    relu,
    square,
    clip,
    minimum_const,
    maximum_const,
    tsum,
    sum_last,
    tmean,
    slice_last,
    concat_last,
    permute_last,
    linear,
    lstm_step,
    gru_step,
    softmax_cross_entropy,
    sigmoid_bce,
    gaussian_recon_nll,
    diag_gauss_kl,
    reparameterize,
)
from .params import ParamSet
from .nn import (
    init_linear,
    linear_apply,
    init_lstm,
    init_gru,
    recurrent_cell,
    gru_cell,
    init_mlp,
    mlp,
)
from .optim import AdamState, adam_init, adam_step, SGDState, sgd_init, sgd_momentum_step
from .gradcheck import grad_check
from .checkpoint import save_checkpoint, load_checkpoint

__all__ = [
    "LOGVAR_MAX", "LOGVAR_MIN", "STD_FLOOR",
    "Tensor", "no_grad",
    "add", "sub", "mul", "neg", "scale", "add_const",
    "exp", "log", "log_abs", "tanh", "sigmoid", "relu", "square",
    "clip", "minimum_const", "maximum_const",
    "tsum", "sum_last", "tmean",
    "slice_last", "concat_last", "permute_last",
    "linear", "lstm_step", "gru_step",
    "softmax_cross_entropy", "sigmoid_bce",
    "gaussian_recon_nll", "diag_gauss_kl", "reparameterize",
    "ParamSet",
    "init_linear", "linear_apply", "init_lstm", "init_gru",
    "recurrent_cell", "gru_cell", "init_mlp", "mlp",
    "AdamState", "adam_init", "adam_step",
    "SGDState", "sgd_init", "sgd_momentum_step",
    "grad_check",
    "save_checkpoint", "load_checkpoint",
]

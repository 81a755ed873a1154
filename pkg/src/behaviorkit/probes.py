"""Learned evaluation probes: posture regression, action classification,
and a sequence realism discriminator.

Each probe builds its own small network with the shared diffcore ops and
trains deterministically from an explicit seed.  Probes measure what is
recoverable from codes or how plausible generated sequences look; they are
never part of the behavior model itself.
"""

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .diffcore import ParamSet, Tensor, adam_init, adam_step, sgd_init, sgd_momentum_step
from .errors import ContractError
from .util import make_rng


def _check_rows(a, b, what):
    if a.shape[0] != b.shape[0]:
        raise ContractError(f"{what}: got {a.shape[0]} inputs but {b.shape[0]} targets")


# ------------------------------------------------------------- posture probe

def init_posture_regressor(in_dim, out_dim, seed, widths=(512, 256)):
    ps = ParamSet("posture-probe")
    rng = np.random.default_rng([seed, 401])
    dc.init_mlp(ps, "reg", [in_dim, *widths, out_dim], rng)
    return ps


def train_posture_regressor(codes, targets, seed, epochs=20, lr=1e-3,
                            widths=(512, 256), batch_size=64):
    """Fit an MLP to predict posture targets from codes; returns its params.

    Zero epochs returns the untrained probe (useful as a baseline).
    """
    codes = np.asarray(codes, dtype=float)
    targets = np.asarray(targets, dtype=float)
    _check_rows(codes, targets, "posture regressor")
    ps = init_posture_regressor(codes.shape[1], targets.shape[1], seed, widths)
    opt = adam_init(ps)
    n = codes.shape[0]
    for epoch in range(epochs):
        order = make_rng(seed, "reg-order", epoch).permutation(n)
        for bi in range(0, n, batch_size):
            idx = order[bi:bi + batch_size]
            pred = dc.mlp(Tensor(codes[idx]), ps, "reg", 3, activation="relu")
            loss = dc.gaussian_recon_nll(pred, Tensor(targets[idx]))
            loss.backward()
            adam_step(ps, ps.grads(), opt, lr)
            ps.zero_grad()
    return ps


def regressor_mse(ps, codes, targets):
    with dc.no_grad():
        pred = dc.mlp(Tensor(np.asarray(codes, dtype=float)), ps, "reg", 3,
                      activation="relu")
    diff = pred.data - np.asarray(targets, dtype=float)
    return float(np.mean(diff * diff))


def posture_recovery_error(codes, targets, seed, probe_split=0.8, epochs=20,
                           lr=1e-3):
    """Held-out MSE of posture prediction from codes.

    Splits the given set into probe-train/held-out by the seed, trains the
    regressor on the first part and reports MSE on the second.  High error
    means the codes do not carry the posture.
    """
    codes = np.asarray(codes, dtype=float)
    targets = np.asarray(targets, dtype=float)
    _check_rows(codes, targets, "posture recovery")
    n = codes.shape[0]
    if n < 5:
        raise ContractError("posture recovery needs at least 5 samples")
    order = make_rng(seed, "re-split").permutation(n)
    cut = int(round(probe_split * n))
    tr, ho = order[:cut], order[cut:]
    ps = train_posture_regressor(codes[tr], targets[tr], seed, epochs=epochs, lr=lr)
    return regressor_mse(ps, codes[ho], targets[ho])


# --------------------------------------------------------- action classifier

def train_linear_classifier(codes, labels, n_classes, seed, epochs=60,
                            lr=1e-2, batch_size=64):
    """Multinomial logistic probe on frozen codes."""
    codes = np.asarray(codes, dtype=float)
    labels = np.asarray(labels, dtype=np.int64)
    _check_rows(codes, labels, "linear classifier")
    ps = ParamSet("action-probe")
    rng = np.random.default_rng([seed, 402])
    dc.init_linear(ps, "cls", n_classes, codes.shape[1], rng, zero=True)
    opt = adam_init(ps)
    n = codes.shape[0]
    for epoch in range(epochs):
        order = make_rng(seed, "cls-order", epoch).permutation(n)
        for bi in range(0, n, batch_size):
            idx = order[bi:bi + batch_size]
            logits = dc.linear_apply(ps, "cls", Tensor(codes[idx]))
            loss = dc.softmax_cross_entropy(logits, labels[idx])
            loss.backward()
            adam_step(ps, ps.grads(), opt, lr)
            ps.zero_grad()
    return ps


def classifier_accuracy(ps, codes, labels):
    with dc.no_grad():
        logits = dc.linear_apply(ps, "cls", Tensor(np.asarray(codes, dtype=float)))
    pred = logits.data.argmax(axis=1)
    return float(np.mean(pred == np.asarray(labels)))


def train_sequence_classifier(train_seqs, train_labels, n_classes, seed,
                              hidden=128, epochs=15, lr=1e-3, batch_size=32):
    """End-to-end recurrent classifier over raw sequences (the upper bound).

    train_seqs: (N, n, pose) normalized.  Returns (params, predict_fn).
    """
    x = np.asarray(train_seqs, dtype=float)
    labels = np.asarray(train_labels, dtype=np.int64)
    _check_rows(x, labels, "sequence classifier")
    ps = ParamSet("seq-cls")
    rng = np.random.default_rng([seed, 403])
    dc.init_lstm(ps, "enc", x.shape[2], hidden, rng)
    dc.init_linear(ps, "head", n_classes, hidden, rng, zero=True)
    opt = adam_init(ps)
    n = x.shape[0]

    def logits_for(batch):
        h = Tensor(np.zeros((batch.shape[0], hidden)))
        c = Tensor(np.zeros((batch.shape[0], hidden)))
        for t in range(batch.shape[1]):
            h, c = dc.recurrent_cell(Tensor(batch[:, t, :]), (h, c), ps, "enc")
        return dc.linear_apply(ps, "head", h)

    for epoch in range(epochs):
        order = make_rng(seed, "seqcls-order", epoch).permutation(n)
        for bi in range(0, n, batch_size):
            idx = order[bi:bi + batch_size]
            loss = dc.softmax_cross_entropy(logits_for(x[idx]), labels[idx])
            loss.backward()
            adam_step(ps, ps.grads(), opt, lr)
            ps.zero_grad()

    def predict(seqs):
        with dc.no_grad():
            lg = logits_for(np.asarray(seqs, dtype=float))
        return lg.data.argmax(axis=1)

    return ps, predict


# --------------------------------------------------------- realism classifier

@dataclass
class RealismResult:
    accuracy: float
    n_train: int
    n_held_out: int
    iterations: int
    batch_size: int


def train_reality_classifier(real, generated, seed, iterations=500,
                             batch_size=64, lr=1e-3, momentum=0.9, hidden=64):
    """Binary real-vs-generated discriminator on sequences.

    A single recurrent (GRU) layer reads the sequence; its final state feeds
    one logistic unit.  Trained with plain SGD + momentum on a balanced
    80/20 train/held-out split of each class; returns the held-out accuracy
    (0.5 means the generator is indistinguishable from real data here).
    """
    real = np.asarray(real, dtype=float)
    generated = np.asarray(generated, dtype=float)
    if real.ndim != 3 or generated.ndim != 3 or real.shape[1:] != generated.shape[1:]:
        raise ContractError("need (N, frames, features) arrays with matching shape")

    def split(arr, label):
        n = arr.shape[0]
        order = make_rng(seed, "real-split", label).permutation(n)
        cut = int(round(0.8 * n))
        return arr[order[:cut]], arr[order[cut:]]

    r_tr, r_ho = split(real, 0)
    g_tr, g_ho = split(generated, 1)
    x_tr = np.concatenate([r_tr, g_tr], axis=0)
    y_tr = np.concatenate([np.ones(len(r_tr)), np.zeros(len(g_tr))])
    x_ho = np.concatenate([r_ho, g_ho], axis=0)
    y_ho = np.concatenate([np.ones(len(r_ho)), np.zeros(len(g_ho))])

    ps = ParamSet("realism")
    rng = np.random.default_rng([seed, 404])
    dc.init_gru(ps, "gru", real.shape[2], hidden, rng)
    dc.init_linear(ps, "out", 1, hidden, rng, zero=True)
    opt = sgd_init(ps)

    def logits_for(batch):
        h = Tensor(np.zeros((batch.shape[0], hidden)))
        for t in range(batch.shape[1]):
            h = dc.gru_cell(Tensor(batch[:, t, :]), h, ps, "gru")
        return dc.linear_apply(ps, "out", h)

    n = x_tr.shape[0]
    for it in range(iterations):
        idx = make_rng(seed, "real-batch", it).integers(0, n, size=min(batch_size, n))
        loss = dc.sigmoid_bce(logits_for(x_tr[idx]), y_tr[idx, None])
        loss.backward()
        sgd_momentum_step(ps, ps.grads(), opt, lr, momentum)
        ps.zero_grad()

    with dc.no_grad():
        lg = logits_for(x_ho)
    acc = float(np.mean((lg.data[:, 0] > 0.0) == (y_ho > 0.5)))
    return RealismResult(accuracy=acc, n_train=n, n_held_out=x_ho.shape[0],
                         iterations=iterations, batch_size=batch_size)

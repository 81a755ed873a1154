"""Experiment-level evaluation: transfer fidelity, sample diversity, realism.

The runners here wire frozen models, datasets and probe trainings into the
three report types the project cares about:

* transfer   -- how faithfully a behavior code re-enacts its source from an
                unrelated starting posture (displacement/recovery tables,
                latent distance, action probes),
* diversity  -- nearest-neighbor spread of sampled sequence sets,
* realism    -- can a discriminator tell generations from real data.

Conventions, fixed here so numbers are comparable across runs: kinematic
metrics (displacement, diversity) are computed in raw coordinate space after
denormalization; posture-recovery probes regress normalized postures, the
scale the codes were trained in, so every coordinate weighs in comparably;
latent distances live in code space; the realism discriminator reads
normalized sequences.  Everything is read-only with respect to model
parameters -- probes train their own parameter sets.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import diffcore as dc
from . import metrics, probes
from .errors import ContractError
from .motiondata import denormalize
from .training import encode_means
from .util import canonical_json, make_rng

DEFAULT_TIMESTEPS = (1, 10, 20, 30, 40, 50)


def model_digest(model):
    """Hash of every parameter array; unchanged digests prove non-mutation."""
    h = hashlib.sha256()
    for name, arr in sorted(model.param_arrays().items()):
        h.update(name.encode())
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()


def _families_of(dataset):
    fams = dataset.config.get("families")
    if not fams:
        fams = sorted({s.family for s in dataset.train + dataset.test})
    return list(fams)


def _labels(sequences, families):
    index = {f: i for i, f in enumerate(families)}
    try:
        return np.array([index[s.family] for s in sequences], dtype=np.int64)
    except KeyError as exc:
        raise ContractError(f"sequence family {exc} not in dataset families")


def _raw(flat, stats):
    """(N, n, K*3) normalized -> (N, n, K, 3) raw coordinates."""
    n, frames = flat.shape[0], flat.shape[1]
    return denormalize(flat.reshape(n, frames, -1, 3), stats)


def transfer_pairs(n_sequences, pair_count, seed):
    """Deterministic (source, target) index pairs with source != target."""
    if n_sequences < 2:
        raise ContractError("need at least 2 sequences to form transfer pairs")
    rng = make_rng(seed, "transfer-pairs")
    src = rng.integers(0, n_sequences, size=pair_count)
    tgt = (src + rng.integers(1, n_sequences, size=pair_count)) % n_sequences
    return src, tgt


# ------------------------------------------------------------- transfer eval

@dataclass
class TransferEval:
    model_name: str
    timesteps: tuple
    tde: dict                  # T -> mean displacement error over pairs
    re: dict                   # T -> held-out posture-recovery MSE
    d_beta_mean: float
    d_beta_std: float
    action_accuracy: float
    action_upper_bound: float
    pair_count: int

    def to_dict(self):
        return {
            "model": self.model_name,
            "timesteps": list(self.timesteps),
            "tde": {str(t): self.tde[t] for t in self.timesteps},
            "re": {str(t): self.re[t] for t in self.timesteps},
            "d_beta_mean": self.d_beta_mean,
            "d_beta_std": self.d_beta_std,
            "action_accuracy": self.action_accuracy,
            "action_upper_bound": self.action_upper_bound,
            "pair_count": self.pair_count,
        }


def recovery_table(codes, norm_sequences, timesteps, seed):
    """Held-out MSE of a posture probe per evaluated frame index (1-based).

    Targets are normalized postures: (N, n, K*3) sequences sliced at each
    requested frame.
    """
    table = {}
    for t in timesteps:
        targets = norm_sequences[:, t - 1]
        table[t] = probes.posture_recovery_error(codes, targets, seed=seed)
    return table


def run_transfer_eval(models, dataset, pair_count=100, seed=0,
                      timesteps=DEFAULT_TIMESTEPS, upper_bound=True,
                      verbose=False):
    """Evaluate behavior transfer for each named model on the test split.

    models: mapping name -> trained model.  All models see the same
    source/target pairs.  The end-to-end classifier upper bound is trained
    once (it does not depend on any evaluated model) and repeated in every
    row.  Returns {name: TransferEval}.
    """
    test_norm = dataset.test_array()
    train_norm = dataset.train_array()
    families = _families_of(dataset)
    y_train = _labels(dataset.train, families)
    y_test = _labels(dataset.test, families)
    src_idx, tgt_idx = transfer_pairs(test_norm.shape[0], pair_count, seed)

    ub = 0.0
    if upper_bound:
        _, predict = probes.train_sequence_classifier(
            train_norm, y_train, len(families), seed=seed)
        ub = float(np.mean(predict(test_norm) == y_test))
        if verbose:
            print(f"end-to-end classifier accuracy {ub:.3f}")

    out = {}
    for name, model in models.items():
        codes_test = encode_means(model, test_norm)
        codes_train = encode_means(model, train_norm)

        re = recovery_table(codes_test, test_norm, timesteps, seed)

        reenacted = model.transfer(test_norm[src_idx], test_norm[tgt_idx, 0])
        re_raw = _raw(reenacted, dataset.stats)
        src_raw = _raw(test_norm[src_idx], dataset.stats)
        tde = {t: float(np.mean([metrics.tde(src_raw[p], re_raw[p], t)
                                 for p in range(pair_count)]))
               for t in timesteps}

        z_re = encode_means(model, reenacted)
        dists = np.linalg.norm(codes_test[src_idx] - z_re, axis=1)

        cls = probes.train_linear_classifier(codes_train, y_train,
                                             len(families), seed=seed)
        acc = probes.classifier_accuracy(cls, codes_test, y_test)

        out[name] = TransferEval(
            model_name=name, timesteps=tuple(timesteps), tde=tde, re=re,
            d_beta_mean=float(dists.mean()), d_beta_std=float(dists.std()),
            action_accuracy=acc, action_upper_bound=ub,
            pair_count=pair_count)
        if verbose:
            print(f"{name}: TDE(50)={tde[timesteps[-1]]:.4f} "
                  f"d_beta={dists.mean():.3f} acc={acc:.3f}")
    return out


# ------------------------------------------------------------ sampling evals

def sample_sequences(model, dataset, count, seed, flow=None, label=0):
    """Draw sequences from the generator, in raw coordinates.

    Codes come from the flow when given, else from the unit-normal prior;
    starting postures are first frames drawn from the test split.  Returns
    (count, n, K, 3).
    """
    z_rng = make_rng(seed, "sample-z", label)
    if flow is not None:
        z = flow.sample_behavior(count, z_rng)
    else:
        z = z_rng.standard_normal((count, model.dims.latent))
    test_norm = dataset.test_array()
    starts = make_rng(seed, "sample-start", label).integers(
        0, test_norm.shape[0], size=count)
    out_norm = model.decode_array(z, test_norm[starts, 0])
    return _raw(out_norm, dataset.stats)


@dataclass
class DiversityEval:
    source: str                # "prior" or "flow"
    sizes: tuple
    asd: dict                  # N -> average self distance
    fsd: dict                  # N -> final self distance

    def to_dict(self):
        return {
            "source": self.source,
            "sizes": list(self.sizes),
            "asd": {str(n): self.asd[n] for n in self.sizes},
            "fsd": {str(n): self.fsd[n] for n in self.sizes},
        }


def run_diversity_eval(model, dataset, seed=0, sizes=(10, 50), flow=None):
    """Nearest-neighbor diversity of sampled sets at each requested size."""
    asd, fsd = {}, {}
    for n in sizes:
        samples = sample_sequences(model, dataset, n, seed, flow=flow, label=n)
        asd[n] = metrics.asd(samples)
        fsd[n] = metrics.fsd(samples)
    return DiversityEval(source="flow" if flow is not None else "prior",
                         sizes=tuple(sizes), asd=asd, fsd=fsd)


# -------------------------------------------------------------- realism eval

REALISM_KINDS = ("self", "transfer", "prior", "flow")


@dataclass
class RealismEval:
    accuracy: dict             # kind -> held-out discriminator accuracy
    per_class: int
    iterations: int
    batch_size: int

    def to_dict(self):
        return {
            "accuracy": dict(sorted(self.accuracy.items())),
            "per_class": self.per_class,
            "iterations": self.iterations,
            "batch_size": self.batch_size,
        }


def generate_for_realism(model, dataset, kind, seed, flow=None, count=None):
    """Build one normalized generation set mirroring the real train split.

    self:     posterior sample decoded from the sequence's own first frame;
    transfer: posterior-mean code decoded from another sequence's first frame;
    prior:    unit-normal code, random real first frame;
    flow:     flow-sampled code, random real first frame.
    """
    train_norm = dataset.train_array()
    n = train_norm.shape[0] if count is None else min(count, train_norm.shape[0])
    x = train_norm[:n]
    if kind == "self":
        with dc.no_grad():
            code = model.encode(x)
            model.sample_code(code, rng=make_rng(seed, "realism-self"))
            z = code.sample.data
        return model.decode_array(z, x[:, 0])
    if kind == "transfer":
        shift = make_rng(seed, "realism-partner").integers(1, n, size=n)
        partner = (np.arange(n) + shift) % n
        return model.transfer(x, x[partner, 0])
    if kind in ("prior", "flow"):
        rng = make_rng(seed, "realism-z", kind)
        if kind == "flow":
            if flow is None:
                raise ContractError("realism kind 'flow' needs a flow model")
            z = flow.sample_behavior(n, rng)
        else:
            z = rng.standard_normal((n, model.dims.latent))
        starts = make_rng(seed, "realism-start", kind).integers(0, n, size=n)
        return model.decode_array(z, x[starts, 0])
    raise ContractError(f"unknown realism kind {kind!r}; "
                        f"expected one of {REALISM_KINDS}")


def run_realism_eval(model, dataset, seed=0, flow=None, kinds=REALISM_KINDS,
                     per_class=None, iterations=500, batch_size=64,
                     verbose=False):
    """Train one real-vs-generated discriminator per synthesis kind.

    Accuracies near 0.5 mean the discriminator cannot separate generations
    from held-out real sequences.  The discriminator reads normalized
    sequences and is retrained from scratch for every kind.
    """
    kinds = tuple(kinds)
    if flow is None:
        kinds = tuple(k for k in kinds if k != "flow")
    train_norm = dataset.train_array()
    n = train_norm.shape[0] if per_class is None else min(per_class,
                                                          train_norm.shape[0])
    real = train_norm[:n]
    accuracy = {}
    for kind in kinds:
        fake = generate_for_realism(model, dataset, kind, seed, flow=flow,
                                    count=n)
        result = probes.train_reality_classifier(
            real, fake, seed=seed, iterations=iterations,
            batch_size=batch_size)
        accuracy[kind] = result.accuracy
        if verbose:
            print(f"realism[{kind}] accuracy {result.accuracy:.3f}")
    return RealismEval(accuracy=accuracy, per_class=n,
                       iterations=iterations, batch_size=batch_size)


# ------------------------------------------------------------ report emission

@dataclass
class MetricReport:
    """A finished evaluation: JSON payload plus an aligned text rendering."""
    title: str
    data: dict
    text: str = field(default="", repr=False)

    def to_json(self):
        return canonical_json({"title": self.title, "data": self.data})


def _format_table(rows):
    """Left-align the first column, right-align the rest, pad to width."""
    widths = [max(len(str(r[c])) for r in rows) for c in range(len(rows[0]))]
    lines = []
    for r in rows:
        cells = [f"{str(r[0]):<{widths[0]}}"]
        cells += [f"{str(v):>{w}}" for v, w in zip(r[1:], widths[1:])]
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines)


def transfer_report(evals):
    """Render {name: TransferEval} into one MetricReport."""
    evals = dict(evals)
    any_eval = next(iter(evals.values()))
    ts = any_eval.timesteps
    header = ["model"] + [f"T={t}" for t in ts]
    sections = []
    for metric in ("tde", "re"):
        rows = [header]
        for name, ev in evals.items():
            table = getattr(ev, metric)
            rows.append([name] + [f"{table[t]:.4f}" for t in ts])
        sections.append(f"{metric.upper()} per timestep\n" + _format_table(rows))
    rows = [["model", "d_beta", "action acc", "upper bound"]]
    for name, ev in evals.items():
        rows.append([name,
                     f"{ev.d_beta_mean:.4f} +/- {ev.d_beta_std:.4f}",
                     f"{ev.action_accuracy:.3f}",
                     f"{ev.action_upper_bound:.3f}"])
    sections.append("Latent distance and action probes\n" + _format_table(rows))
    text = "\n\n".join(sections)
    return MetricReport(title="behavior transfer evaluation",
                        data={name: ev.to_dict() for name, ev in evals.items()},
                        text=text)


def diversity_report(evals):
    """Render a list of DiversityEval into one MetricReport."""
    evals = list(evals)
    sizes = evals[0].sizes
    rows = [["source"] + [f"ASD N={n}" for n in sizes]
            + [f"FSD N={n}" for n in sizes]]
    for ev in evals:
        rows.append([ev.source] + [f"{ev.asd[n]:.4f}" for n in sizes]
                    + [f"{ev.fsd[n]:.4f}" for n in sizes])
    return MetricReport(title="sample diversity evaluation",
                        data={ev.source: ev.to_dict() for ev in evals},
                        text=_format_table(rows))


def realism_report(ev):
    rows = [["synthesis", "discriminator accuracy"]]
    for kind in sorted(ev.accuracy):
        rows.append([kind, f"{ev.accuracy[kind]:.3f}"])
    note = (f"(discriminator: {ev.iterations} iterations, batch "
            f"{ev.batch_size}, {ev.per_class} sequences per class)")
    return MetricReport(title="sample realism evaluation",
                        data=ev.to_dict(),
                        text=_format_table(rows) + "\n" + note)

"""Command-line entry point: one subcommand per pipeline stage.

Covers data generation, model and flow training, behavior transfer,
sampling (single shot and chained), code interpolation, the three
evaluation reports, nearest-neighbor lookup and SVG rendering.  Every
command writes its outputs atomically plus a run manifest (command,
resolved arguments, config hashes, library versions) so a run can be
reproduced from the manifest alone.  Exit codes: 0 success, 1 runtime
failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np
import scipy

from . import __version__, evaluation, metrics, render
from .errors import (CheckpointError, ContractError, DivergenceError,
                     NumericsError, SequenceFormatError)
from .flow import recursive_sample
from .motiondata import (FAMILIES, NormStats, PoseSequence, denormalize,
                         load_dataset, load_sequences, make_dataset, normalize,
                         save_dataset, save_sequences)
from .training import (FlowTrainConfig, TrainConfig, calibrated_config,
                       load_flow, load_model, save_flow_checkpoint,
                       train_flow, train_vae)
from .util import atomic_write_bytes, atomic_write_text, make_rng, write_json

DATA_ENV = "BEHAVIORKIT_DATA_DIR"


# ----------------------------------------------------------- shared plumbing

def _data_dir(args):
    path = getattr(args, "data", None) or os.environ.get(DATA_ENV)
    if not path:
        raise ContractError(
            f"no dataset directory: pass --data or set {DATA_ENV}")
    return path


def _resolve_stats(manifest, args):
    """Normalization stats from the checkpoint, falling back to --data."""
    if "norm_stats" in manifest:
        return NormStats.from_dict(manifest["norm_stats"])
    data = getattr(args, "data", None) or os.environ.get(DATA_ENV)
    if data:
        with open(os.path.join(data, "norm_stats.json"), encoding="utf-8") as fh:
            return NormStats.from_dict(json.load(fh))
    raise ContractError(
        "checkpoint carries no normalization stats; pass --data")


def _write_manifest(path, command, args, **extra):
    payload = {
        "command": command,
        "package_version": __version__,
        "versions": {"numpy": np.__version__, "scipy": scipy.__version__},
        "args": {k: v for k, v in sorted(vars(args).items())
                 if k != "func" and not k.startswith("_")},
    }
    payload.update(extra)
    write_json(path, payload)


def _norm_flat(frames, stats):
    """(n, K, 3) raw -> (n, K*3) normalized."""
    n = frames.shape[0]
    return normalize(frames, stats).reshape(n, -1)


def _raw_frames(flat, stats):
    """(n, K*3) normalized -> (n, K, 3) raw."""
    return denormalize(np.asarray(flat).reshape(flat.shape[0], -1, 3), stats)


def _csv(text, cast):
    return tuple(cast(part) for part in text.split(",") if part)


def _load_flow_arg(args):
    if getattr(args, "flow", None):
        return load_flow(args.flow)[0]
    return None


# ---------------------------------------------------------------- gen-data

def cmd_gen_data(args):
    families = None if args.families == "all" else list(_csv(args.families, str))
    held_out = list(_csv(args.held_out, str)) if args.held_out else ()
    ds = make_dataset(seed=args.seed, count_per_family=args.count_per_family,
                      families=families, held_out=held_out, frames=args.frames)
    save_dataset(args.out, ds)
    _write_manifest(os.path.join(args.out, "run_manifest.json"),
                    "gen-data", args,
                    train_sequences=len(ds.train), test_sequences=len(ds.test))
    print(f"wrote {len(ds.train)} train / {len(ds.test)} test sequences "
          f"to {args.out}")
    return 0


# -------------------------------------------------------------------- train

def _build_train_config(args):
    base = calibrated_config() if args.calibrated else TrainConfig()
    d = base.to_dict()
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            d.update(json.load(fh))
    for key in ("mode", "seed", "epochs", "lr"):
        value = getattr(args, key)
        if value is not None:
            d[key] = value
    return TrainConfig.from_dict(d)


def cmd_train(args):
    ds = load_dataset(_data_dir(args))
    cfg = _build_train_config(args)
    os.makedirs(args.out, exist_ok=True)
    ckpt_dir = os.path.join(args.out, "checkpoints")
    model, state, log = train_vae(ds, cfg, checkpoint_dir=ckpt_dir,
                                  resume_from=args.resume,
                                  verbose=not args.quiet)
    last = os.path.join(ckpt_dir, f"epoch_{cfg.epochs:03d}.ckpt")
    with open(last, "rb") as fh:
        atomic_write_bytes(os.path.join(args.out, "model.ckpt"), fh.read())
    write_json(os.path.join(args.out, "train_log.json"), log)
    _write_manifest(os.path.join(args.out, "run_manifest.json"), "train", args,
                    config=cfg.to_dict(), config_hash=cfg.hash())
    final = log[-1] if log else {}
    print(f"trained mode={cfg.mode} for {cfg.epochs} epochs; final "
          f"recon {final.get('recon_mse', float('nan')):.4f} "
          f"kl {final.get('kl_nats', float('nan')):.3f} -> {args.out}/model.ckpt")
    return 0


# --------------------------------------------------------------- train-flow

def cmd_train_flow(args):
    ds = load_dataset(_data_dir(args))
    model, _ = load_model(args.ckpt)
    d = FlowTrainConfig().to_dict()
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            d.update(json.load(fh))
    for key, dest in (("seed", "seed"), ("epochs", "epochs"),
                      ("blocks", "n_blocks")):
        value = getattr(args, key)
        if value is not None:
            d[dest] = value
    fcfg = FlowTrainConfig.from_dict(d)
    flow, log = train_flow(ds, model, fcfg, verbose=not args.quiet)
    os.makedirs(args.out, exist_ok=True)
    save_flow_checkpoint(os.path.join(args.out, "flow.ckpt"), flow, fcfg)
    write_json(os.path.join(args.out, "flow_log.json"), log)
    _write_manifest(os.path.join(args.out, "run_manifest.json"),
                    "train-flow", args,
                    config=fcfg.to_dict(), config_hash=fcfg.hash())
    print(f"trained {fcfg.n_blocks}-block flow for {fcfg.epochs} epochs "
          f"-> {args.out}/flow.ckpt")
    return 0


# ----------------------------------------------------------------- transfer

def cmd_transfer(args):
    model, manifest = load_model(args.ckpt)
    stats = _resolve_stats(manifest, args)
    src = load_sequences(args.source)[0]
    tgt = load_sequences(args.target_frame)[0]
    out_flat = model.transfer(_norm_flat(src.frames, stats),
                              _norm_flat(tgt.frames, stats)[0])
    seq = PoseSequence(frames=_raw_frames(out_flat, stats), family=src.family,
                       source_id=f"transfer:{src.source_id}->{tgt.source_id}")
    save_sequences(args.out, [seq])
    _write_manifest(args.out + ".manifest.json", "transfer", args,
                    model_config_hash=manifest.get("config_hash"))
    print(f"re-enacted '{src.source_id}' from the first frame of "
          f"'{tgt.source_id}' -> {args.out}")
    return 0


# ------------------------------------------------------------------- sample

def cmd_sample(args):
    model, manifest = load_model(args.ckpt)
    ds = load_dataset(_data_dir(args))
    flow = _load_flow_arg(args)
    raw = evaluation.sample_sequences(model, ds, args.count, args.seed,
                                      flow=flow)
    source = "flow" if flow is not None else "prior"
    seqs = [PoseSequence(frames=raw[i], family="sampled",
                         source_id=f"{source}-seed{args.seed}-{i}")
            for i in range(raw.shape[0])]
    save_sequences(args.out, seqs)
    _write_manifest(args.out + ".manifest.json", "sample", args,
                    code_source=source,
                    model_config_hash=manifest.get("config_hash"))
    print(f"sampled {len(seqs)} sequences from the {source} -> {args.out}")
    return 0


def cmd_sample_loop(args):
    model, manifest = load_model(args.ckpt)
    stats = _resolve_stats(manifest, args)
    ds = load_dataset(_data_dir(args))
    flow = _load_flow_arg(args)
    test_norm = ds.test_array()
    start = test_norm[make_rng(args.seed, "loop-start")
                      .integers(0, test_norm.shape[0]), 0]
    flat = recursive_sample(model, flow, start, args.segments,
                            make_rng(args.seed, "loop"))
    source = "flow" if flow is not None else "prior"
    seq = PoseSequence(frames=_raw_frames(flat, stats), family="sampled",
                       source_id=f"loop-{source}-seed{args.seed}")
    save_sequences(args.out, [seq])
    _write_manifest(args.out + ".manifest.json", "sample-loop", args,
                    code_source=source,
                    model_config_hash=manifest.get("config_hash"))
    print(f"chained {args.segments} segments ({flat.shape[0]} frames) "
          f"-> {args.out}")
    return 0


# -------------------------------------------------------------- interpolate

def cmd_interpolate(args):
    model, manifest = load_model(args.ckpt)
    stats = _resolve_stats(manifest, args)
    a = load_sequences(args.source)[0]
    b = load_sequences(args.target)[0]
    a_n, b_n = _norm_flat(a.frames, stats), _norm_flat(b.frames, stats)
    grid = _csv(args.grid, float)
    seqs = []
    for lam in grid:
        flat = model.interpolate(a_n, b_n, lam)
        seqs.append(PoseSequence(frames=_raw_frames(flat, stats),
                                 family="interpolation",
                                 source_id=f"lam={lam:g}"))
    save_sequences(args.out, seqs)
    _write_manifest(args.out + ".manifest.json", "interpolate", args,
                    grid=list(grid),
                    model_config_hash=manifest.get("config_hash"))
    print(f"decoded {len(seqs)} interpolation points -> {args.out}")
    return 0


# ----------------------------------------------------------------- eval-*

def _parse_model_map(spec, ckpt_dir):
    models = {}
    for entry in spec.split(","):
        entry = entry.strip()
        if not entry:
            continue
        if "=" in entry:
            name, path = entry.split("=", 1)
        else:
            name, path = entry, os.path.join(ckpt_dir or ".", entry + ".ckpt")
        models[name] = load_model(path)[0]
    if not models:
        raise ContractError("--models is empty")
    return models


def _emit_report(report, out_dir, command, args, **extra):
    os.makedirs(out_dir, exist_ok=True)
    atomic_write_text(os.path.join(out_dir, "report.json"),
                      report.to_json() + "\n")
    atomic_write_text(os.path.join(out_dir, "report.txt"), report.text + "\n")
    _write_manifest(os.path.join(out_dir, "run_manifest.json"),
                    command, args, **extra)
    print(report.text)


def cmd_eval_transfer(args):
    ds = load_dataset(_data_dir(args))
    models = _parse_model_map(args.models, args.ckpt_dir)
    evals = evaluation.run_transfer_eval(
        models, ds, pair_count=args.pairs, seed=args.seed,
        timesteps=_csv(args.timesteps, int),
        upper_bound=not args.no_upper_bound)
    _emit_report(evaluation.transfer_report(evals), args.out,
                 "eval-transfer", args)
    return 0


def cmd_eval_diversity(args):
    ds = load_dataset(_data_dir(args))
    model, _ = load_model(args.ckpt)
    flow = _load_flow_arg(args)
    sizes = _csv(args.sizes, int)
    evals = [evaluation.run_diversity_eval(model, ds, seed=args.seed,
                                           sizes=sizes)]
    if flow is not None:
        evals.append(evaluation.run_diversity_eval(model, ds, seed=args.seed,
                                                   sizes=sizes, flow=flow))
    _emit_report(evaluation.diversity_report(evals), args.out,
                 "eval-diversity", args)
    return 0


def cmd_eval_realism(args):
    ds = load_dataset(_data_dir(args))
    model, _ = load_model(args.ckpt)
    flow = _load_flow_arg(args)
    kinds = _csv(args.kinds, str)
    ev = evaluation.run_realism_eval(model, ds, seed=args.seed, flow=flow,
                                     kinds=kinds, iterations=args.iterations)
    _emit_report(evaluation.realism_report(ev), args.out, "eval-realism", args)
    return 0


# --------------------------------------------------------------------- nn

def cmd_nn(args):
    ds = load_dataset(_data_dir(args))
    query = load_sequences(args.query)[0]
    if args.mode == "latent":
        model, manifest = load_model(args.ckpt)
        stats = _resolve_stats(manifest, args)
        q = _norm_flat(query.frames, stats)
        corpus = ds.train_array()
        idx, dists = metrics.nearest_neighbors(q, corpus, k=args.k,
                                               mode="latent", model=model)
    else:
        idx, dists = metrics.nearest_neighbors(
            query.frames, [s.frames for s in ds.train], k=args.k,
            mode="posture")
    rows = [{"rank": r + 1, "index": int(i), "distance": float(d),
             "source_id": ds.train[i].source_id, "family": ds.train[i].family}
            for r, (i, d) in enumerate(zip(idx, dists))]
    for row in rows:
        print(f"#{row['rank']}  {row['source_id']:<24} "
              f"({row['family']})  distance {row['distance']:.4f}")
    if args.out:
        write_json(args.out, {"mode": args.mode, "query": query.source_id,
                              "neighbors": rows})
        _write_manifest(args.out + ".manifest.json", "nn", args)
    return 0


# ------------------------------------------------------------------ render

def cmd_render(args):
    seqs = load_sequences(args.seq)
    if not 0 <= args.index < len(seqs):
        raise ContractError(
            f"--index {args.index} out of range; file holds {len(seqs)} "
            f"sequences")
    seq = seqs[args.index]
    frame_paths, anim = render.render_sequence(seq.frames, args.out,
                                               fps=args.fps, plane=args.plane)
    _write_manifest(os.path.join(args.out, "run_manifest.json"),
                    "render", args, frames=len(frame_paths))
    print(f"wrote {len(frame_paths)} frame SVGs and {anim}")
    return 0


# ------------------------------------------------------------------ parser

def build_parser():
    parser = argparse.ArgumentParser(
        prog="behaviorkit",
        description="Posture-independent behavior representations: "
                    "data, training, transfer, sampling and evaluation.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        return p

    p = add("gen-data", cmd_gen_data, "generate the synthetic motion dataset")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--families", default="all",
                   help=f"'all' or a comma list from {','.join(FAMILIES)}")
    p.add_argument("--held-out", default="",
                   help="families kept entirely in the test split")
    p.add_argument("--count-per-family", type=int, default=125)
    p.add_argument("--frames", type=int, default=50)

    p = add("train", cmd_train, "train a behavior model")
    p.add_argument("--data", help=f"dataset directory (default ${DATA_ENV})")
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--config", help="JSON file of training-config overrides")
    p.add_argument("--calibrated", action="store_true",
                   help="start from the tuned desk recipe instead of defaults")
    p.add_argument("--mode", choices=["full", "no_aux", "cvae", "cae"])
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--quiet", action="store_true")

    p = add("train-flow", cmd_train_flow, "fit the code-space flow")
    p.add_argument("--data", help=f"dataset directory (default ${DATA_ENV})")
    p.add_argument("--ckpt", required=True, help="behavior-model checkpoint")
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--config", help="JSON file of flow-config overrides")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--blocks", type=int, help="number of coupling blocks")
    p.add_argument("--quiet", action="store_true")

    p = add("transfer", cmd_transfer, "re-enact a behavior from a new posture")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--source", required=True, help="JSONL with the source")
    p.add_argument("--target-frame", required=True,
                   help="JSONL whose first sequence donates its first frame")
    p.add_argument("--out", required=True, help="output JSONL")
    p.add_argument("--data", help="dataset directory (stats fallback)")

    p = add("sample", cmd_sample, "decode codes drawn from the prior or flow")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True, help="output JSONL")
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--flow", help="flow checkpoint (optional)")
    p.add_argument("--data", help=f"dataset directory (default ${DATA_ENV})")

    p = add("sample-loop", cmd_sample_loop,
            "chain sampled segments, re-seeding from the last posture")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True, help="output JSONL")
    p.add_argument("--segments", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--flow", help="flow checkpoint (optional)")
    p.add_argument("--data", help=f"dataset directory (default ${DATA_ENV})")

    p = add("interpolate", cmd_interpolate,
            "decode convex combinations of two behavior codes")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--source", required=True, help="JSONL, code at weight 0")
    p.add_argument("--target", required=True, help="JSONL, code at weight 1")
    p.add_argument("--out", required=True, help="output JSONL")
    p.add_argument("--grid", default="0,0.2,0.4,0.6,0.8,1.0")
    p.add_argument("--data", help="dataset directory (stats fallback)")

    p = add("eval-transfer", cmd_eval_transfer,
            "displacement/recovery/latent-distance tables per model")
    p.add_argument("--models", required=True,
                   help="comma list of name=ckpt (or bare names under "
                        "--ckpt-dir)")
    p.add_argument("--ckpt-dir", help="directory for bare model names")
    p.add_argument("--data", help=f"dataset directory (default ${DATA_ENV})")
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--pairs", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--timesteps", default="1,10,20,30,40,50")
    p.add_argument("--no-upper-bound", action="store_true",
                   help="skip the end-to-end classifier upper bound")

    p = add("eval-diversity", cmd_eval_diversity,
            "nearest-neighbor spread of sampled sets")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", help=f"dataset directory (default ${DATA_ENV})")
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--sizes", default="10,50")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--flow", help="also evaluate flow-sampled sets")

    p = add("eval-realism", cmd_eval_realism,
            "real-vs-generated discriminator accuracies")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", help=f"dataset directory (default ${DATA_ENV})")
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--kinds", default="self,transfer,prior,flow")
    p.add_argument("--iterations", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--flow", help="flow checkpoint (needed for kind 'flow')")

    p = add("nn", cmd_nn, "nearest training sequences to a query")
    p.add_argument("--query", required=True, help="JSONL with the query")
    p.add_argument("--data", help=f"dataset directory (default ${DATA_ENV})")
    p.add_argument("--mode", choices=["latent", "posture"], default="latent")
    p.add_argument("--ckpt", help="model checkpoint (latent mode)")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--out", help="optional JSON output file")

    p = add("render", cmd_render, "emit stick-figure SVGs for a sequence")
    p.add_argument("--seq", required=True, help="JSONL sequence file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--fps", type=float, default=25.0)
    p.add_argument("--plane", choices=sorted(render.VIEW_PLANES),
                   default="xz")
    p.add_argument("--index", type=int, default=0,
                   help="which sequence in the file to render")

    return parser


_RUNTIME_ERRORS = (ContractError, SequenceFormatError, CheckpointError,
                   DivergenceError, NumericsError, OSError,
                   json.JSONDecodeError, KeyError, IndexError)


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "nn" and args.mode == "latent" and not args.ckpt:
        print("error: nn --mode latent requires --ckpt", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except _RUNTIME_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""``scatterscore`` command-line front end.

Every subcommand resolves a :class:`RunConfig` from an optional JSON
config file and its flags (flags win) and embeds it, with the toolkit
version, in each artifact it writes. Only input paths are recorded, so
an artifact does not depend on where it was written. Exit codes: 0 success, 1
operational failure, 2 usage error.

Config file schema (all sections optional)::

    {"seed": 0,
     "scattering": {"J": 8, "Q1": 8, "Q2": 1},
     "stft": {"window": 512, "hop": 256},
     "model": {"conv_blocks": [...], "blstm_hidden": 64, "dense_hidden": 64, "inputs": "spec+scat"},
     "train": {"max_epochs": 100, "patience": 10, "lr": 1e-4, "objective": "i+q", "max_steps": null}}
"""
from __future__ import annotations

import argparse
import csv
import functools
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import __version__
from .data import load_ratings, partition, synth_corpus
from .dsp import read_wav
from .errors import (
    EmptyDataset, InvalidConfig, MissingFeatures, NoOverlap, ScatterScoreError, TooFewPoints, ZeroVariance,
)
from .features import (
    extract_features, feature_path, inverse_rescale_intelligibility, read_features, rescale_intelligibility,
    write_features,
)
from .metrics import linreg_r2, pcc, report, srcc
from .nn import ModelConfig, load_checkpoint, save_checkpoint
from .scattering import ScatteringConfig
from .training import ScoredUtterance, TrainConfig, split_train_val, train

log = logging.getLogger("scatterscore")

EXPECTED_RATE = 16000
CONFIG_SECTIONS = ("seed", "scattering", "stft", "model", "train")
# (inputs, objective) -> ablation system name
SYSTEMS = {
    ("spec+scat", "i+q"): "InQSS",
    ("spec+scat", "i"): "S_III",
    ("scat", "i"): "S_II",
    ("spec", "i"): "S_I",
}
INPUT_LABELS = {"spec+scat": "scat+spec", "scat": "scat", "spec": "spec"}
OBJECTIVE_LABELS = {"i+q": "I+Q", "i": "I", "q": "Q"}
TABLE_COLUMNS = ("system", "input", "objective", "MSE", "PCC", "SRCC")


@dataclass
class RunConfig:
    command: str
    seed: int = 0
    scattering: ScatteringConfig = field(default_factory=ScatteringConfig)
    stft: dict = field(default_factory=lambda: {"window": 512, "hop": 256})
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    paths: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "command": self.command,
            "seed": self.seed,
            "scattering": asdict(self.scattering),
            "stft": dict(self.stft),
            "model": self.model.to_dict(),
            "train": asdict(self.train),
            "paths": dict(self.paths),
            "options": dict(self.options),
        }

    def provenance(self):
        return {"toolkit": "scatterscore", "version": __version__, "run_config": self.to_dict()}


def _load_config_file(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise InvalidConfig(f"{path}: top level must be an object")
    unknown = sorted(set(doc) - set(CONFIG_SECTIONS))
    if unknown:
        raise InvalidConfig(f"{path}: unknown section(s) {', '.join(unknown)}")
    return doc


def _section(doc, name, cls):
    try:
        return cls(**doc.get(name, {}))
    except TypeError as exc:
        raise InvalidConfig(f"config section {name!r}: {exc}") from None


def resolve_config(args, paths, options=None, **overrides) -> RunConfig:
    """Merge defaults, the ``--config`` file and flags (in that order)."""
    doc = _load_config_file(getattr(args, "config", None))
    seed = args.seed if getattr(args, "seed", None) is not None else int(doc.get("seed", 0))
    if seed < 0:
        raise InvalidConfig(f"seed must be non-negative, got {seed}")
    stft = {"window": 512, "hop": 256}
    stft.update(doc.get("stft", {}))
    if set(stft) != {"window", "hop"}:
        raise InvalidConfig(f"stft section accepts only window and hop, got {sorted(stft)}")
    scat = _section(doc, "scattering", ScatteringConfig)
    try:
        model = ModelConfig.from_dict({**ModelConfig().to_dict(), **doc.get("model", {}), "seed": seed})
    except TypeError as exc:
        raise InvalidConfig(f"config section 'model': {exc}") from None
    train_cfg = _section(doc, "train", TrainConfig)
    train_cfg = replace(train_cfg, seed=seed, **{k: v for k, v in overrides.items() if k != "inputs" and v is not None})
    if overrides.get("inputs") is not None:
        model = replace(model, inputs=overrides["inputs"])
    return RunConfig(args.command, seed, scat, stft, model, train_cfg, paths, options or {})


def _dump_json(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _list_wavs(wav_dir):
    if not os.path.isdir(wav_dir):
        raise FileNotFoundError(f"not a directory: {wav_dir}")
    names = sorted(n for n in os.listdir(wav_dir) if n.lower().endswith(".wav"))
    return [os.path.join(wav_dir, n) for n in names]


def _utterance_id(path):
    return os.path.splitext(os.path.basename(path))[0]


def _load_audio(path, allow_any_rate):
    audio = read_wav(path)
    if audio.sample_rate != EXPECTED_RATE:
        if not allow_any_rate:
            raise InvalidConfig(f"{path}: sample rate {audio.sample_rate} Hz, expected {EXPECTED_RATE} "
                                "(pass --allow-any-rate to process anyway)")
        log.warning("%s: sample rate %d Hz, processing without resampling", path, audio.sample_rate)
    return audio


def _features_for(path, scat, stft, allow_any_rate):
    audio = _load_audio(path, allow_any_rate)
    return extract_features(audio, scat, stft["window"], stft["hop"], _utterance_id(path))


def _extract_task(path, out_dir, scat, stft, allow_any_rate):
    """Worker body; returns ``(path, frames, error)`` so failures cross process boundaries."""
    try:
        sample = _features_for(path, scat, stft, allow_any_rate)
        if out_dir is not None:
            write_features(sample, feature_path(out_dir, sample.utterance_id))
            return path, sample.frames, None
        return path, sample, None
    except (ScatterScoreError, OSError, ValueError) as exc:
        return path, None, str(exc)


def _ordered_map(fn, items, jobs):
    """Lazy map preserving input order; runs in worker processes when ``jobs > 1``."""
    if jobs <= 1:
        yield from map(fn, items)
        return
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        yield from pool.map(fn, items)


# --- subcommands -------------------------------------------------------------

def cmd_extract(args):
    rc = resolve_config(args, {"wav_dir": args.wav_dir},
                        {"allow_any_rate": args.allow_any_rate, "keep_going": args.keep_going})
    wavs = _list_wavs(args.wav_dir)
    if not wavs:
        print(f"error: no input files in {args.wav_dir}", file=sys.stderr)
        return 1
    os.makedirs(args.out_dir, exist_ok=True)
    task = functools.partial(_extract_task, out_dir=args.out_dir, scat=rc.scattering, stft=rc.stft,
                             allow_any_rate=args.allow_any_rate)
    files, failures = [], []
    for path, frames, err in _ordered_map(task, wavs, args.jobs):
        if err is None:
            files.append({"utterance_id": _utterance_id(path), "wav": os.path.basename(path), "frames": frames})
            continue
        failures.append({"wav": os.path.basename(path), "error": err})
        if not args.keep_going:
            log.error("%s (stopping; --keep-going skips failed files)", err)
            break
        log.warning("%s", err)
    _dump_json(os.path.join(args.out_dir, "extract.json"),
               {"provenance": rc.provenance(), "files": files, "failures": failures})
    print(f"extracted {len(files)} of {len(wavs)} files, {len(failures)} failed")
    return 1 if failures and not args.keep_going else 0


def _training_samples(manifest, features_dir):
    uids = sorted({r.utterance_id for r in manifest.train})
    missing = [u for u in uids if not os.path.exists(feature_path(features_dir, u))]
    if missing:
        raise MissingFeatures(missing)
    feats = {u: read_features(feature_path(features_dir, u)) for u in uids}
    return [
        ScoredUtterance(feats[r.utterance_id], rescale_intelligibility(r.intelligibility), float(r.quality))
        for r in manifest.train
    ]


def cmd_train(args):
    rc = resolve_config(
        args, {"ratings": args.ratings, "features": args.features}, {},
        inputs=args.inputs, objective=args.objective, lr=args.lr, max_epochs=args.epochs,
        patience=args.patience, max_steps=args.max_steps,
    )
    manifest = partition(load_ratings(args.ratings))
    if not manifest.train:
        raise EmptyDataset("no training ratings (every utterance went to the test set)")
    samples = _training_samples(manifest, args.features)
    if len(samples) >= 10:
        train_set, val_set = split_train_val(samples, rc.seed)
    else:
        log.warning("only %d training samples; selecting on the training set", len(samples))
        train_set, val_set = samples, None
    os.makedirs(args.out, exist_ok=True)
    prov = rc.provenance()
    result = train(train_set, val_set, rc.model, rc.train,
                   log_path=os.path.join(args.out, "train_log.jsonl"), log_header={"provenance": prov})
    meta = {
        "provenance": prov,
        "best_epoch": result.state.best_epoch,
        "best_val_loss": result.state.best_val_loss,
        "steps": result.state.steps,
        "train_samples": len(train_set),
        "val_samples": len(val_set) if val_set else 0,
    }
    save_checkpoint(result.model, os.path.join(args.out, "model.inqm"), meta)
    with open(os.path.join(args.out, "manifest.json"), "w", encoding="utf-8") as fh:
        fh.write(manifest.to_json(provenance=prov) + "\n")
    final = result.log[-1]
    print(f"trained {result.state.epoch} epochs / {result.state.steps} steps; "
          f"best epoch {result.state.best_epoch}, final train_L {final['train_L']:.6f}")
    return 0


def _clamp(x, lo, hi):
    return float(min(max(x, lo), hi))


def cmd_predict(args):
    wavs = list(args.wav) if args.wav else _list_wavs(args.wav_dir)
    if not wavs:
        print("error: no input files", file=sys.stderr)
        return 1
    model, meta = load_checkpoint(args.checkpoint)
    trained = meta.get("provenance", {}).get("run_config", {})
    scat = ScatteringConfig(**trained.get("scattering", {}))
    stft = trained.get("stft", {"window": 512, "hop": 256})
    rc = RunConfig("predict", int(trained.get("seed", 0)), scat, stft, model.config,
                   TrainConfig(**trained["train"]) if "train" in trained else TrainConfig(),
                   {"checkpoint": args.checkpoint, "wavs": [os.path.basename(w) for w in wavs]},
                   {"allow_any_rate": args.allow_any_rate})
    task = functools.partial(_extract_task, out_dir=None, scat=scat, stft=stft, allow_any_rate=args.allow_any_rate)
    rows = []
    for path, sample, err in _ordered_map(task, wavs, args.jobs):
        if err is not None:
            raise ScatterScoreError(err)
        pred = model.predict(sample)
        rows.append({
            "utterance_id": sample.utterance_id,
            "intelligibility_0_10": _clamp(inverse_rescale_intelligibility(pred.I), 0.0, 10.0),
            "quality_1_5": _clamp(pred.Q, 1.0, 5.0),
            "raw": {"I": float(pred.I), "Q": float(pred.Q)},
            "frames": int(pred.frames),
        })
    doc = {"provenance": rc.provenance(), "checkpoint": _model_label(trained), "predictions": rows}
    _dump_json(args.out, doc)
    print(f"wrote {len(rows)} predictions to {args.out}")
    return 0


def _model_label(run_config):
    inputs = run_config.get("model", {}).get("inputs", "spec+scat")
    objective = run_config.get("train", {}).get("objective", "i+q")
    return {
        "system": SYSTEMS.get((inputs, objective), "custom"),
        "input": INPUT_LABELS.get(inputs, inputs),
        "objective": OBJECTIVE_LABELS.get(objective, objective),
    }


def _task_report(pred, actual):
    r = report(pred, actual)
    return {"mse": r["mse"], "pcc": r["pcc"], "srcc": r["srcc"], "n": r["n"]}


def cmd_evaluate(args):
    rc = RunConfig("evaluate", paths={"predictions": args.predictions, "ratings": args.ratings})
    with open(args.predictions, encoding="utf-8") as fh:
        pdoc = json.load(fh)
    preds = {}
    for row in pdoc.get("predictions", []):
        uid = row["utterance_id"]
        if uid in preds and preds[uid] != row:
            raise InvalidConfig(f"conflicting predictions for {uid!r}")
        preds[uid] = row
    manifest = partition(load_ratings(args.ratings))
    items = sorted((t for t in manifest.test if t.utterance_id in preds), key=lambda t: t.utterance_id)
    if len(items) < 2:
        raise NoOverlap(f"{len(items)} test utterance(s) have predictions; need at least 2")
    # intelligibility compared on the 0-5 training scale, from the clamped reported value
    pi = [rescale_intelligibility(preds[t.utterance_id]["intelligibility_0_10"]) for t in items]
    ai = [rescale_intelligibility(t.intelligibility) for t in items]
    pq = [preds[t.utterance_id]["quality_1_5"] for t in items]
    aq = [t.quality for t in items]
    intel = _task_report(pi, ai)
    label = pdoc.get("checkpoint") or _model_label({})
    row = {**label, "MSE": intel["mse"], "PCC": intel["pcc"], "SRCC": intel["srcc"]}
    doc = {
        "provenance": rc.provenance(),
        "model_provenance": pdoc.get("provenance"),
        "scale": {"intelligibility": "0-5 (character count out of 10, halved)", "quality": "1-5"},
        "intelligibility": intel,
        "quality": _task_report(pq, aq),
        "ablation_row": row,
        "unmatched_test_utterances": len(manifest.test) - len(items),
    }
    _dump_json(args.out, doc)
    if args.table:
        new = not os.path.exists(args.table) or os.path.getsize(args.table) == 0
        with open(args.table, "a", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            if new:
                w.writerow(TABLE_COLUMNS)
            w.writerow([_fmt(row[c]) for c in TABLE_COLUMNS])
    print("  ".join(f"{c}={_fmt(row[c])}" for c in TABLE_COLUMNS))
    return 0


def _fmt(v):
    if v is None:
        return "nan"
    return f"{v:.3f}" if isinstance(v, float) else str(v)


def _safe(fn, *a):
    try:
        return fn(*a)
    except (ZeroVariance, TooFewPoints):
        return None


def _r2_pair(x, y, train_idx, held_idx):
    fit = _safe(linreg_r2, x, y)
    out = {"in_sample": fit.r2 if fit else None, "held_out": None,
           "slope": fit.slope if fit else None, "intercept": fit.intercept if fit else None}
    if held_idx is not None:
        held = _safe(linreg_r2, x[train_idx], y[train_idx], x[held_idx], y[held_idx])
        out["held_out"] = held.r2 if held else None
    return out


def cmd_analyze(args):
    rc = resolve_config(args, {"ratings": args.ratings},
                        {"exclude_clean": args.exclude_clean, "holdout_fraction": args.holdout_fraction})
    records = load_ratings(args.ratings)
    if args.exclude_clean:
        records = [r for r in records if not r.is_clean]
    if not records:
        raise EmptyDataset("no ratings to analyze")
    if not 0.0 <= args.holdout_fraction < 1.0:
        raise InvalidConfig("--holdout-fraction must be in [0, 1)")
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "scatter.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["utterance_id", "rater_id", "quality", "intelligibility"])
        for r in records:
            w.writerow([r.utterance_id, r.rater_id, r.quality, r.intelligibility])
    q = np.array([r.quality for r in records], dtype=float)
    i = np.array([r.intelligibility for r in records], dtype=float)
    train_idx = held_idx = None
    if args.holdout_fraction > 0:
        order = np.random.default_rng(rc.seed).permutation(len(records))
        n_held = int(math.floor(len(records) * args.holdout_fraction))
        if n_held < 2 or len(records) - n_held < 2:
            raise InvalidConfig(f"held-out split of {len(records)} ratings leaves fewer than 2 points on a side")
        held_idx, train_idx = np.sort(order[:n_held]), np.sort(order[n_held:])
    doc = {
        "provenance": rc.provenance(),
        "n": len(records),
        "pcc": _safe(pcc, q, i),
        "srcc": _safe(srcc, q, i),
        "r2_q_to_i": _r2_pair(q, i, train_idx, held_idx),
        "r2_i_to_q": _r2_pair(i, q, train_idx, held_idx),
    }
    _dump_json(os.path.join(args.out, "correlation.json"), doc)
    print(f"n={doc['n']} pcc={_fmt(doc['pcc'])} srcc={_fmt(doc['srcc'])} "
          f"r2_q_to_i={_fmt(doc['r2_q_to_i']['in_sample'])} r2_i_to_q={_fmt(doc['r2_i_to_q']['in_sample'])}")
    return 0


def cmd_synth(args):
    rc = resolve_config(args, {}, {"n": args.n, "test_fraction": args.test_fraction})
    path = synth_corpus(args.out_dir, args.n, rc.seed, test_fraction=args.test_fraction)
    _dump_json(os.path.join(args.out_dir, "synth.json"), {"provenance": rc.provenance(), "ratings": "ratings.csv"})
    print(f"wrote {args.n} utterances and {path}")
    return 0


# --- argument parsing ----------------------------------------------------------

def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {text}")
    return value


def _non_negative_int(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected an integer >= 0, got {text}")
    return value


def build_parser():
    parser = argparse.ArgumentParser(prog="scatterscore", description="Non-intrusive intelligibility and quality scoring.")
    parser.add_argument("--version", action="version", version=f"scatterscore {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--config", help="JSON config file; flags override its values")
        if seed:
            p.add_argument("--seed", type=_non_negative_int)

    p = sub.add_parser("extract", help="WAV directory -> feature files")
    p.add_argument("--wav-dir", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--allow-any-rate", action="store_true", help="accept non-16 kHz input with a warning")
    p.add_argument("--keep-going", action="store_true", help="skip unreadable files instead of stopping")
    p.add_argument("--jobs", type=_positive_int, default=1)
    common(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="ratings + features -> checkpoint, log, manifest")
    p.add_argument("--ratings", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--objective", choices=("i", "q", "i+q"))
    p.add_argument("--inputs", choices=("spec", "scat", "spec+scat"))
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=_positive_int)
    p.add_argument("--patience", type=_non_negative_int)
    p.add_argument("--max-steps", type=_positive_int)
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="checkpoint + WAVs -> predictions JSON")
    p.add_argument("--checkpoint", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--wav", action="append")
    src.add_argument("--wav-dir")
    p.add_argument("--out", required=True)
    p.add_argument("--allow-any-rate", action="store_true")
    p.add_argument("--jobs", type=_positive_int, default=1)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="predictions vs averaged test ratings -> metrics")
    p.add_argument("--predictions", required=True)
    p.add_argument("--ratings", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--table", help="append the MSE/PCC/SRCC row to this CSV")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("analyze", help="quality/intelligibility correlation + scatter CSV")
    p.add_argument("--ratings", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--exclude-clean", action="store_true")
    p.add_argument("--holdout-fraction", type=float, default=0.0)
    common(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("synth", help="write a synthetic rated corpus")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--test-fraction", type=float, default=0.25)
    common(p)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ScatterScoreError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

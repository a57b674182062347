"""Command-line entry point: ``spoofdet <command> ...``.

Exit codes: 0 success, 1 data or runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import metrics
from .data import (
    DEFAULT_GENUINE_FRACTION,
    DatasetManifest,
    Label,
    ManifestEntry,
    SyntheticRecipe,
    generate_synthetic,
    load_index,
    load_manifest,
    read_wav,
    split,
    write_manifest,
    write_wav,
)
from .dsp import featurize, read_raw, write_raw
from .models import (
    BASELINE_KINDS,
    CctConfig,
    CctModel,
    CheckpointError,
    CnnConfig,
    CnnModel,
    LinearHyperparams,
    LinearModel,
    TrivialBaseline,
    load_checkpoint,
    save_checkpoint,
    train_linear,
)
from .rng import default_seed
from .training import EpochRecord, RunLog, TrainConfig, param_norm, train

logger = logging.getLogger("spoofdet")

MODEL_KINDS = ("cct", "cnn", "logistic", "svm")
SPLIT_FILES = {"train": "train.csv", "validation": "val.csv", "test": "test.csv"}


class UsageError(Exception):
    """Bad flags or configuration; exit code 2."""


class DataError(Exception):
    """Bad inputs discovered while working; exit code 1."""


# -- helpers ---------------------------------------------------------------------

def _seed(args) -> int:
    return args.seed if args.seed is not None else default_seed(0)


def _require_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} {path!r} does not exist")
    return p


def load_grids(index_path: str) -> tuple[np.ndarray, np.ndarray, DatasetManifest]:
    """Spectrogram caches of an index as an (N, 128, 128) array plus labels."""
    index = load_index(_require_file(index_path, "index"))
    if not len(index):
        raise DataError(f"{index_path}: index is empty")
    grids = np.stack([read_raw(index.resolve(e, cache=True)) for e in index])
    return grids, index.labels, index


def _strict(cls, d, path: str):
    if not isinstance(d, dict):
        raise UsageError(f"config key {path} must be an object")
    known = {f.name for f in fields(cls)}
    for k in d:
        if k not in known:
            raise UsageError(f"unknown config key {path}.{k}")
    try:
        return cls(**d)
    except (TypeError, ValueError) as e:
        raise UsageError(f"config key {path}: {e}") from None


def parse_train_config(raw: dict, kind: str, preset: str, seed: int):
    """(model config, training config) from the JSON config document.

    Recognised sections: ``model`` (architecture fields, applied over the
    preset), ``train`` (optimiser and loop) and ``linear`` (SGD for the
    linear models). Anything else is rejected.
    """
    if not isinstance(raw, dict):
        raise UsageError("config must be a JSON object")
    allowed = {"linear"} if kind in ("logistic", "svm") else {"model", "train"}
    for k in raw:
        if k not in allowed:
            raise UsageError(f"unknown config key {k}")
    if kind in ("logistic", "svm"):
        hp = _strict(LinearHyperparams, {"seed": seed, **raw.get("linear", {})}, "linear")
        return None, hp
    base = CctConfig.preset(preset) if kind == "cct" else CnnConfig.preset(preset)
    model_cfg = _strict(type(base), {**base.to_dict(), **raw.get("model", {})}, "model")
    defaults = {k: v for k, v in vars(TrainConfig.preset(preset)).items()}
    train_cfg = _strict(TrainConfig, {**defaults, "seed": seed, **raw.get("train", {})}, "train")
    return model_cfg, train_cfg


def _scores(model, grids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(labels, scores); scores are monotone in P(genuine) and never saturate."""
    if isinstance(model, LinearModel):
        s = model.decision(grids.reshape(len(grids), -1))
    else:
        logits = model.logits(grids)
        s = logits[:, int(Label.GENUINE)] - logits[:, int(Label.SYNTHESIZED)]
    return (s >= 0).astype(np.int64), s


def _probability(model, grid: np.ndarray) -> float:
    if isinstance(model, LinearModel):
        return float(model.predict_proba(grid.reshape(1, -1))[0])
    return float(model.predict_proba(grid[None])[0])


def _load_model(path: str):
    try:
        return load_checkpoint(_require_file(path, "checkpoint"))
    except CheckpointError as e:
        raise DataError(str(e)) from None


# -- commands --------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    out = Path(args.out)
    if out.exists() and not out.is_dir():
        raise UsageError(f"{out} exists and is not a directory")
    if out.is_dir() and any(out.iterdir()) and not args.force:
        raise UsageError(f"{out} is not empty; pass --force to write into it")
    if not 0.0 < args.genuine_frac < 1.0:
        raise UsageError("--genuine-frac must be in (0, 1)")
    if args.n < 20:
        raise UsageError("--n must be at least 20")
    seed = _seed(args)
    recipe = SyntheticRecipe(n_total=args.n, genuine_fraction=args.genuine_frac, seed=seed)
    if min(recipe.n_genuine, args.n - recipe.n_genuine) < 3:
        # every class must reach all three splits
        raise UsageError(f"--n {args.n} with --genuine-frac {args.genuine_frac} leaves a class with fewer than 3 files")
    (out / "wav").mkdir(parents=True, exist_ok=True)
    entries = []
    for i, (signal, label) in enumerate(generate_synthetic(recipe)):
        rel = f"wav/{i:06d}_{label}.wav"
        write_wav(out / rel, signal)
        entries.append(ManifestEntry(rel, label))
    full = DatasetManifest(tuple(entries), root=out)
    write_manifest(full, out / "manifest.csv")
    for part in split(full, (0.6, 0.2, 0.2), seed):
        write_manifest(part, out / SPLIT_FILES[part.split])
    n_gen = sum(e.label == Label.GENUINE for e in entries)
    print(f"wrote {len(entries)} files ({n_gen} genuine) to {out}")
    return 0


def _featurize_one(job: tuple[str, str]) -> Optional[str]:
    src, dst = job
    try:
        write_raw(featurize(read_wav(src)), dst)
    except (OSError, ValueError) as e:
        return f"{type(e).__name__}: {e}"
    return None


def cmd_featurize(args) -> int:
    manifest = load_manifest(_require_file(args.manifest, "manifest"))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    index_path = Path(args.index) if args.index else out / f"{Path(args.manifest).stem}_index.csv"
    jobs, names, seen = [], [], set()
    for e in manifest:
        name = Path(e.path).with_suffix(".spg").name
        if name in seen:
            raise UsageError(f"two manifest entries map to cache file {name}")
        seen.add(name)
        names.append(name)
        jobs.append((str(manifest.resolve(e)), str(out / name)))
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            results = list(pool.map(_featurize_one, jobs, chunksize=8))
    else:
        results = [_featurize_one(j) for j in jobs]
    # index paths are relative to the index file so the tree can be moved
    base = index_path.resolve().parent
    kept, failed = [], []
    for e, name, err in zip(manifest, names, results):
        if err is None:
            wav = os.path.relpath(manifest.resolve(e).resolve(), base)
            cache = os.path.relpath((out / name).resolve(), base)
            kept.append(ManifestEntry(Path(wav).as_posix(), e.label, Path(cache).as_posix()))
        else:
            failed.append((e.path, err))
    write_manifest(DatasetManifest(tuple(kept)), index_path)
    print(f"featurized {len(kept)} of {len(jobs)} files; index {index_path}")
    for path, err in failed:
        print(f"failed: {path}: {err}", file=sys.stderr)
    return 1 if failed else 0


def cmd_train(args) -> int:
    seed = _seed(args)
    raw = {}
    if args.config:
        try:
            raw = json.loads(_require_file(args.config, "config").read_text())
        except json.JSONDecodeError as e:
            raise UsageError(f"{args.config}: invalid JSON ({e})") from None
    model_cfg, train_cfg = parse_train_config(raw, args.model, args.preset, seed)
    x, y, _ = load_grids(args.train)
    xv, yv, _ = load_grids(args.val)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    runlog = Path(args.runlog) if args.runlog else out.parent / "runlog.jsonl"

    def report(r: EpochRecord) -> None:
        v = r.validation
        print(f"epoch {r.epoch:3d} loss {r.train_loss:.4f} val roc_auc {v['roc_auc']:.4f} "
              f"balanced_acc {v['balanced_accuracy']:.4f}", flush=True)

    if args.model in ("logistic", "svm"):
        log = RunLog()
        best = {"auc": -np.inf}

        def on_epoch(epoch: int, m: LinearModel, loss: float) -> None:
            labels, s = _scores(m, xv)
            rep = metrics.evaluate(yv, labels, s)
            rec = EpochRecord(epoch, loss, rep.to_dict(), float(np.sqrt(m.weights @ m.weights + m.bias**2)), 0.0)
            log.append(rec)
            report(rec)
            if rep.roc_auc > best["auc"]:
                best.update(auc=rep.roc_auc, model=m)
                log.best_epoch = epoch

        train_linear(x.reshape(len(x), -1), y, args.model, train_cfg, on_epoch)
        model = best["model"]
    else:
        model = (CctModel if args.model == "cct" else CnnModel)(model_cfg, seed=seed)
        model, log = train(model, x, y, xv, yv, train_cfg, on_epoch=report)
        print(f"best epoch {log.best_epoch}, parameter norm {param_norm(model):.4f}")
    save_checkpoint(model, out)
    log.write_jsonl(runlog)
    print(f"checkpoint {out}; run log {runlog}")
    return 0


def _evaluate(args) -> metrics.MetricsReport:
    if args.model in BASELINE_KINDS:
        # label-only classifiers never look at the spectrograms
        y = load_index(_require_file(args.test, "index")).labels
        if not y.size:
            raise DataError(f"{args.test}: index is empty")
        train_labels = None
        if args.model == "prior":
            if not args.train:
                raise UsageError("--model prior needs --train for the training class prior")
            train_labels = load_index(_require_file(args.train, "index")).labels
        baseline = TrivialBaseline.fit(args.model, train_labels, seed=_seed(args))
        labels, scores = baseline.predict(len(y))
    else:
        x, y, _ = load_grids(args.test)
        labels, scores = _scores(_load_model(args.model), x)
    return metrics.evaluate(y, labels, scores)


def _write_curves(report: metrics.MetricsReport, roc_path: Path, pr_path: Path) -> None:
    metrics.write_curve(report.roc_curve, roc_path)
    metrics.write_curve(report.pr_curve, pr_path)


def cmd_eval(args) -> int:
    report = _evaluate(args)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(report.to_json() + "\n")
    stem = out.with_suffix("")
    _write_curves(report, Path(f"{stem}_roc.csv"), Path(f"{stem}_pr.csv"))
    print(json.dumps(report.table_row()))
    return 0


def cmd_curves(args) -> int:
    report = _evaluate(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_curves(report, out / "roc.csv", out / "pr.csv")
    print(f"wrote {out / 'roc.csv'} and {out / 'pr.csv'}")
    return 0


def cmd_infer(args) -> int:
    try:
        model = _load_model(args.model)
        grid = featurize(read_wav(_require_file(args.wav, "wav file")))
    except (UsageError, DataError, OSError, ValueError) as e:
        print(json.dumps({"error": type(e).__name__, "reason": str(e)}))
        return 1
    p = _probability(model, grid)
    label = Label.GENUINE if p >= 0.5 else Label.SYNTHESIZED
    print(json.dumps({"label": str(label), "p_genuine": p, "p_synthesized": 1.0 - p}))
    return 0


def cmd_gradcheck(args) -> int:
    from .verify import run_gradcheck

    report = run_gradcheck(args.preset, _seed(args), fault=args.inject_fault, coords=args.coords)
    for name, err in report.errors.items():
        status = "ok" if err < report.tolerance else "FAIL"
        skipped = report.skipped.get(name, 0)
        note = f" ({skipped} kink coordinates skipped)" if skipped else ""
        print(f"{name:40s} {err:.3e} {status}{note}")
    print(f"max relative error {report.worst:.3e}; {'PASS' if report.passed else 'FAIL'}")
    return 0 if report.passed else 1


# -- parser ----------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="spoofdet", description="Synthesized speech detection on spectrograms.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def seeded(sp):
        sp.add_argument("--seed", type=int, default=None, help="defaults to $SPOOFDET_SEED, else 0")
        return sp

    g = seeded(sub.add_parser("gen-data", help="write a synthetic WAV corpus and split manifests"))
    g.add_argument("--out", required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--genuine-frac", type=float, default=DEFAULT_GENUINE_FRACTION)
    g.add_argument("--force", action="store_true")
    g.set_defaults(func=cmd_gen_data)

    f = sub.add_parser("featurize", help="compute spectrogram caches for a manifest")
    f.add_argument("--manifest", required=True)
    f.add_argument("--out", required=True)
    f.add_argument("--index", help="index CSV path (default OUT/<manifest>_index.csv)")
    f.add_argument("--jobs", type=int, default=1)
    f.set_defaults(func=cmd_featurize)

    t = seeded(sub.add_parser("train", help="train a model on featurized indexes"))
    t.add_argument("--model", required=True, choices=MODEL_KINDS)
    t.add_argument("--train", required=True)
    t.add_argument("--val", required=True)
    t.add_argument("--config")
    t.add_argument("--preset", choices=("paper", "desk"), default="desk")
    t.add_argument("--out", required=True)
    t.add_argument("--runlog")
    t.set_defaults(func=cmd_train)

    for name, func, helptext in (
        ("eval", cmd_eval, "write a metrics report and curve CSVs"),
        ("curves", cmd_curves, "write ROC and PR curve CSVs"),
    ):
        e = seeded(sub.add_parser(name, help=helptext))
        e.add_argument("--model", required=True, help="checkpoint path or minority|majority|prior")
        e.add_argument("--test", required=True)
        e.add_argument("--train", help="training index, needed by the prior baseline")
        e.add_argument("--out", required=True)
        e.set_defaults(func=func)

    i = sub.add_parser("infer", help="classify one WAV file")
    i.add_argument("--model", required=True)
    i.add_argument("--wav", required=True)
    i.set_defaults(func=cmd_infer)

    c = seeded(sub.add_parser("gradcheck", help="finite-difference check of ops and a full model"))
    c.add_argument("--preset", choices=("paper", "desk"), default="desk")
    c.add_argument("--coords", type=int, default=4, help="sampled coordinates per model tensor")
    c.add_argument("--inject-fault", action="store_true")
    c.set_defaults(func=cmd_gradcheck)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
        return args.func(args)
    except UsageError as e:
        print(f"spoofdet: error: {e}", file=sys.stderr)
        return 2
    except (DataError, OSError, ValueError, KeyError, RuntimeError) as e:
        print(f"spoofdet: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

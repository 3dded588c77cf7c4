"""Batch command-line front end.

Commands share a working directory (``--out``) and hand off through files::

    prepare  -> dataset.nbio, split.json, class_counts.csv, prepare.json
    train    -> model.bsnt, train_log.jsonl, history.csv, params.json
    eval     -> eval_<split>/{metrics.json, per_class.csv, summary.csv, confusion_matrix.csv, roc/, *.svg}
                eval_<split>/timing.json
    predict  -> CSV of per-row class probabilities

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from nbaiot_ids import __version__
from nbaiot_ids.errors import DataError, ModelFormatError, NumericError
from nbaiot_ids.ingest import (
    DEFAULT_CLASS_MAP,
    ClassMap,
    DatasetSplit,
    class_counts,
    load_dataset,
    read_cache,
    read_feature_csv,
    split_dataset,
    write_cache,
)
from nbaiot_ids.metrics import full_report
from nbaiot_ids.nn import ModelConfig, init_model, load_model, closed_form_param_estimate, param_breakdown, param_count, save_model
from nbaiot_ids.preprocess import fit_scaler, transform
from nbaiot_ids.report import format_timing, table4_header, table4_row, write_report
from nbaiot_ids.trainer import EpochRecord, TrainConfig, evaluate, fit

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

DATASET_FILE = "dataset.nbio"
SPLIT_FILE = "split.json"
MODEL_FILE = "model.bsnt"
HISTORY_COLUMNS = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc", "seconds", "ms_per_step")

log = logging.getLogger("nbaiot_ids")


class UsageError(Exception):
    pass


def _emit(args, human: str, payload: dict) -> None:
    if args.json:
        print(json.dumps(payload, indent=2, default=float))
    else:
        print(human)


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


# -- prepare ----------------------------------------------------------------------

def cmd_prepare(args) -> int:
    class_map = ClassMap.from_file(args.class_map) if args.class_map else DEFAULT_CLASS_MAP
    if args.per_class_cap is not None and args.per_class_cap < 0:
        raise UsageError("--per-class-cap must be non-negative")
    try:
        split_check = (args.test_frac, args.val_frac)
        if not (0 <= split_check[0] and 0 <= split_check[1] and sum(split_check) < 1):
            raise ValueError
    except ValueError:
        raise UsageError(f"invalid split fractions test={args.test_frac} val={args.val_frac}") from None

    dataset = load_dataset(args.data_root, class_map, args.per_class_cap, args.seed)
    split = split_dataset(dataset, args.test_frac, args.val_frac, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_cache(dataset, out / DATASET_FILE)
    manifest_bytes = json.dumps(split.manifest(), sort_keys=True, separators=(",", ":")).encode()
    (out / SPLIT_FILE).write_bytes(manifest_bytes)

    counts = class_counts(dataset)
    per_split = {name: class_counts(split.part(name)) for name in ("train", "val", "test")}
    with (out / "class_counts.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["class", "total", "train", "val", "test"])
        for c, name in enumerate(dataset.class_names):
            w.writerow([name, counts[c], *(per_split[s][c] for s in ("train", "val", "test"))])
        w.writerow(["total", counts.sum(), *(per_split[s].sum() for s in ("train", "val", "test"))])

    summary = {
        "n_samples": len(dataset),
        "class_counts": dict(zip(dataset.class_names, counts.tolist())),
        "split_sizes": {k: int(v.sum()) for k, v in per_split.items()},
        "manifest_sha256": _sha256(manifest_bytes),
        "dataset_sha256": _sha256((out / DATASET_FILE).read_bytes()),
        "seed": args.seed,
        "per_class_cap": args.per_class_cap,
    }
    (out / "prepare.json").write_text(json.dumps(summary, indent=2) + "\n")

    lines = [f"{'Class':<18}{'Instances':>11}{'Train':>9}{'Val':>8}{'Test':>8}"]
    for c, name in enumerate(dataset.class_names):
        lines.append(
            f"{name:<18}{counts[c]:>11,}{per_split['train'][c]:>9,}{per_split['val'][c]:>8,}{per_split['test'][c]:>8,}"
        )
    lines.append(f"{'total':<18}{counts.sum():>11,}" + "".join(f"{per_split[s].sum():>{w},}" for s, w in (("train", 9), ("val", 8), ("test", 8))))
    lines.append(f"manifest sha256 {summary['manifest_sha256']}")
    _emit(args, "\n".join(lines), summary)
    return EXIT_OK


def _load_prepared(out: Path) -> DatasetSplit:
    cache, manifest = out / DATASET_FILE, out / SPLIT_FILE
    for p in (cache, manifest):
        if not p.exists():
            raise DataError(f"{p} not found; run 'prepare' first")
    dataset = read_cache(cache)
    return DatasetSplit.from_manifest(dataset, json.loads(manifest.read_text()))


# -- train --------------------------------------------------------------------------

def _configs(args, num_classes: int) -> tuple[ModelConfig, TrainConfig]:
    try:
        model_cfg = ModelConfig(
            conv_filters=args.filters,
            conv_kernel=args.kernel,
            convnext_blocks=args.blocks,
            dropout_rate=args.dropout,
            num_classes=num_classes,
        )
        train_cfg = TrainConfig(
            learning_rate=args.lr,
            batch_size=args.batch_size,
            epochs=args.epochs,
            early_stop_patience=args.patience,
            seed=args.seed,
            deterministic=args.deterministic,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return model_cfg, train_cfg


def cmd_train(args) -> int:
    # Validate flags before touching any data.
    _configs(args, num_classes=1)
    out = Path(args.out)
    split = _load_prepared(out)
    model_cfg, train_cfg = _configs(args, split.dataset.n_classes)

    train, val = split.train, split.validation
    scaler = fit_scaler(train)
    tx, vx = transform(scaler, train), transform(scaler, val)
    model = init_model(model_cfg, seed=args.seed, scaler=scaler, class_names=split.dataset.class_names)

    log_path = out / "train_log.jsonl"
    with log_path.open("w") as log_fh:

        def on_epoch(rec: EpochRecord) -> None:
            log_fh.write(json.dumps(rec.to_dict()) + "\n")
            log_fh.flush()
            if not args.json:
                print(
                    f"epoch {rec.epoch:>3}  loss {rec.train_loss:.4f}  acc {rec.train_acc:.4f}  "
                    f"val_loss {rec.val_loss if rec.val_loss is None else f'{rec.val_loss:.4f}'}  "
                    f"val_acc {rec.val_acc if rec.val_acc is None else f'{rec.val_acc:.4f}'}  "
                    f"{format_timing(rec.seconds, rec.ms_per_step)}",
                    flush=True,
                )

        model, history = fit(
            model, tx, train.labels, vx if len(val) else None, val.labels if len(val) else None,
            train_cfg, on_epoch=on_epoch,
        )

    save_model(model, out / MODEL_FILE)
    with (out / "history.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_COLUMNS)
        for rec in history:
            w.writerow([getattr(rec, c) if getattr(rec, c) is not None else "" for c in HISTORY_COLUMNS])

    breakdown = param_breakdown(model_cfg)
    params = {
        "total": param_count(model_cfg),
        "closed_form_estimate": closed_form_param_estimate(model_cfg),
        "layers": breakdown,
    }
    (out / "params.json").write_text(json.dumps(params, indent=2) + "\n")

    last = history[-1]
    model_bytes = (out / MODEL_FILE).read_bytes()
    payload = {
        "train": {"accuracy": last.train_acc, "loss": last.train_loss},
        "validation": {"accuracy": last.val_acc, "loss": last.val_loss},
        "epochs_run": len(history),
        "seconds": sum(r.seconds for r in history),
        "ms_per_step": float(np.mean([r.ms_per_step for r in history])),
        "params": params,
        "model_sha256": _sha256(model_bytes),
        "model_bytes": len(model_bytes),
    }

    def row(label, acc, loss):
        acc_s = "-" if acc is None else f"{100 * acc:.2f}"
        loss_s = "-" if loss is None else f"{loss:.4f}"
        return f"{label:<16}{acc_s:>14}{loss_s:>10}"

    human = "\n".join(
        [
            f"{'Dataset':<16}{'Accuracy (%)':>14}{'Loss':>10}",
            row("Train set", last.train_acc, last.train_loss),
            row("Validation set", last.val_acc, last.val_loss),
            f"parameters: {params['total']:,} exact / {params['closed_form_estimate']:,} closed-form estimate",
            f"training time: {format_timing(payload['seconds'], payload['ms_per_step'])}",
            f"model: {out / MODEL_FILE} ({len(model_bytes):,} bytes, sha256 {payload['model_sha256'][:16]})",
        ]
    )
    _emit(args, human, payload)
    return EXIT_OK


# -- eval ----------------------------------------------------------------------------

def cmd_eval(args) -> int:
    out = Path(args.out)
    model_path = Path(args.model) if args.model else out / MODEL_FILE
    if not model_path.exists():
        raise DataError(f"model file {model_path} not found")
    model = load_model(model_path)
    split = _load_prepared(out)
    data = split.part(args.split)
    if len(data) == 0:
        raise DataError(f"split {args.split!r} is empty")
    if model.scaler is None:
        raise DataError(f"{model_path} has no embedded scaler")
    if model.class_names is not None and tuple(model.class_names) != data.class_names:
        raise DataError("model class names differ from the prepared dataset")

    res = evaluate(model, transform(model.scaler, data), data.labels, args.eval_batch_size, args.deterministic)
    timing = {"seconds": res.seconds, "ms_per_step": res.ms_per_step, "steps": res.steps}
    report = full_report(data.labels, res.predictions, res.probabilities, data.class_names, timing, res.loss)
    bundle = out / f"eval_{args.split}"
    write_report(report, bundle, emit_svg=args.emit_svg)
    (bundle / "timing.json").write_text(json.dumps(timing, indent=2) + "\n")

    label = {"train": "Train set", "val": "Validation set", "test": "Test set"}[args.split]
    lines = [table4_header(), table4_row(label, report), ""]
    lines.append(f"{'Class':<18}{'Precision':>10}{'Recall':>8}{'F1':>8}{'MCC':>8}{'AUC':>8}")
    for m, auc in zip(report.per_class, report.auc):
        auc_s = "-" if auc is None else f"{auc:.4f}"
        lines.append(f"{m.name:<18}{m.precision:>10.4f}{m.recall:>8.4f}{m.f1:>8.4f}{m.mcc:>8.4f}{auc_s:>8}")
    lines.append("")
    lines.append(f"{'Class':<18}" + "".join(f"{h:>10}" for h in ("TNR", "NPV", "FPR", "FDR", "FOR", "FNR")))
    for m in report.per_class:
        lines.append(f"{m.name:<18}" + "".join(f"{getattr(m, f):>10.6f}" for f in ("tnr", "npv", "fpr", "fdr", "for_rate", "fnr")))
    lines.append("")
    for avg in ("macro", "micro", "weighted"):
        a = report.averages[avg]
        lines.append(f"{avg:<9} precision {100 * a['precision']:.2f}  recall {100 * a['recall']:.2f}  f1 {100 * a['f1']:.2f}")
    lines.append(f"macro MCC {report.macro_mcc:.4f}")
    lines.append(f"computational time: {format_timing(res.seconds, res.ms_per_step)}")
    lines.append(f"report: {bundle}")
    payload = report.to_dict(include_timing=True)
    _emit(args, "\n".join(lines), payload)
    return EXIT_OK


# -- predict ---------------------------------------------------------------------------

def cmd_predict(args) -> int:
    model = load_model(args.model)
    if model.scaler is None:
        raise DataError(f"{args.model} has no embedded scaler")
    rows = read_feature_csv(args.input, model.scaler.n_features, header=args.header)
    names = model.class_names or tuple(str(i) for i in range(model.config.num_classes))
    if len(rows) == 0:
        probs = np.zeros((0, len(names)), dtype=np.float32)
    else:
        probs = evaluate(model, transform(model.scaler, rows), batch_size=args.eval_batch_size).probabilities
    preds = np.argmax(probs, axis=1)

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["row", "predicted", *(f"p_{n}" for n in names)])
    for i, (p, row) in enumerate(zip(preds, probs)):
        w.writerow([i, names[p], *(repr(float(v)) for v in row)])
    if args.output:
        Path(args.output).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


# -- params / synth -------------------------------------------------------------------

def cmd_params(args) -> int:
    _, _ = _configs(args, args.num_classes)
    cfg = ModelConfig(
        conv_filters=args.filters, conv_kernel=args.kernel, convnext_blocks=args.blocks,
        dropout_rate=args.dropout, num_classes=args.num_classes,
    )
    payload = {"total": param_count(cfg), "closed_form_estimate": closed_form_param_estimate(cfg), "layers": param_breakdown(cfg)}
    lines = [f"{k:<12}{v:>12,}" for k, v in payload["layers"].items()]
    lines.append(f"{'total':<12}{payload['total']:>12,}")
    lines.append(f"{'estimate':<12}{payload['closed_form_estimate']:>12,}  (closed-form, informational)")
    _emit(args, "\n".join(lines), payload)
    return EXIT_OK


def cmd_synth(args) -> int:
    from nbaiot_ids.synthetic import write_synthetic_nbaiot

    root = write_synthetic_nbaiot(args.data_root, args.rows, seed=args.seed, separation=args.separation)
    _emit(args, f"synthetic N-BaIoT layout written to {root}", {"root": str(root)})
    return EXIT_OK


# -- argument parsing --------------------------------------------------------------------

def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--filters", type=int, default=64, help="Conv1D filters (default 64)")
    p.add_argument("--kernel", type=int, default=5, help="Conv1D kernel size (default 5)")
    p.add_argument("--blocks", type=int, default=2, help="ConvNeXt blocks (default 2)")
    p.add_argument("--dropout", type=float, default=0.1, help="dropout rate (default 0.1)")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--patience", type=int, default=None, help="early-stopping patience in epochs (off by default)")


def _add_mode_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--deterministic", dest="deterministic", action="store_true", default=True,
                   help="single-threaded BLAS, reproducible to the byte (default)")
    g.add_argument("--fast", dest="deterministic", action="store_false", help="let BLAS use all threads")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nbaiot-ids", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--json", action="store_true", help="machine-readable JSON on stdout")
    # The same flags are accepted after the subcommand; SUPPRESS keeps the top-level value otherwise.
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    common.add_argument("--json", action="store_true", default=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", parents=[common], help="load N-BaIoT CSVs, cache them and write a stratified split")
    p.add_argument("--data-root", required=True)
    p.add_argument("--class-map", default=None, help="JSON or 'name = glob' file (default: benign + 7 attacks)")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--test-frac", type=float, default=0.2)
    p.add_argument("--val-frac", type=float, default=0.1)
    p.add_argument("--per-class-cap", type=int, default=None)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", parents=[common], help="fit the scaler and train the model on a prepared split")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_model_flags(p)
    _add_train_flags(p)
    _add_mode_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="score a trained model on one split and write the report bundle")
    p.add_argument("--out", required=True)
    p.add_argument("--model", default=None)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--emit-svg", action="store_true")
    p.add_argument("--eval-batch-size", type=int, default=1024)
    _add_mode_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", parents=[common], help="classify rows of a 115-column CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", default=None)
    hg = p.add_mutually_exclusive_group()
    hg.add_argument("--header", dest="header", action="store_true", default=True, help="input has a header row (default)")
    hg.add_argument("--no-header", dest="header", action="store_false")
    p.add_argument("--eval-batch-size", type=int, default=1024)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("params", parents=[common], help="exact parameter count per layer for a configuration")
    _add_model_flags(p)
    _add_train_flags(p)
    p.add_argument("--num-classes", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_params, deterministic=True)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic dataset in the N-BaIoT layout")
    p.add_argument("--data-root", required=True)
    p.add_argument("--rows", type=int, default=200, help="rows per CSV file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--separation", type=float, default=1.0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (DataError, ModelFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""File outputs for metric reports: JSON, flat CSVs, ROC point tables and SVG charts."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from nbaiot_ids.metrics import PER_CLASS_FIELDS, ConfusionMatrix, MetricsReport, report_from_confusion


def format_timing(seconds: float, ms_per_step: float) -> str:
    """``"56.21 s (6.30 ms/step)"``."""
    return f"{seconds:.2f} s ({ms_per_step:.2f} ms/step)"


def _pct(v: float | None) -> str:
    return "-" if v is None or v != v else f"{100.0 * v:.2f}"


def table4_header() -> str:
    return f"{'Dataset':<16}{'Accuracy (%)':>14}{'Loss':>10}{'Precision (%)':>15}{'Recall (%)':>12}{'AUC (%)':>10}"


def table4_row(label: str, report: MetricsReport) -> str:
    """Accuracy, loss, weighted precision/recall and mean one-vs-rest AUC on one line."""
    w = report.averages["weighted"]
    loss = "-" if report.loss is None else f"{report.loss:.4f}"
    return (
        f"{label:<16}{_pct(report.accuracy):>14}{loss:>10}{_pct(w['precision']):>15}"
        f"{_pct(w['recall']):>12}{_pct(report.macro_auc):>10}"
    )


def report_to_json(report: MetricsReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=False) + "\n"


def report_from_json(text: str) -> MetricsReport:
    """Rebuild a report from its JSON; scalars are recomputed from the stored confusion matrix."""
    d = json.loads(text)
    cm = ConfusionMatrix(np.asarray(d["confusion_matrix"], dtype=np.int64), tuple(d["class_names"]))
    auc = [d["auc"].get(n) for n in d["class_names"]] if d.get("auc") else None
    return report_from_confusion(cm, auc=auc, loss=d.get("loss"))


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def write_per_class_csv(report: MetricsReport, path: Path) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["class", "support", "tp", "fp", "fn", "tn", *PER_CLASS_FIELDS, "auc"])
        aucs = report.auc or [None] * len(report.per_class)
        for m, auc in zip(report.per_class, aucs):
            w.writerow(
                [m.name, m.support, m.tp, m.fp, m.fn, m.tn, *(_fmt(getattr(m, f)) for f in PER_CLASS_FIELDS),
                 "" if auc is None else _fmt(auc)]
            )


def write_summary_csv(report: MetricsReport, path: Path) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "value"])
        for k, v in report.scalars().items():
            w.writerow([k, _fmt(v)])
        if report.loss is not None:
            w.writerow(["loss", _fmt(report.loss)])
        if report.macro_auc is not None:
            w.writerow(["macro_auc", _fmt(report.macro_auc)])


def write_confusion_csv(cm: ConfusionMatrix, path: Path) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["true\\pred", *cm.class_names])
        for name, row in zip(cm.class_names, cm.counts):
            w.writerow([name, *row.tolist()])


def write_roc_csv(points: np.ndarray, path: Path) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["fpr", "tpr"])
        for fpr, tpr in points:
            w.writerow([_fmt(fpr), _fmt(tpr)])


def write_report(report: MetricsReport, out_dir: str | Path, emit_svg: bool = False) -> list[Path]:
    """Write the full bundle into ``out_dir`` and return the paths written.

    Timing is deliberately kept out of these files so they are reproducible byte for
    byte; callers store it separately.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "metrics.json", out / "per_class.csv", out / "summary.csv", out / "confusion_matrix.csv"]
    written[0].write_text(report_to_json(report))
    write_per_class_csv(report, written[1])
    write_summary_csv(report, written[2])
    write_confusion_csv(report.confusion, written[3])
    if report.roc:
        roc_dir = out / "roc"
        roc_dir.mkdir(exist_ok=True)
        for name, points in report.roc.items():
            path = roc_dir / f"{name}.csv"
            write_roc_csv(points, path)
            written.append(path)
    if emit_svg:
        written.extend(write_svgs(report, out))
    return written


def write_svgs(report: MetricsReport, out_dir: Path) -> list[Path]:
    """Per-class P/R/F1 bars, confusion heatmap and ROC curves as standalone SVG files."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    paths = []
    meta = {"Date": None}
    with matplotlib.rc_context({"svg.hashsalt": "nbaiot-ids", "svg.fonttype": "path"}):
        names = list(report.class_names)
        x = np.arange(len(names))
        fig, ax = plt.subplots(figsize=(9, 4))
        for i, key in enumerate(("precision", "recall", "f1")):
            ax.bar(x + (i - 1) * 0.27, [getattr(m, key) for m in report.per_class], 0.27, label=key)
        ax.set_xticks(x, names, rotation=30, ha="right")
        ax.set_ylim(0, 1.05)
        ax.legend(loc="lower right")
        fig.tight_layout()
        paths.append(out_dir / "per_class_prf.svg")
        fig.savefig(paths[-1], format="svg", metadata=meta)
        plt.close(fig)

        fig, ax = plt.subplots(figsize=(7, 6))
        counts = report.confusion.counts
        im = ax.imshow(counts, cmap="Blues")
        for (i, j), v in np.ndenumerate(counts):
            ax.text(j, i, str(v), ha="center", va="center", fontsize=7,
                    color="white" if v > counts.max() / 2 else "black")
        ax.set_xticks(x, names, rotation=45, ha="right")
        ax.set_yticks(x, names)
        ax.set_xlabel("predicted")
        ax.set_ylabel("true")
        fig.colorbar(im, ax=ax)
        fig.tight_layout()
        paths.append(out_dir / "confusion_matrix.svg")
        fig.savefig(paths[-1], format="svg", metadata=meta)
        plt.close(fig)

        if report.roc:
            fig, ax = plt.subplots(figsize=(6, 6))
            for name, points in report.roc.items():
                auc = report.auc[names.index(name)]
                ax.plot(points[:, 0], points[:, 1], label=f"{name} (AUC {auc:.4f})")
            ax.plot([0, 1], [0, 1], "k--", lw=0.8)
            ax.set_xlabel("false positive rate")
            ax.set_ylabel("true positive rate")
            ax.legend(loc="lower right", fontsize=7)
            fig.tight_layout()
            paths.append(out_dir / "roc.svg")
            fig.savefig(paths[-1], format="svg", metadata=meta)
            plt.close(fig)
    return paths

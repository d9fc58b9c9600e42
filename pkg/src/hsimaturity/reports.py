"""CSV writers for predictions and evaluation tables."""

import csv
from pathlib import Path

from .pipeline import HIST_EDGES, Evaluation

UNDEFINED = "undefined"


def _fmt(value):
    if value is None:
        return UNDEFINED
    if isinstance(value, float):
        return repr(value)
    return value


def _writer(path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fh = open(path, "w", newline="", encoding="utf-8")
    return fh, csv.writer(fh, lineterminator="\n")


def write_predictions_csv(ev: Evaluation, path) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(["scene", "region_id", "pixel_count", "confidence", "prediction",
                    "label", "actual", "group"])
        for p in ev.predictions:
            w.writerow([p.scene, p.region_id, p.pixel_count, _fmt(p.confidence),
                        p.predicted, p.label or "", p.actual or "", p.group or ""])


def write_confusion_csv(ev: Evaluation, path) -> None:
    """Confusion matrix (rows actual, columns predicted) followed by the metrics."""
    c, m = ev.counts, ev.metrics
    fh, w = _writer(path)
    with fh:
        w.writerow(["", "predicted_mature", "predicted_immature"])
        w.writerow(["actual_mature", c.tn, c.fp])
        w.writerow(["actual_immature", c.fn, c.tp])
        w.writerow([])
        w.writerow(["metric", "value"])
        w.writerow(["tau", _fmt(ev.tau)])
        for name, value in m.as_dict().items():
            w.writerow([name, _fmt(value)])


def write_accuracy_csv(table: dict, path, key: str = "group") -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow([key, "correct", "total", "accuracy"])
        for k, (ok, total) in table.items():
            w.writerow([k, ok, total, _fmt(ok / total if total else None)])


def write_histogram_csv(ev: Evaluation, path) -> None:
    series = list(ev.histograms)
    fh, w = _writer(path)
    with fh:
        w.writerow(["bin_lo", "bin_hi", *series])
        for b in range(len(HIST_EDGES) - 1):
            w.writerow([_fmt(float(HIST_EDGES[b])), _fmt(float(HIST_EDGES[b + 1])),
                        *[ev.histograms[s][b] for s in series]])


def write_pr_csv(ev: Evaluation, path) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(["tau", "precision", "recall"])
        for tau, precision, recall in ev.pr_curve:
            w.writerow([_fmt(tau), _fmt(precision), _fmt(recall)])


def write_threshold_csv(curve, path) -> None:
    grid, fp, fn = curve
    fh, w = _writer(path)
    with fh:
        w.writerow(["tau", "fp", "fn", "errors"])
        for t, a, b in zip(grid.tolist(), fp.tolist(), fn.tolist()):
            w.writerow([_fmt(t), a, b, a + b])


def write_evaluation(ev: Evaluation, out_dir, prefix: str = "") -> list:
    """All labelled-evaluation tables; returns the written paths."""
    out = Path(out_dir)
    paths = []
    if not ev.labelled:
        return paths
    write_confusion_csv(ev, out / f"{prefix}metrics.csv")
    paths.append(out / f"{prefix}metrics.csv")
    if ev.by_group:
        write_accuracy_csv(ev.by_group, out / f"{prefix}accuracy_by_group.csv", "group")
        paths.append(out / f"{prefix}accuracy_by_group.csv")
    if ev.by_label:
        write_accuracy_csv(ev.by_label, out / f"{prefix}accuracy_by_color.csv", "color")
        paths.append(out / f"{prefix}accuracy_by_color.csv")
    write_histogram_csv(ev, out / f"{prefix}confidence_histogram.csv")
    paths.append(out / f"{prefix}confidence_histogram.csv")
    if ev.pr_curve:
        write_pr_csv(ev, out / f"{prefix}precision_recall.csv")
        paths.append(out / f"{prefix}precision_recall.csv")
    return paths

"""Accuracy and embedding-geometry diagnostics, plus PCA export."""

import csv
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InsufficientPoints, LengthMismatch, ShapeMismatch
from .numeric import pairwise_distance_matrix, pca_project


@dataclass
class MetricsReport:
    accuracy_noisy: float
    accuracy_clean: float
    margin_occupancy: float
    mean_intra_pair_distance: float
    mean_inter_distance: float
    per_class_accuracy: list = field(default_factory=list)

    def to_text(self):
        lines = []
        for key, value in asdict(self).items():
            if isinstance(value, list):
                value = ",".join(repr(float(v)) for v in value)
            else:
                value = repr(float(value))
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        values = {}
        for line in text.splitlines():
            if "=" not in line:
                continue
            key, raw = (part.strip() for part in line.split("=", 1))
            if key == "per_class_accuracy":
                values[key] = [float(v) for v in raw.split(",")] if raw else []
            else:
                values[key] = float(raw)
        return cls(**values)


def evaluate_accuracy(predictions, gold):
    predictions, gold = np.asarray(predictions), np.asarray(gold)
    if predictions.shape != gold.shape or predictions.size == 0:
        raise LengthMismatch(f"{predictions.size} predictions vs {gold.size} gold labels")
    return float(np.mean(predictions == gold))


def per_class_accuracy(predictions, gold, num_classes):
    """Accuracy restricted to each gold class; NaN for classes with no examples."""
    predictions, gold = np.asarray(predictions), np.asarray(gold)
    out = []
    for c in range(num_classes):
        sel = gold == c
        out.append(float(np.mean(predictions[sel] == c)) if sel.any() else float("nan"))
    return out


def margin_occupancy(D, margin):
    """Fraction of off-diagonal entries strictly inside (delta_plus, delta_minus)."""
    D = np.asarray(D, dtype=np.float64)
    m = D.shape[0]
    if m < 2:
        return 0.0
    inside = (D > margin.delta_plus) & (D < margin.delta_minus)
    np.fill_diagonal(inside, False)
    return float(inside.sum() / (m * (m - 1)))


def cluster_distances(batch, labels):
    """(mean D over aligned clean/noisy pairs, mean D over pairs of rows with
    different labels).

    ``labels`` may give one label per pair or one per row.
    """
    rows = batch.rows
    pos = np.asarray(batch.positive)
    if np.any(pos < 0):
        raise ShapeMismatch("cluster distances need a paired batch")
    labels = np.asarray(labels)
    if len(labels) * 2 == len(rows):
        labels = np.concatenate([labels, labels])
    if len(labels) != len(rows):
        raise LengthMismatch("labels do not match the batch rows")
    D = pairwise_distance_matrix(rows)
    idx = np.arange(len(rows))
    first = idx < pos
    intra = float(np.mean(D[idx[first], pos[first]]))
    cross = labels[:, None] != labels[None, :]
    inter = float(np.mean(D[cross])) if cross.any() else float("nan")
    return intra, inter


def export_projection(batch, labels, path):
    """Write ``example_id,side,label,pc1,pc2`` rows from a 2-component PCA."""
    rows = batch.rows
    if len(rows) < 2:
        raise InsufficientPoints("projection needs at least 2 rows")
    labels = np.asarray(labels)
    if len(labels) * 2 == len(rows) and np.all(np.asarray(batch.positive) >= 0):
        labels = np.concatenate([labels, labels])
    k = min(2, rows.shape[1])
    proj = pca_project(rows, k)
    if k == 1:
        proj = np.hstack([proj, np.zeros((len(proj), 1))])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["example_id", "side", "label", "pc1", "pc2"])
        for (ex_id, side), label, (a, b) in zip(batch.origin, labels, proj):
            writer.writerow([ex_id, side, int(label), repr(float(a)), repr(float(b))])
    return proj


def write_metrics(report, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(report.to_text())


def read_metrics(path):
    with open(path, encoding="utf-8") as fh:
        return MetricsReport.from_text(fh.read())

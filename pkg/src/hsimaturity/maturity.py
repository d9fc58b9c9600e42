"""Region confidences, threshold training, binary decisions, metrics and the
persisted model."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .cube import WavelengthAxis
from .segmentation import RegionSet
from .unmixing import EndmemberSet, ProportionMap

__all__ = [
    "IMMATURE", "MATURE", "TAU_GRID", "SingleClassError", "ModelFormatError",
    "ModelVersionError", "RegionConfidence", "ConfusionCounts", "Metrics",
    "TrainedModel", "aggregate_confidence", "threshold_errors", "train_threshold",
    "classify", "compute_metrics", "save_model", "load_model",
]

IMMATURE = "immature"
MATURE = "mature"

# 0.01, 0.02, ..., 0.99; each entry is the double nearest k/100
TAU_GRID = np.arange(1, 100) / 100.0

MODEL_FORMAT = "hsimaturity-model"
MODEL_VERSION = 1


class SingleClassError(ValueError):
    """Training data holds only one of the two classes."""


class ModelFormatError(ValueError):
    pass


class ModelVersionError(ModelFormatError):
    pass


@dataclass(frozen=True)
class RegionConfidence:
    region_id: int
    confidence: float
    pixel_count: int
    scene: str = ""


def aggregate_confidence(props: ProportionMap, regions: RegionSet,
                         immature_class: str = IMMATURE, statistic: str = "mean",
                         scene: str = "") -> list:
    """Immature confidence per region: the mean (or median) of its pixels'
    immature proportions."""
    if immature_class not in props.class_names:
        raise KeyError(f"class {immature_class!r} not in {props.class_names}")
    if statistic not in ("mean", "median"):
        raise ValueError(f"unknown aggregation statistic {statistic!r}")
    channel = props.channel(immature_class)
    out = []
    for rid in regions.region_ids:
        sel = regions.mask(rid) & props.valid
        n = int(np.count_nonzero(sel))
        if n == 0:
            raise ValueError(f"region {rid} has no valid proportion pixels")
        vals = channel[sel]
        c = float(vals.mean() if statistic == "mean" else np.median(vals))
        out.append(RegionConfidence(rid, min(max(c, 0.0), 1.0), n, scene))
    return out


def _split(confidences):
    c, immature = [], []
    for item in confidences:
        conf, label = (item.confidence, None) if isinstance(item, RegionConfidence) else item
        if label not in (MATURE, IMMATURE):
            raise ValueError(f"labels must be {MATURE!r} or {IMMATURE!r}, got {label!r}")
        c.append(float(conf))
        immature.append(label == IMMATURE)
    return np.asarray(c, dtype=np.float64), np.asarray(immature, dtype=bool)


def threshold_errors(confidences: Iterable[tuple]):
    """False positives and false negatives at each grid threshold.

    Returns ``(TAU_GRID, fp, fn)`` for the rule "immature iff c >= tau".
    """
    c, immature = _split(confidences)
    predicted = c[None, :] >= TAU_GRID[:, None]
    fp = np.count_nonzero(predicted & ~immature, axis=1)
    fn = np.count_nonzero(~predicted & immature, axis=1)
    return TAU_GRID, fp, fn


def train_threshold(confidences: Iterable[tuple]) -> float:
    """Grid threshold minimising FP + FN; the smallest one wins ties.

    ``confidences`` holds ``(c, label)`` pairs with label ``"mature"`` or
    ``"immature"``.
    """
    confidences = list(confidences)
    _, immature = _split(confidences)
    if immature.all() or not immature.any():
        raise SingleClassError("single-class input: threshold training needs both "
                               f"mature and immature samples (got {immature.size} of one)")
    grid, fp, fn = threshold_errors(confidences)
    return float(grid[int(np.argmin(fp + fn))])


def classify(confidences: Sequence[RegionConfidence], tau: float) -> list:
    """``(region_id, prediction)`` pairs; ``c >= tau`` means immature."""
    return [(rc.region_id, IMMATURE if rc.confidence >= tau else MATURE)
            for rc in confidences]


@dataclass(frozen=True)
class ConfusionCounts:
    """Binary confusion counts with immature as the positive class."""

    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self):
        for name in ("tp", "tn", "fp", "fn"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @classmethod
    def from_labels(cls, actual: Sequence[str], predicted: Sequence[str]) -> "ConfusionCounts":
        if len(actual) != len(predicted):
            raise ValueError("actual and predicted lengths differ")
        tp = tn = fp = fn = 0
        for a, p in zip(actual, predicted):
            if a == IMMATURE:
                tp, fn = (tp + 1, fn) if p == IMMATURE else (tp, fn + 1)
            else:
                tn, fp = (tn + 1, fp) if p == MATURE else (tn, fp + 1)
        return cls(tp, tn, fp, fn)

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def matrix(self) -> np.ndarray:
        """Rows actual (mature, immature); columns predicted (mature, immature)."""
        return np.array([[self.tn, self.fp], [self.fn, self.tp]])


def _ratio(num, den):
    return num / den if den else None


@dataclass(frozen=True)
class Metrics:
    """Classification metrics; ``None`` marks a metric with a zero denominator."""

    accuracy: float | None
    precision: float | None
    recall: float | None
    specificity: float | None
    balanced_accuracy: float | None

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("accuracy", "precision", "recall", "specificity", "balanced_accuracy")}


def compute_metrics(counts: ConfusionCounts) -> Metrics:
    recall = _ratio(counts.tp, counts.tp + counts.fn)
    specificity = _ratio(counts.tn, counts.tn + counts.fp)
    balanced = None
    if recall is not None and specificity is not None:
        balanced = (recall + specificity) / 2
    return Metrics(
        accuracy=_ratio(counts.tp + counts.tn, counts.total),
        precision=_ratio(counts.tp, counts.tp + counts.fp),
        recall=recall,
        specificity=specificity,
        balanced_accuracy=balanced,
    )


# --------------------------------------------------------------------------
# model persistence

@dataclass(frozen=True, eq=False)
class TrainedModel:
    endmembers: EndmemberSet
    band_range_nm: tuple
    tau: float
    sg_order: int = 4
    sg_width: int = 25
    immature_class: str = IMMATURE
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"threshold must lie in (0, 1), got {self.tau}")
        if self.immature_class not in self.endmembers.class_names:
            raise ValueError(f"immature class {self.immature_class!r} has no endmember")
        object.__setattr__(self, "band_range_nm",
                           (float(self.band_range_nm[0]), float(self.band_range_nm[1])))

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "tau": self.tau,
            "band_range_nm": list(self.band_range_nm),
            "savgol": {"order": self.sg_order, "width": self.sg_width},
            "immature_class": self.immature_class,
            "endmembers": {
                "class_names": list(self.endmembers.class_names),
                "wavelengths_nm": self.endmembers.axis.nm.tolist(),
                "spectra": self.endmembers.spectra.tolist(),
            },
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrainedModel":
        if not isinstance(data, dict) or data.get("format") != MODEL_FORMAT:
            raise ModelFormatError("not a hsimaturity model file")
        if data.get("version") != MODEL_VERSION:
            raise ModelVersionError(
                f"model version {data.get('version')!r} is not supported "
                f"(expected {MODEL_VERSION})")
        try:
            em = data["endmembers"]
            endmembers = EndmemberSet(tuple(em["class_names"]),
                                      WavelengthAxis(em["wavelengths_nm"]),
                                      np.array(em["spectra"], dtype=np.float64))
            return cls(endmembers=endmembers,
                       band_range_nm=tuple(data["band_range_nm"]),
                       tau=float(data["tau"]),
                       sg_order=int(data["savgol"]["order"]),
                       sg_width=int(data["savgol"]["width"]),
                       immature_class=data["immature_class"],
                       provenance=dict(data.get("provenance", {})))
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelFormatError(f"malformed model file: {exc}") from exc

    def __eq__(self, other):
        if not isinstance(other, TrainedModel):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    __hash__ = None


def save_model(model: TrainedModel, path) -> None:
    # json writes floats with repr, which round-trips doubles exactly
    text = json.dumps(model.to_dict(), indent=1, allow_nan=False)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_model(path) -> TrainedModel:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not valid JSON ({exc})") from exc
    return TrainedModel.from_dict(data)

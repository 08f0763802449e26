"""Classification metrics, seed aggregation and cross-language disparity."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .data import CORPUS_SIZE_ORDER, NON_ENGLISH, Language, TaskSpec


@dataclass(frozen=True)
class MetricsReport:
    f1: float
    precision: float
    recall: float
    accuracy: float
    per_class: dict[int, dict[str, float]]
    metric_mode: str
    n_runs: int = 1

    def as_dict(self) -> dict:
        return {
            "f1": self.f1,
            "precision": self.precision,
            "recall": self.recall,
            "accuracy": self.accuracy,
            "per_class": {str(k): v for k, v in self.per_class.items()},
            "metric_mode": self.metric_mode,
            "n_runs": self.n_runs,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(
            d["f1"], d["precision"], d["recall"], d["accuracy"],
            {int(k): dict(v) for k, v in d["per_class"].items()},
            d["metric_mode"], d.get("n_runs", 1),
        )


def confusion_matrix(gold: Sequence[int], pred: Sequence[int], num_classes: int) -> np.ndarray:
    """Rows are gold classes, columns predicted classes."""
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(gold, dtype=np.int64), np.asarray(pred, dtype=np.int64)), 1)
    return cm


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def compute_metrics(gold: Sequence[int], pred: Sequence[int], task: TaskSpec) -> MetricsReport:
    """Macro or positive-class metrics, as the task's metric mode says.

    Undefined precision/recall (zero denominator) counts as 0, and F1 is 0
    whenever precision + recall is 0.
    """
    if len(gold) != len(pred):
        raise ValueError(f"length mismatch: {len(gold)} gold vs {len(pred)} predicted")
    if len(gold) == 0:
        raise ValueError("no labels")
    n = task.num_classes
    for seq, what in ((gold, "gold"), (pred, "predicted")):
        bad = [y for y in seq if not 0 <= int(y) < n]
        if bad:
            raise ValueError(f"invalid {what} label {bad[0]} for {n} classes")

    cm = confusion_matrix(gold, pred, n)
    tp = np.diag(cm).astype(float)
    predicted = cm.sum(axis=0)
    actual = cm.sum(axis=1)
    per_class = {}
    for c in range(n):
        p = _ratio(tp[c], predicted[c])
        r = _ratio(tp[c], actual[c])
        f = _ratio(2 * p * r, p + r)
        per_class[c] = {"precision": p, "recall": r, "f1": f, "support": int(actual[c])}

    accuracy = float(tp.sum() / cm.sum())
    if task.metric_mode == "binary-positive":
        pos = per_class[task.positive_class]
        f1, precision, recall = pos["f1"], pos["precision"], pos["recall"]
    else:
        f1 = sum(v["f1"] for v in per_class.values()) / n
        precision = sum(v["precision"] for v in per_class.values()) / n
        recall = sum(v["recall"] for v in per_class.values()) / n
    return MetricsReport(f1, precision, recall, accuracy, per_class, task.metric_mode)


def aggregate_runs(reports: Sequence[MetricsReport]) -> MetricsReport:
    """Arithmetic mean of every metric over independent runs."""
    if not reports:
        raise ValueError("no reports to aggregate")
    modes = {r.metric_mode for r in reports}
    if len(modes) > 1:
        raise ValueError(f"cannot aggregate mixed metric modes {sorted(modes)}")
    classes = set(reports[0].per_class)
    if any(set(r.per_class) != classes for r in reports):
        raise ValueError("reports cover different class sets")
    k = len(reports)
    total_runs = sum(r.n_runs for r in reports)

    def mean(values):
        return math.fsum(values) / k

    per_class = {
        c: {key: mean([r.per_class[c][key] for r in reports]) for key in reports[0].per_class[c]}
        for c in sorted(classes)
    }
    return MetricsReport(
        mean([r.f1 for r in reports]),
        mean([r.precision for r in reports]),
        mean([r.recall for r in reports]),
        mean([r.accuracy for r in reports]),
        per_class,
        modes.pop(),
        total_runs,
    )


# ---------------------------------------------------------------------------
# Disparity


def _check_unit(value: float, what: str) -> None:
    if not 0.0 <= value <= 1.0 or math.isnan(value):
        raise ValueError(f"{what} = {value} is outside [0, 1]")


def rmsd_en(f1_en: float, f1_non_en: Mapping[Language | str, float]) -> float:
    """Root-mean-square deviation of the five non-English F1 scores from English."""
    _check_unit(f1_en, "F1[en]")
    values = {Language.parse(k): v for k, v in f1_non_en.items()}
    missing = [l.value for l in NON_ENGLISH if l not in values]
    extra = [l.value for l in values if l not in NON_ENGLISH]
    if missing or extra:
        raise ValueError(f"need exactly {[l.value for l in NON_ENGLISH]}; missing {missing}, unexpected {extra}")
    for lang, v in values.items():
        _check_unit(v, f"F1[{lang.value}]")
    return math.sqrt(math.fsum((f1_en - values[l]) ** 2 for l in NON_ENGLISH) / len(NON_ENGLISH))


@dataclass(frozen=True)
class DisparityReport:
    task: str
    family: str
    modality: str
    f1: dict[Language, float]
    rmsd_en: float


def disparity_report(task: str, family: str, modality: str,
                     f1_by_language: Mapping[Language | str, float]) -> DisparityReport:
    f1 = {Language.parse(k): float(v) for k, v in f1_by_language.items()}
    if Language.EN not in f1:
        raise ValueError("missing English F1")
    rest = {l: v for l, v in f1.items() if l is not Language.EN}
    return DisparityReport(task, family, modality, f1, rmsd_en(f1[Language.EN], rest))


@dataclass(frozen=True)
class TrendFit:
    order: tuple[Language, ...]
    f1: tuple[float, ...]
    slope: float
    intercept: float


def trend_slope(f1_by_language: Mapping[Language | str, float]) -> TrendFit:
    """Least-squares line of F1 against corpus-size rank (en = 0 ... hi = 5)."""
    values = {Language.parse(k): float(v) for k, v in f1_by_language.items()}
    missing = [l.value for l in CORPUS_SIZE_ORDER if l not in values]
    if missing:
        raise ValueError(f"missing languages {missing}")
    y = np.array([values[l] for l in CORPUS_SIZE_ORDER])
    x = np.arange(len(y), dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    return TrendFit(CORPUS_SIZE_ORDER, tuple(y.tolist()), float(slope), float(intercept))

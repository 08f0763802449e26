"""Aggregation of human translation-quality annotations."""

from __future__ import annotations

import csv
import itertools
import os
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence

from .data import Language


@dataclass(frozen=True)
class AnnotationRecord:
    example_id: str
    language: Language
    annotator_id: str
    fluency: int
    meaning: int
    attention_check_passed: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "language", Language.parse(self.language))
        for name in ("fluency", "meaning"):
            value = getattr(self, name)
            if not 1 <= value <= 5:
                raise ValueError(f"{name} score {value} outside the 1-5 Likert range")


@dataclass(frozen=True)
class LikertSummary:
    language: Language
    fluency: float
    meaning: float
    fluency_kappa: float | None
    meaning_kappa: float | None
    n_records: int

    def rounded(self) -> dict[str, object]:
        def r(x):
            return None if x is None else round(x, 2)

        return {
            "language": self.language.value,
            "fluency": r(self.fluency),
            "meaning": r(self.meaning),
            "fluency_kappa": r(self.fluency_kappa),
            "meaning_kappa": r(self.meaning_kappa),
        }


def cohen_kappa(labels_a: Sequence[Hashable], labels_b: Sequence[Hashable]) -> float:
    """Unweighted two-rater Cohen's kappa, (p_o - p_e) / (1 - p_e).

    When chance agreement is 1 (both raters constant on the same label) the
    value is defined as 1.0.
    """
    if len(labels_a) != len(labels_b):
        raise ValueError(f"length mismatch: {len(labels_a)} vs {len(labels_b)}")
    n = len(labels_a)
    if n == 0:
        raise ValueError("empty label lists")
    observed = sum(a == b for a, b in zip(labels_a, labels_b)) / n
    count_a = Counter(labels_a)
    count_b = Counter(labels_b)
    expected = sum(count_a[k] * count_b.get(k, 0) for k in count_a) / (n * n)
    if expected == 1.0:
        return 1.0
    return (observed - expected) / (1.0 - expected)


def mean_pairwise_kappa(ratings: Sequence[Sequence[Hashable]]) -> float:
    """Mean Cohen's kappa over all pairs of rater columns.

    ``ratings[i][r]`` is the score rater slot ``r`` gave item ``i``.
    """
    if not ratings:
        raise ValueError("no items")
    width = len(ratings[0])
    if width < 2 or any(len(row) != width for row in ratings):
        raise ValueError("every item needs the same number (>= 2) of ratings")
    columns = list(zip(*ratings))
    pairs = list(itertools.combinations(range(width), 2))
    return sum(cohen_kappa(columns[i], columns[j]) for i, j in pairs) / len(pairs)


def passing_records(records: Iterable[AnnotationRecord]) -> list[AnnotationRecord]:
    """Drop every record of any annotator who failed an attention check."""
    records = list(records)
    failed = {(r.language, r.annotator_id) for r in records if not r.attention_check_passed}
    return [r for r in records if (r.language, r.annotator_id) not in failed]


def _slot_table(records: list[AnnotationRecord], field: str) -> list[list[int]] | None:
    # Rater slots are assigned per item by annotator id order; items with a
    # different number of ratings than the most common count are skipped.
    by_item: dict[str, list[AnnotationRecord]] = defaultdict(list)
    for r in records:
        by_item[r.example_id].append(r)
    if not by_item:
        return None
    width = Counter(len(v) for v in by_item.values()).most_common(1)[0][0]
    if width < 2:
        return None
    rows = []
    for item in sorted(by_item):
        group = sorted(by_item[item], key=lambda r: r.annotator_id)
        if len(group) == width:
            rows.append([getattr(r, field) for r in group])
    return rows or None


def aggregate_likert(records: Iterable[AnnotationRecord]) -> dict[Language, LikertSummary]:
    """Per-language mean fluency/meaning and mean pairwise kappa.

    Annotators who failed an attention check are removed first. Kappa treats
    the Likert points as unordered categories.
    """
    records = list(records)
    languages = sorted({r.language for r in records}, key=lambda l: l.value)
    kept = passing_records(records)
    out: dict[Language, LikertSummary] = {}
    for lang in languages:
        rows = [r for r in kept if r.language is lang]
        if not rows:
            raise ValueError(f"no annotations left for {lang.value} after attention-check filtering")
        kappas = {}
        for field in ("fluency", "meaning"):
            table = _slot_table(rows, field)
            kappas[field] = mean_pairwise_kappa(table) if table else None
        out[lang] = LikertSummary(
            language=lang,
            fluency=sum(r.fluency for r in rows) / len(rows),
            meaning=sum(r.meaning for r in rows) / len(rows),
            fluency_kappa=kappas["fluency"],
            meaning_kappa=kappas["meaning"],
            n_records=len(rows),
        )
    return out


def load_annotations(path: str | os.PathLike) -> list[AnnotationRecord]:
    """Read a CSV with columns example_id, language, annotator_id, fluency,
    meaning, attention_check_passed."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            passed = row.get("attention_check_passed", "true").strip().lower() in ("1", "true", "yes")
            out.append(AnnotationRecord(
                row["example_id"], Language.parse(row["language"]), row["annotator_id"],
                int(row["fluency"]), int(row["meaning"]), passed,
            ))
    return out

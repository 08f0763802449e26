"""Tables and figures built from a run ledger."""

from __future__ import annotations

import math
import os
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .data import CORPUS_SIZE_ORDER, LANGUAGES, NON_ENGLISH, Language  # noqa: E402
from .metrics import MetricsReport, aggregate_runs, rmsd_en, trend_slope  # noqa: E402

METRIC_COLUMNS = ("f1", "precision", "recall", "accuracy")
TEXT_COLOR = "tab:blue"
MULTIMODAL_COLOR = "tab:red"


def _fmt(x: float | None) -> str:
    return "-" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.2f}"


def aggregate_ledger(cells: dict[str, dict], split: str = "test") -> dict[tuple, MetricsReport]:
    """Seed-averaged metrics keyed by (task, family, language, modality)."""
    groups: dict[tuple, list[MetricsReport]] = defaultdict(list)
    for entry in cells.values():
        if entry.get("status") != "done" or not entry.get("metrics") or split not in entry["metrics"]:
            continue
        key = (entry["task"], entry["family"], entry["language"], entry["modality"])
        groups[key].append(MetricsReport.from_dict(entry["metrics"][split]))
    return {k: aggregate_runs(v) for k, v in sorted(groups.items())}


def _tasks(agg) -> list[str]:
    return sorted({k[0] for k in agg})


def _families(agg) -> list[str]:
    return sorted({k[1] for k in agg if k[1] != "shared"})


def _metric_table(agg, modality: str, include_image_row: bool) -> str:
    tasks = _tasks(agg)
    header = ["family", "language"] + [f"{t}:{m}" for t in tasks for m in METRIC_COLUMNS]
    rows = ["\t".join(header)]
    if include_image_row:
        cells = []
        for t in tasks:
            r = agg.get((t, "shared", "any", "image"))
            cells += [_fmt(getattr(r, m)) if r else "-" for m in METRIC_COLUMNS]
        if any(c != "-" for c in cells):
            rows.append("\t".join(["image-only", "-"] + cells))
    for fam in _families(agg):
        for lang in LANGUAGES:
            cells, present = [], False
            for t in tasks:
                r = agg.get((t, fam, lang.value, modality))
                present |= r is not None
                cells += [_fmt(getattr(r, m)) if r else "-" for m in METRIC_COLUMNS]
            if present:
                rows.append("\t".join([fam, lang.value] + cells))
    return "\n".join(rows) + "\n"


def disparity_rows(agg) -> list[dict]:
    """RMSD_en and trend slope per (task, family, modality) with all six languages."""
    out = []
    for task in _tasks(agg):
        for fam in _families(agg):
            for modality in ("text", "multimodal"):
                f1 = {l: agg[(task, fam, l.value, modality)].f1
                      for l in LANGUAGES if (task, fam, l.value, modality) in agg}
                if not f1:
                    continue
                complete = len(f1) == len(LANGUAGES)
                rmsd = rmsd_en(f1[Language.EN], {l: f1[l] for l in NON_ENGLISH}) if complete else None
                fit = trend_slope(f1) if complete else None
                out.append({"task": task, "family": fam, "modality": modality, "f1": f1,
                            "rmsd_en": rmsd, "slope": fit.slope if fit else None,
                            "intercept": fit.intercept if fit else None})
    return out


def _disparity_table(rows: list[dict]) -> str:
    header = ["task", "family", "modality"] + [l.value for l in LANGUAGES] + ["rmsd_en", "slope"]
    lines = ["\t".join(header)]
    for r in rows:
        lines.append("\t".join([r["task"], r["family"], r["modality"]]
                               + [_fmt(r["f1"].get(l)) for l in LANGUAGES]
                               + [_fmt(r["rmsd_en"]), f"{r['slope']:.4f}" if r["slope"] is not None else "-"]))
    return "\n".join(lines) + "\n"


def _bar_figure(rows: list[dict], family: str, path: Path) -> None:
    mine = [r for r in rows if r["family"] == family]
    tasks = sorted({r["task"] for r in mine})
    fig, axes = plt.subplots(1, len(tasks), figsize=(4.5 * len(tasks), 3.6), squeeze=False)
    for ax, task in zip(axes[0], tasks):
        width = 0.38
        notes = []
        for offset, modality, color, label in ((-width / 2, "text", TEXT_COLOR, "text-only"),
                                               (width / 2, "multimodal", MULTIMODAL_COLOR, "multimodal")):
            row = next((r for r in mine if r["task"] == task and r["modality"] == modality), None)
            if row is None:
                continue
            xs = [i + offset for i, l in enumerate(LANGUAGES) if l in row["f1"]]
            ys = [row["f1"][l] for l in LANGUAGES if l in row["f1"]]
            ax.bar(xs, ys, width, color=color, label=label)
            if row["rmsd_en"] is not None:
                notes.append(f"{label} RMSD$_{{en}}$={row['rmsd_en']:.2f}")
        ax.set_xticks(range(len(LANGUAGES)), [l.value for l in LANGUAGES])
        ax.set_ylim(0, 1)
        ax.set_ylabel("F1")
        ax.set_title(f"{task} ({family})")
        if notes:
            ax.text(0.02, 0.98, "\n".join(notes), transform=ax.transAxes, va="top", fontsize=8)
        ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def _trend_figure(rows: list[dict], family: str, path: Path) -> None:
    mine = [r for r in rows if r["family"] == family and r["slope"] is not None]
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6), sharey=True)
    xs = list(range(len(CORPUS_SIZE_ORDER)))
    for ax, modality in zip(axes, ("text", "multimodal")):
        for r in (r for r in mine if r["modality"] == modality):
            ys = [r["f1"][l] for l in CORPUS_SIZE_ORDER]
            line = ax.plot(xs, ys, "o", label=f"{r['task']} (m={r['slope']:.3f})")[0]
            ax.plot(xs, [r["intercept"] + r["slope"] * x for x in xs], "--", color=line.get_color())
        ax.set_xticks(xs, [l.value for l in CORPUS_SIZE_ORDER])
        ax.set_title(f"{modality} ({family})")
        ax.set_ylabel("F1")
        if ax.get_legend_handles_labels()[0]:
            ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def emit_report(cells: dict[str, dict], out_dir: str | os.PathLike, figures: bool = True) -> dict[str, Path]:
    """Write metric tables, the disparity table and figures.

    Tables are tab-separated, rounded to two decimals and byte-deterministic
    for a given ledger.
    """
    agg = aggregate_ledger(cells)
    if not agg:
        raise ValueError("ledger has no evaluated cells")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: dict[str, Path] = {}

    def write(name: str, content: str) -> None:
        path = out / name
        path.write_text(content, encoding="utf-8")
        written[name] = path

    write("text_only.tsv", _metric_table(agg, "text", include_image_row=False))
    write("multimodal.tsv", _metric_table(agg, "multimodal", include_image_row=True))
    rows = disparity_rows(agg)
    write("disparity.tsv", _disparity_table(rows))

    human = aggregate_ledger(cells, split="human_test")
    if human:
        human_rows = disparity_rows(human)
        write("human_subset.tsv", _disparity_table(human_rows))

    if figures:
        for fam in sorted({r["family"] for r in rows}):
            path = out / f"disparity_{fam}.png"
            _bar_figure(rows, fam, path)
            written[path.name] = path
            if any(r["slope"] is not None and r["family"] == fam for r in rows):
                path = out / f"trend_{fam}.png"
                _trend_figure(rows, fam, path)
                written[path.name] = path
    return written

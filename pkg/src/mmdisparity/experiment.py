"""Experiment grids: cell expansion, run directories and the run ledger."""

from __future__ import annotations

import fnmatch
import json
import logging
import os
import threading
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import torch
import yaml
from filelock import FileLock

from .data import (
    LANGUAGES,
    REFERENCE_LANGUAGE,
    DatasetVersion,
    Language,
    get_task,
    load_manifest,
    manifest_path,
    save_manifest,
)
from .embeddings import EmbeddingCache
from .fusion import (
    default_fusion_config,
    fuse_matrices,
    predict_fused,
    save_fusion_model,
    train_fusion,
    train_fusion_on_embeddings,
    unimodal_embeddings,
)
from .image_encoder import (
    default_image_config,
    file_loader,
    load_image_model,
    predict_examples,
    save_image_model,
    train_image_head,
)
from .metrics import MetricsReport, compute_metrics
from .synth import SynthConfig, generate_synthetic, train_linear_head, write_synthetic
from .text_encoder import (
    FAMILIES,
    TextEncoderSpec,
    default_text_config,
    fine_tune_text,
    load_text_model,
    predict_texts,
    save_text_model,
)
from .training import argmax_lowest, config_dict, load_metadata, save_checkpoint
from .translate import HttpTranslator, StubTranslator, TranslationCache, translate_dataset

logger = logging.getLogger(__name__)

MODALITIES = ("text", "image", "multimodal")
SHARED = ("shared", "any")  # (family, language) slot of image-only cells
LEDGER_NAME = "ledger.json"


@dataclass
class ExperimentManifest:
    task: str
    output_dir: Path
    languages: list[Language] = field(default_factory=lambda: list(LANGUAGES))
    families: list[str] = field(default_factory=lambda: list(FAMILIES))
    modalities: list[str] = field(default_factory=lambda: list(MODALITIES))
    seeds: list[int] = field(default_factory=lambda: list(range(10)))
    mode: str = "full"
    data_dir: Path | None = None
    image_root: Path | None = None
    text_backend: str = "tiny"
    backbone: str = "tiny"
    translator: str = "stub"
    translator_model: str = "remote"
    training: dict[str, Any] = field(default_factory=dict)
    synth: dict[str, Any] = field(default_factory=dict)
    human_test: dict[str, str] = field(default_factory=dict)
    workers: int = 1

    def __post_init__(self) -> None:
        self.output_dir = Path(self.output_dir)
        self.languages = [Language.parse(l) for l in self.languages]
        if self.mode not in ("full", "synthetic"):
            raise ValueError(f"unknown mode {self.mode!r}")
        for fam in self.families:
            if fam not in FAMILIES:
                raise ValueError(f"unknown family {fam!r}")
        for mod in self.modalities:
            if mod not in MODALITIES:
                raise ValueError(f"unknown modality {mod!r}")
        if self.mode == "full" and self.data_dir is None:
            raise ValueError("full mode needs data_dir")

    @classmethod
    def from_dict(cls, d: dict, base: Path | None = None) -> "ExperimentManifest":
        d = dict(d)
        base = base or Path(".")
        for key in ("output_dir", "data_dir", "image_root"):
            if d.get(key) is not None:
                d[key] = base / d[key]
        if "human_test" in d:
            d["human_test"] = {k: str(base / v) for k, v in d["human_test"].items()}
        return cls(**d)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ExperimentManifest":
        path = Path(path)
        return cls.from_dict(yaml.safe_load(path.read_text(encoding="utf-8")), path.parent)

    def synth_config(self) -> SynthConfig:
        return SynthConfig(task_name=self.task, **self.synth)


@dataclass(frozen=True)
class Cell:
    task: str
    family: str
    language: str
    modality: str
    seed: int

    @property
    def key(self) -> str:
        return f"{self.task}/{self.family}/{self.language}/{self.modality}/seed-{self.seed}"

    def run_dir(self, root: Path) -> Path:
        return root / self.task / self.family / self.language / self.modality / f"seed-{self.seed}"


def expand_cells(m: ExperimentManifest) -> list[Cell]:
    """Every cell the manifest implies, dependencies included, in run order
    (text and image cells before the fusion cells that consume them)."""
    wanted = set(m.modalities)
    if m.mode == "full" and "multimodal" in wanted:
        wanted |= {"text", "image"}
    cells = []
    for seed in m.seeds:
        if "text" in wanted:
            cells += [Cell(m.task, fam, lang.value, "text", seed) for fam in m.families for lang in m.languages]
        if "image" in wanted:
            cells.append(Cell(m.task, *SHARED, "image", seed))
    for seed in m.seeds:
        if "multimodal" in wanted:
            cells += [Cell(m.task, fam, lang.value, "multimodal", seed) for fam in m.families for lang in m.languages]
    return cells


# ---------------------------------------------------------------------------
# Ledger


class Ledger:
    """JSON record of every cell's status and metrics, one writer at a time."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.path = self.root / LEDGER_NAME
        self._lock = FileLock(str(self.path) + ".lock")
        self.trained = 0

    def read(self) -> dict:
        if not self.path.exists():
            return {"cells": {}}
        return json.loads(self.path.read_text(encoding="utf-8"))

    def update(self, key: str, entry: dict) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        with self._lock:
            data = self.read()
            data["cells"][key] = entry
            tmp = self.path.with_suffix(".tmp")
            tmp.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
            os.replace(tmp, self.path)

    @property
    def cells(self) -> dict[str, dict]:
        return self.read()["cells"]


def load_ledger(root: str | os.PathLike) -> dict[str, dict]:
    return Ledger(Path(root)).cells


# ---------------------------------------------------------------------------
# Cell execution


def _write_predictions(run_dir: Path, ids, gold, preds, scores, name: str = "predictions") -> None:
    with open(run_dir / f"{name}.jsonl", "w", encoding="utf-8") as fh:
        for i, g, p, s in zip(ids, gold, preds, scores):
            fh.write(json.dumps({"id": i, "gold": int(g), "pred": int(p),
                                 "scores": [round(float(x), 6) for x in s]}) + "\n")


def _finish(run_dir: Path, metrics: dict[str, MetricsReport]) -> dict:
    payload = {name: r.as_dict() for name, r in metrics.items()}
    (run_dir / "metrics.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return payload


class Runner:
    def __init__(self, m: ExperimentManifest):
        self.m = m
        self.root = m.output_dir
        self._versions: dict[str, DatasetVersion] = {}
        self._bench = None
        self._lock = threading.RLock()

    # -- data ---------------------------------------------------------------

    def version(self, language: Language) -> DatasetVersion:
        with self._lock:
            return self._version(language)

    def _version(self, language: Language) -> DatasetVersion:
        if language.value in self._versions:
            return self._versions[language.value]
        if self.m.mode == "synthetic":
            raise RuntimeError("synthetic mode does not use manifests directly")
        task = get_task(self.m.task)
        path = manifest_path(self.m.data_dir, self.m.task, language)
        if path.exists():
            version = load_manifest(path, task, self.m.image_root or path.parent)
        elif language is REFERENCE_LANGUAGE:
            raise FileNotFoundError(f"missing source manifest {path}")
        else:
            src = self.version(REFERENCE_LANGUAGE)
            version = translate_dataset(src, language, self.translator(),
                                        TranslationCache(self.m.data_dir / "translation-cache.jsonl"))
            save_manifest(version, path)
        self._versions[language.value] = version
        return version

    def translator(self):
        if self.m.translator == "stub":
            return StubTranslator()
        return HttpTranslator(self.m.translator, self.m.translator_model)

    def loader(self):
        root = self.m.image_root or manifest_path(self.m.data_dir, self.m.task, "en").parent
        return file_loader(root)

    def bench(self):
        """Synthetic benchmark, generated and written once under the output dir."""
        with self._lock:
            return self._build_bench()

    def _build_bench(self):
        if self._bench is None:
            cfg = self.m.synth_config()
            bench = generate_synthetic(cfg)
            data_dir = self.root / "_synthetic"
            if not (data_dir / "config.json").exists():
                write_synthetic(bench, data_dir)
                (data_dir / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
            self._bench = bench
        return self._bench

    def cfg(self, kind: str, seed: int):
        factory = {"text": default_text_config, "image": default_image_config,
                   "multimodal": default_fusion_config}[kind]
        return factory(seed, **self.m.training)

    # -- cells --------------------------------------------------------------

    def run_cell(self, cell: Cell) -> dict:
        run_dir = cell.run_dir(self.root)
        run_dir.mkdir(parents=True, exist_ok=True)
        if self.m.mode == "synthetic":
            return self._synthetic_cell(cell, run_dir)
        return getattr(self, f"_{cell.modality}_cell")(cell, run_dir)

    def _text_cell(self, cell: Cell, run_dir: Path) -> dict:
        lang = Language.parse(cell.language)
        version = self.version(lang)
        spec = TextEncoderSpec.default(cell.family, lang, self.m.text_backend)
        cfg = self.cfg("text", cell.seed)
        model = fine_tune_text(spec, version.split("train"), version.split("validation"), cfg, version.task)
        save_text_model(model, run_dir, {"cell": cell.key, "seed": cell.seed})
        metrics = {"test": self._eval_text(model, version.split("test"), run_dir, "predictions")}
        human = self.m.human_test.get(lang.value)
        if human:
            subset = load_manifest(human, version.task).split("test")
            metrics["human_test"] = self._eval_text(model, subset, run_dir, "predictions-human")
        return _finish(run_dir, metrics)

    def _eval_text(self, model, examples, run_dir: Path, name: str) -> MetricsReport:
        preds = predict_texts(model, [ex.text for ex in examples])
        gold = [ex.label for ex in examples]
        _write_predictions(run_dir, [ex.id for ex in examples], gold,
                           [p.label for p in preds], [p.scores for p in preds], name)
        return compute_metrics(gold, [p.label for p in preds], model.task)

    def _image_cell(self, cell: Cell, run_dir: Path) -> dict:
        version = self.version(REFERENCE_LANGUAGE)
        cfg = self.cfg("image", cell.seed)
        loader = self.loader()
        model = train_image_head(version.split("train"), version.split("validation"), cfg,
                                 version.task, loader, self.m.backbone)
        save_image_model(model, run_dir, {"cell": cell.key, "seed": cell.seed})
        test = version.split("test")
        preds = predict_examples(model, test, loader)
        gold = [ex.label for ex in test]
        _write_predictions(run_dir, [ex.id for ex in test], gold, [p.label for p in preds], [p.scores for p in preds])
        return _finish(run_dir, {"test": compute_metrics(gold, [p.label for p in preds], version.task)})

    def _multimodal_cell(self, cell: Cell, run_dir: Path) -> dict:
        lang = Language.parse(cell.language)
        version = self.version(lang)
        task = version.task
        text_dir = Cell(cell.task, cell.family, cell.language, "text", cell.seed).run_dir(self.root)
        image_dir = Cell(cell.task, *SHARED, "image", cell.seed).run_dir(self.root)
        text_model = load_text_model(text_dir, task)
        image_model = load_image_model(image_dir, task)
        loader = self.loader()
        cache = EmbeddingCache(self.root / "_embeddings")
        model = train_fusion(text_model, image_model, version.split("train"), version.split("validation"),
                             self.cfg("multimodal", cell.seed), loader, cache, version)
        save_fusion_model(model, run_dir, {"cell": cell.key, "seed": cell.seed,
                                           "text_run": str(text_dir), "image_run": str(image_dir)})

        def evaluate(examples, ver, name):
            t, i = unimodal_embeddings(text_model, image_model, examples, loader, cache, ver)
            preds = predict_fused(model, fuse_matrices(t, i))
            gold = [ex.label for ex in examples]
            _write_predictions(run_dir, [ex.id for ex in examples], gold,
                               [p.label for p in preds], [p.scores for p in preds], name)
            return compute_metrics(gold, [p.label for p in preds], task)

        metrics = {"test": evaluate(version.split("test"), version, "predictions")}
        human = self.m.human_test.get(lang.value)
        if human:
            hv = load_manifest(human, task)
            metrics["human_test"] = evaluate(hv.split("test"), hv, "predictions-human")
        return _finish(run_dir, metrics)

    def _synthetic_cell(self, cell: Cell, run_dir: Path) -> dict:
        bench = self.bench()
        task = bench.task
        y = bench.labels()
        tr, va, te = (bench.indices(s) for s in ("train", "validation", "test"))
        ids = [ex.id for ex in bench.versions[Language.EN].examples]
        cfg = self.cfg(cell.modality, cell.seed)
        if cell.modality == "image":
            x = bench.image_embeddings
        else:
            x = bench.text_embeddings[Language.parse(cell.language)]
            if cell.modality == "multimodal":
                x = fuse_matrices(x, bench.image_embeddings)

        if cell.modality == "multimodal":
            model = train_fusion_on_embeddings(x[tr], y[tr], x[va], y[va], cfg, task, cell.language, cell.family)
            net, best, stopped = model.net, model.best_epoch, model.stopped_epoch
            preds = predict_fused(model, x[te])
            labels = [p.label for p in preds]
            scores = [p.scores for p in preds]
        else:
            net = train_linear_head(x[tr], y[tr], x[va], y[va], task.num_classes, cfg)
            best = stopped = None
            with torch.no_grad():
                logits = net(torch.from_numpy(x[te]))
            labels = argmax_lowest(logits).tolist()
            scores = torch.softmax(logits, dim=-1).numpy()
        save_checkpoint(run_dir, net, {
            "kind": f"synthetic-{cell.modality}", "cell": cell.key, "seed": cell.seed,
            "config": config_dict(cfg),
            "best_epoch": best, "stopped_epoch": stopped, "synth": bench.config.to_dict(),
        })
        _write_predictions(run_dir, [ids[i] for i in te], y[te], labels, scores)
        return _finish(run_dir, {"test": compute_metrics(y[te].tolist(), labels, task)})


def _completed(run_dir: Path) -> dict | None:
    path = run_dir / "metrics.json"
    if path.exists() and (run_dir / "metadata.json").exists():
        return json.loads(path.read_text())
    return None


def run_experiment(m: ExperimentManifest, force: bool = False, only: str | None = None) -> Ledger:
    """Run every pending cell; completed cells are skipped unless ``force``.

    A failing cell is recorded in the ledger and does not stop the others.
    ``ledger.trained`` counts the cells trained by this call.
    """
    runner = Runner(m)
    ledger = Ledger(m.output_dir)
    cells = [c for c in expand_cells(m) if only is None or fnmatch.fnmatch(c.key, only)]
    existing = ledger.cells
    counter_lock = threading.Lock()

    def execute(cell: Cell) -> None:
        run_dir = cell.run_dir(m.output_dir)
        done = _completed(run_dir)
        if done is not None and not force:
            if existing.get(cell.key, {}).get("status") != "done":
                ledger.update(cell.key, _entry(cell, run_dir, "done", done))
            return
        try:
            logger.info("running %s", cell.key)
            metrics = runner.run_cell(cell)
            with counter_lock:
                ledger.trained += 1
            ledger.update(cell.key, _entry(cell, run_dir, "done", metrics))
        except Exception as err:
            logger.error("cell %s failed: %s", cell.key, err)
            ledger.update(cell.key, {**_entry(cell, run_dir, "failed", None),
                                     "error": f"{type(err).__name__}: {err}",
                                     "traceback": traceback.format_exc()})

    # Fusion cells depend on unimodal ones, so the two groups run in order.
    stages = [[c for c in cells if c.modality != "multimodal"], [c for c in cells if c.modality == "multimodal"]]
    for stage in stages:
        if m.workers > 1:
            with ThreadPoolExecutor(max_workers=m.workers) as pool:
                list(pool.map(execute, stage))
        else:
            for cell in stage:
                execute(cell)
    return ledger


def _entry(cell: Cell, run_dir: Path, status: str, metrics: dict | None) -> dict:
    entry = {
        "task": cell.task, "family": cell.family, "language": cell.language,
        "modality": cell.modality, "seed": cell.seed, "status": status,
        "run_dir": str(run_dir), "metrics": metrics,
    }
    meta_path = run_dir / "metadata.json"
    if status == "done" and meta_path.exists():
        meta = load_metadata(run_dir)
        entry["stopped_epoch"] = meta.get("stopped_epoch")
        entry["checksum"] = meta.get("checksum")
    return entry

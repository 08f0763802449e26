"""Synthetic language-parallel multimodal benchmark.

Each example has a latent class. Its text embedding in language ``L`` is the
class's text prototype plus isotropic Gaussian noise with per-coordinate
standard deviation ``sigma_text[L]``; its image embedding is the class's
image prototype plus noise of scale ``sigma_image``, shared by all six
language versions. Prototypes are Gaussian vectors rescaled to norm
``separation``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
import torch
from PIL import Image
from torch import nn

from .data import (
    LANGUAGES,
    SPLITS,
    DatasetVersion,
    Language,
    MultimodalExample,
    TaskSpec,
    manifest_path,
    save_manifest,
)
from .embeddings import IMAGE_DIM, TEXT_DIM, EmbeddingCache, dataset_key
from .training import TrainingConfig, seed_everything, train_classifier

SYNTH_TEXT_MODEL = "synthetic-text"
SYNTH_IMAGE_MODEL = "synthetic-image"

DEFAULT_SIGMA_TEXT = {"en": 1.0, "fr": 1.1, "es": 1.2, "pt": 1.3, "zh": 1.4, "hi": 1.6}


@dataclass(frozen=True)
class SynthConfig:
    num_classes: int = 4
    n_per_split: Mapping[str, int] = field(
        default_factory=lambda: {"train": 400, "validation": 100, "test": 400})
    text_dim: int = TEXT_DIM
    image_dim: int = IMAGE_DIM
    separation: float = 4.0
    sigma_text: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_SIGMA_TEXT))
    sigma_image: float = 1.0
    seed: int = 0
    task_name: str = "synth"
    emit_raw: bool = False

    def __post_init__(self) -> None:
        sigma = {Language.parse(k): float(v) for k, v in self.sigma_text.items()}
        missing = [l.value for l in LANGUAGES if l not in sigma]
        if missing:
            raise ValueError(f"sigma_text missing languages {missing}")
        object.__setattr__(self, "sigma_text", sigma)
        object.__setattr__(self, "n_per_split", {s: int(self.n_per_split.get(s, 0)) for s in SPLITS})
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.text_dim < 1 or self.image_dim < 1:
            raise ValueError("embedding dims must be positive")
        if any(v < 0 for v in sigma.values()) or self.sigma_image < 0:
            raise ValueError("noise scales must be non-negative")
        if self.separation <= 0:
            raise ValueError("separation must be positive")
        if any(sigma[Language.EN] > v for v in sigma.values()):
            raise ValueError("sigma_text[en] must be the smallest text noise")
        if any(n < 1 for n in self.n_per_split.values()):
            raise ValueError("every split needs at least one example")

    @property
    def task(self) -> TaskSpec:
        return TaskSpec(self.task_name, tuple(f"class_{i}" for i in range(self.num_classes)))

    def to_dict(self) -> dict:
        return {
            "num_classes": self.num_classes,
            "n_per_split": dict(self.n_per_split),
            "text_dim": self.text_dim,
            "image_dim": self.image_dim,
            "separation": self.separation,
            "sigma_text": {l.value: v for l, v in self.sigma_text.items()},
            "sigma_image": self.sigma_image,
            "seed": self.seed,
            "task_name": self.task_name,
            "emit_raw": self.emit_raw,
        }


@dataclass
class SynthBenchmark:
    config: SynthConfig
    versions: dict[Language, DatasetVersion]
    text_embeddings: dict[Language, np.ndarray]
    image_embeddings: np.ndarray
    text_prototypes: np.ndarray
    image_prototypes: np.ndarray
    images: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def task(self) -> TaskSpec:
        return self.config.task

    def indices(self, split: str) -> np.ndarray:
        examples = self.versions[Language.EN].examples
        return np.array([i for i, ex in enumerate(examples) if ex.split == split])

    def labels(self, split: str | None = None) -> np.ndarray:
        examples = self.versions[Language.EN].examples
        return np.array([ex.label for ex in examples if split is None or ex.split == split])


def _prototypes(rng: np.random.Generator, n: int, dim: int, norm: float) -> np.ndarray:
    raw = rng.standard_normal((n, dim))
    return raw / np.linalg.norm(raw, axis=1, keepdims=True) * norm


_FILLER = ("the", "a", "of", "in", "on", "today", "people", "news", "city", "see")
_PATCH_COLORS = np.array([
    [230, 25, 75], [60, 180, 75], [0, 130, 200], [255, 225, 25], [145, 30, 180],
    [70, 240, 240], [240, 50, 230], [210, 245, 60], [250, 190, 212], [0, 128, 128],
], dtype=np.float64)


def _toy_text(rng: np.random.Generator, label: int, lang: Language, sigma: float, length: int = 8) -> str:
    # Keyword probability decays with noise so noisier languages read vaguer.
    p_keyword = 1.0 / (1.0 + sigma)
    words = []
    for _ in range(length):
        if rng.random() < p_keyword:
            words.append(f"{lang.value}kw{label}x{rng.integers(3)}")
        else:
            words.append(f"{lang.value}{_FILLER[rng.integers(len(_FILLER))]}")
    return " ".join(words)


def _toy_image(rng: np.random.Generator, label: int, sigma: float, size: int = 64) -> np.ndarray:
    img = np.full((size, size, 3), 128.0)
    color = _PATCH_COLORS[label % len(_PATCH_COLORS)]
    top, left = rng.integers(0, size // 2, size=2)
    img[top : top + size // 2, left : left + size // 2] = color
    img += rng.normal(0.0, 40.0 * sigma, img.shape)
    return np.clip(img, 0, 255).astype(np.uint8)


def generate_synthetic(cfg: SynthConfig) -> SynthBenchmark:
    """Six parallel dataset versions plus their text and image embeddings."""
    rng = np.random.default_rng(cfg.seed)
    k = cfg.num_classes
    text_protos = _prototypes(rng, k, cfg.text_dim, cfg.separation)
    image_protos = _prototypes(rng, k, cfg.image_dim, cfg.separation)

    splits, labels = [], []
    for split in SPLITS:
        n = cfg.n_per_split[split]
        splits += [split] * n
        labels += (np.arange(n) % k).tolist()
    labels = np.array(labels)
    rng.shuffle(labels)
    n_total = len(labels)
    ids = [f"syn-{cfg.seed}-{i:06d}" for i in range(n_total)]

    image_emb = image_protos[labels] + cfg.sigma_image * rng.standard_normal((n_total, cfg.image_dim))
    unit_noise = {lang: rng.standard_normal((n_total, cfg.text_dim)) for lang in LANGUAGES}
    text_emb = {
        lang: (text_protos[labels] + cfg.sigma_text[lang] * unit_noise[lang]).astype(np.float32)
        for lang in LANGUAGES
    }

    images: dict[str, np.ndarray] = {}
    raw_rng = np.random.default_rng([cfg.seed, 1])
    if cfg.emit_raw:
        for i, ex_id in enumerate(ids):
            images[ex_id] = _toy_image(raw_rng, int(labels[i]), cfg.sigma_image)

    task = cfg.task
    versions = {}
    for lang in LANGUAGES:
        examples = []
        for i, ex_id in enumerate(ids):
            text = (_toy_text(raw_rng, int(labels[i]), lang, cfg.sigma_text[lang]) if cfg.emit_raw
                    else f"{lang.value} synthetic example {i}")
            examples.append(MultimodalExample(ex_id, text, f"images/{ex_id}.png", int(labels[i]), lang, splits[i]))
        provenance = "original" if lang is Language.EN else "machine-translated"
        versions[lang] = DatasetVersion(task, lang, tuple(examples), provenance)

    return SynthBenchmark(cfg, versions, text_emb, image_emb.astype(np.float32),
                          text_protos, image_protos, images)


def synthetic_model_ids(cfg: SynthConfig) -> tuple[str, str]:
    """Pseudo model checksums under which synthetic embeddings are cached."""
    return f"{SYNTH_TEXT_MODEL}-{cfg.seed:04d}", f"{SYNTH_IMAGE_MODEL}-{cfg.seed:04d}"


def write_synthetic(bench: SynthBenchmark, out_dir: str | os.PathLike) -> dict[str, Path]:
    """Write manifests, embedding cache files and (if generated) images.

    Layout: ``<out>/<task>/<lang>.tsv``, ``<out>/embeddings/...`` and
    ``<out>/<task>/images/<id>.png``.
    """
    out_dir = Path(out_dir)
    cache = EmbeddingCache(out_dir / "embeddings")
    text_id, image_id = synthetic_model_ids(bench.config)
    written = {}
    for lang, version in bench.versions.items():
        path = save_manifest(version, manifest_path(out_dir, bench.task.name, lang))
        written[lang.value] = path
        ids = [ex.id for ex in version.examples]
        key = dataset_key(version)
        cache.put(text_id, key, ids, bench.text_embeddings[lang])
        cache.put(image_id, key, ids, bench.image_embeddings)
    if bench.images:
        img_dir = out_dir / bench.task.name / "images"
        img_dir.mkdir(parents=True, exist_ok=True)
        for ex_id, arr in bench.images.items():
            Image.fromarray(arr).save(img_dir / f"{ex_id}.png")
    return written


# ---------------------------------------------------------------------------
# Single-modality heads over precomputed embeddings


def nearest_prototype(x: np.ndarray, prototypes: np.ndarray) -> np.ndarray:
    d = ((x[:, None, :] - prototypes[None, :, :]) ** 2).sum(axis=-1)
    return d.argmin(axis=1)


def train_linear_head(train_x: np.ndarray, train_y, val_x: np.ndarray, val_y,
                      num_classes: int, cfg: TrainingConfig) -> nn.Linear:
    """Softmax-regression head on fixed embeddings."""
    seed_everything(cfg.seed)
    head = nn.Linear(train_x.shape[1], num_classes)
    train_classifier(
        head,
        torch.from_numpy(np.asarray(train_x, dtype=np.float32)), torch.as_tensor(np.asarray(train_y)),
        torch.from_numpy(np.asarray(val_x, dtype=np.float32)), torch.as_tensor(np.asarray(val_y)),
        cfg,
    )
    return head


@dataclass
class TrialResult:
    seed: int
    text_f1: dict[Language, float]
    multimodal_f1: dict[Language, float]
    image_f1: float


def synthetic_trial(cfg: SynthConfig, train_cfg: TrainingConfig | None = None) -> TrialResult:
    """Text-only, image-only and fused test F1 for every language on one benchmark draw."""
    from .fusion import fuse_matrices, predict_fused, train_fusion_on_embeddings
    from .metrics import compute_metrics

    train_cfg = train_cfg or TrainingConfig(seed=cfg.seed)
    bench = generate_synthetic(cfg)
    task = bench.task
    y = bench.labels()
    tr, va, te = (bench.indices(s) for s in ("train", "validation", "test"))

    def head_f1(x: np.ndarray) -> float:
        head = train_linear_head(x[tr], y[tr], x[va], y[va], task.num_classes, train_cfg)
        with torch.no_grad():
            pred = head(torch.from_numpy(x[te])).argmax(dim=-1).tolist()
        return compute_metrics(y[te].tolist(), pred, task).f1

    text_f1, mm_f1 = {}, {}
    for lang in LANGUAGES:
        text_f1[lang] = head_f1(bench.text_embeddings[lang])
        fused = fuse_matrices(bench.text_embeddings[lang], bench.image_embeddings)
        model = train_fusion_on_embeddings(fused[tr], y[tr], fused[va], y[va], train_cfg, task, lang, "synthetic")
        pred = [p.label for p in predict_fused(model, fused[te])]
        mm_f1[lang] = compute_metrics(y[te].tolist(), pred, task).f1
    return TrialResult(cfg.seed, text_f1, mm_f1, head_f1(bench.image_embeddings))

"""Late fusion of frozen text and image embeddings."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
import torch
from torch import nn

from .data import DatasetVersion, Language, MultimodalExample, TaskSpec
from .embeddings import FUSED_DIM, IMAGE_DIM, TEXT_DIM, Embedding, EmbeddingCache, dataset_key
from .image_encoder import ImageLoader, ImageModel, embed_examples, file_loader
from .text_encoder import FineTunedTextModel, embed_texts
from .training import (
    FUSION_PATIENCE,
    TrainingConfig,
    argmax_lowest,
    config_dict,
    load_metadata,
    load_state,
    save_checkpoint,
    seed_everything,
    state_checksum,
    train_classifier,
)

HIDDEN_WIDTHS = (512, 128, 32)


def fuse(text: Embedding, image: Embedding) -> Embedding:
    """Concatenate a text and an image embedding, text block first."""
    if text.modality != "text" or image.modality != "image":
        raise ValueError(f"expected (text, image) embeddings, got ({text.modality}, {image.modality})")
    if text.dim != TEXT_DIM or image.dim != IMAGE_DIM:
        raise ValueError(f"expected dims ({TEXT_DIM}, {IMAGE_DIM}), got ({text.dim}, {image.dim})")
    return Embedding(np.concatenate([text.values, image.values]), "fused")


def fuse_matrices(text: np.ndarray, image: np.ndarray) -> np.ndarray:
    if text.shape[0] != image.shape[0]:
        raise ValueError("text and image batches differ in length")
    return np.concatenate([text, image], axis=1).astype(np.float32)


class FusionNet(nn.Module):
    """1024 -> 512 -> 128 -> 32 -> classes, ReLU between layers."""

    def __init__(self, num_classes: int, in_dim: int = FUSED_DIM):
        super().__init__()
        widths = (in_dim, *HIDDEN_WIDTHS)
        layers: list[nn.Module] = []
        for a, b in zip(widths, widths[1:]):
            layers += [nn.Linear(a, b), nn.ReLU()]
        layers.append(nn.Linear(widths[-1], num_classes))
        self.layers = nn.Sequential(*layers)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.layers(x)

    @property
    def widths(self) -> tuple[int, ...]:
        linears = [m for m in self.layers if isinstance(m, nn.Linear)]
        return (linears[0].in_features, *(m.out_features for m in linears))


def expected_parameter_count(num_classes: int) -> int:
    widths = (FUSED_DIM, *HIDDEN_WIDTHS, num_classes)
    return sum(a * b + b for a, b in zip(widths, widths[1:]))


@dataclass
class FusionModel:
    net: FusionNet
    task: TaskSpec
    language: Language
    family: str
    config: TrainingConfig
    best_val_loss: float
    best_epoch: int
    stopped_epoch: int
    text_model: FineTunedTextModel | None = field(default=None, repr=False)
    image_model: ImageModel | None = field(default=None, repr=False)
    image_loader: ImageLoader | None = field(default=None, repr=False)


class Prediction(NamedTuple):
    label: int
    scores: np.ndarray


def train_fusion_on_embeddings(
    train_x: np.ndarray,
    train_y: Sequence[int],
    val_x: np.ndarray,
    val_y: Sequence[int],
    cfg: TrainingConfig,
    task: TaskSpec,
    language: Language | str,
    family: str,
) -> FusionModel:
    """Train the fusion network on precomputed fused vectors."""
    seed_everything(cfg.seed)
    net = FusionNet(task.num_classes, in_dim=train_x.shape[1])
    result = train_classifier(
        net,
        torch.from_numpy(np.asarray(train_x, dtype=np.float32)), torch.tensor(list(train_y)),
        torch.from_numpy(np.asarray(val_x, dtype=np.float32)), torch.tensor(list(val_y)),
        cfg,
    )
    return FusionModel(net, task, Language.parse(language), family, cfg,
                       result.best_val_loss, result.best_epoch, result.stopped_epoch)


def unimodal_embeddings(
    text_model: FineTunedTextModel,
    image_model: ImageModel,
    examples: Sequence[MultimodalExample],
    loader: ImageLoader,
    cache: EmbeddingCache | None = None,
    version: DatasetVersion | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Text and image embedding matrices for ``examples``, optionally cached
    per (model checksum, dataset version)."""
    ids = [ex.id for ex in examples]
    key = dataset_key(version) if (cache is not None and version is not None) else None
    t_sum = state_checksum(text_model.classifier)
    i_sum = state_checksum(image_model.net)

    def get(checksum, compute):
        if key is None:
            return compute(examples)
        if not cache.has(checksum, key):
            cache.put(checksum, key, [ex.id for ex in version.examples], compute(list(version.examples)))
        return cache.lookup(checksum, key, ids)

    text = get(t_sum, lambda exs: embed_texts(text_model, [ex.text for ex in exs]))
    image = get(i_sum, lambda exs: embed_examples(image_model, exs, loader))
    return text, image


def train_fusion(
    text_model: FineTunedTextModel,
    image_model: ImageModel,
    train: Sequence[MultimodalExample],
    val: Sequence[MultimodalExample],
    cfg: TrainingConfig,
    loader: ImageLoader | None = None,
    cache: EmbeddingCache | None = None,
    version: DatasetVersion | None = None,
) -> FusionModel:
    """Train a fusion classifier on embeddings from two frozen unimodal models."""
    if text_model.task != image_model.task:
        raise ValueError(f"task mismatch: text {text_model.task.name!r} vs image {image_model.task.name!r}")
    languages = {ex.language for ex in (*train, *val)}
    if languages != {text_model.language}:
        raise ValueError(f"text model is {text_model.language.value}, data is {sorted(l.value for l in languages)}")
    loader = loader or file_loader()
    sums = (state_checksum(text_model.classifier), state_checksum(image_model.net))

    t_tr, i_tr = unimodal_embeddings(text_model, image_model, train, loader, cache, version)
    t_va, i_va = unimodal_embeddings(text_model, image_model, val, loader, cache, version)
    model = train_fusion_on_embeddings(
        fuse_matrices(t_tr, i_tr), [ex.label for ex in train],
        fuse_matrices(t_va, i_va), [ex.label for ex in val],
        cfg, text_model.task, text_model.language, text_model.spec.family,
    )
    if (state_checksum(text_model.classifier), state_checksum(image_model.net)) != sums:
        raise RuntimeError("unimodal model weights changed during fusion training")
    model.text_model, model.image_model, model.image_loader = text_model, image_model, loader
    return model


def predict_fused(model: FusionModel, fused: np.ndarray) -> list[Prediction]:
    model.net.eval()
    with torch.no_grad():
        logits = model.net(torch.from_numpy(np.atleast_2d(np.asarray(fused, dtype=np.float32))))
    probs = torch.softmax(logits, dim=-1).numpy()
    return [Prediction(int(l), p) for l, p in zip(argmax_lowest(logits), probs)]


def predict_fusion_batch(model: FusionModel, examples: Sequence[MultimodalExample]) -> list[Prediction]:
    if model.text_model is None or model.image_model is None:
        raise ValueError("fusion model has no attached unimodal models")
    for ex in examples:
        if not ex.text or not ex.image_ref:
            raise ValueError(f"example {ex.id!r} is missing a modality")
    loader = model.image_loader or file_loader()
    text, image = unimodal_embeddings(model.text_model, model.image_model, examples, loader)
    return predict_fused(model, fuse_matrices(text, image))


def predict_fusion(model: FusionModel, example: MultimodalExample) -> Prediction:
    return predict_fusion_batch(model, [example])[0]


def save_fusion_model(model: FusionModel, run_dir: str | Path, extra: dict | None = None) -> Path:
    meta = {
        "kind": "fusion",
        "task": model.task.name,
        "language": model.language.value,
        "family": model.family,
        "in_dim": model.net.widths[0],
        "config": config_dict(model.config),
        "best_val_loss": model.best_val_loss,
        "best_epoch": model.best_epoch,
        "stopped_epoch": model.stopped_epoch,
        **(extra or {}),
    }
    return save_checkpoint(run_dir, model.net, meta)


def load_fusion_model(run_dir: str | Path, task: TaskSpec) -> FusionModel:
    meta = load_metadata(run_dir)
    net = FusionNet(task.num_classes, in_dim=meta.get("in_dim", FUSED_DIM))
    net.load_state_dict(load_state(run_dir))
    net.eval()
    return FusionModel(net, task, Language.parse(meta["language"]), meta["family"],
                       TrainingConfig(**meta["config"]), meta["best_val_loss"],
                       meta["best_epoch"], meta["stopped_epoch"])


def default_fusion_config(seed: int = 0, **overrides) -> TrainingConfig:
    return TrainingConfig(patience=FUSION_PATIENCE, seed=seed, **overrides)

"""Frozen-backbone image classifiers and 256-d penultimate embeddings."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

import numpy as np
import torch
from torch import nn

from .data import MultimodalExample, TaskSpec
from .embeddings import IMAGE_DIM, Embedding
from .preprocess import IMAGE_SIZE, load_image, standardize_image
from .training import (
    IMAGE_PATIENCE,
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

logger = logging.getLogger(__name__)

HEAD_WIDTHS = (4096, IMAGE_DIM)


class TinyConvBackbone(nn.Module):
    """Small convolutional feature extractor with fixed seeded weights.

    Stands in for a large pretrained network when none is available.
    """

    def __init__(self, feature_dim: int = 512, seed: int = 1234):
        super().__init__()
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            self.features = nn.Sequential(
                nn.Conv2d(3, 32, kernel_size=7, stride=4, padding=3), nn.ReLU(),
                nn.Conv2d(32, 64, kernel_size=3, stride=2, padding=1), nn.ReLU(),
                nn.Conv2d(64, 128, kernel_size=3, stride=2, padding=1), nn.ReLU(),
                nn.AdaptiveAvgPool2d(2),
                nn.Flatten(),
                nn.Linear(128 * 4, feature_dim), nn.ReLU(),
            )
        self.feature_dim = feature_dim

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.features(x)


class VGG16Backbone(nn.Module):
    """VGG-16 up to (and including) its second 4096-wide layer; the original
    1000-way output layer is what the trainable head replaces."""

    def __init__(self, weights: str | None = "DEFAULT"):
        super().__init__()
        from torchvision.models import vgg16

        net = vgg16(weights=weights)
        self.features = net.features
        self.avgpool = net.avgpool
        self.classifier = net.classifier[:-1]
        self.feature_dim = 4096

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.avgpool(self.features(x))
        return self.classifier(torch.flatten(x, 1))


def build_backbone(name: str = "tiny") -> nn.Module:
    if name == "tiny":
        return TinyConvBackbone()
    if name == "vgg16":
        return VGG16Backbone()
    if name == "vgg16-random":
        return VGG16Backbone(weights=None)
    raise ValueError(f"unknown backbone {name!r}")


class ImageHead(nn.Module):
    def __init__(self, in_dim: int, num_classes: int):
        super().__init__()
        self.fc1 = nn.Linear(in_dim, HEAD_WIDTHS[0])
        self.fc2 = nn.Linear(HEAD_WIDTHS[0], HEAD_WIDTHS[1])
        self.out = nn.Linear(HEAD_WIDTHS[1], num_classes)
        self.act = nn.ReLU()

    def embed(self, features: torch.Tensor) -> torch.Tensor:
        return self.act(self.fc2(self.act(self.fc1(features))))

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        return self.out(self.embed(features))

    @property
    def widths(self) -> tuple[int, int, int]:
        return self.fc1.out_features, self.fc2.out_features, self.out.out_features


class BackboneWithHead(nn.Module):
    def __init__(self, backbone: nn.Module, head: ImageHead):
        super().__init__()
        self.backbone = backbone
        self.head = head


@dataclass
class ImageModel:
    backbone_name: str
    net: BackboneWithHead
    task: TaskSpec
    config: TrainingConfig
    best_val_loss: float
    best_epoch: int
    stopped_epoch: int

    @property
    def backbone(self) -> nn.Module:
        return self.net.backbone

    @property
    def head(self) -> ImageHead:
        return self.net.head


class Prediction(NamedTuple):
    label: int
    scores: np.ndarray


ImageLoader = Callable[[MultimodalExample], np.ndarray]


def file_loader(root: str | os.PathLike = ".") -> ImageLoader:
    """Loader reading ``root / image_ref`` from disk."""
    root = Path(root)

    def load(ex: MultimodalExample) -> np.ndarray:
        path = root / ex.image_ref
        if not path.is_file():
            raise FileNotFoundError(f"image for {ex.id!r} not found: {path}")
        return load_image(path)

    return load


def _to_tensor(images: Sequence[np.ndarray]) -> torch.Tensor:
    for img in images:
        if img.shape != (IMAGE_SIZE, IMAGE_SIZE, 3):
            raise ValueError(f"expected a standardized {IMAGE_SIZE}x{IMAGE_SIZE}x3 image, got {img.shape}")
    return torch.from_numpy(np.stack(images)).permute(0, 3, 1, 2).contiguous()


def backbone_features(backbone: nn.Module, images: Sequence[np.ndarray], batch_size: int = 32) -> torch.Tensor:
    """Backbone outputs for already standardized images."""
    backbone.eval()
    out = []
    with torch.no_grad():
        for start in range(0, len(images), batch_size):
            out.append(backbone(_to_tensor(images[start : start + batch_size])))
    return torch.cat(out)


def example_features(backbone: nn.Module, examples: Sequence[MultimodalExample], loader: ImageLoader,
                     batch_size: int = 32) -> torch.Tensor:
    out = []
    for start in range(0, len(examples), batch_size):
        chunk = [standardize_image(loader(ex)) for ex in examples[start : start + batch_size]]
        out.append(backbone_features(backbone, chunk, batch_size))
    return torch.cat(out)


def train_image_head(
    train: Sequence[MultimodalExample],
    val: Sequence[MultimodalExample],
    cfg: TrainingConfig,
    task: TaskSpec,
    loader: ImageLoader | None = None,
    backbone: str = "tiny",
) -> ImageModel:
    """Train the three-layer head over a frozen backbone.

    Backbone features are computed once up front since the backbone never
    changes; only head parameters reach the optimizer.
    """
    if not train or not val:
        raise ValueError("empty train or validation split")
    loader = loader or file_loader()
    net_backbone = build_backbone(backbone)
    for p in net_backbone.parameters():
        p.requires_grad_(False)
    before = state_checksum(net_backbone)

    f_train = example_features(net_backbone, train, loader)
    f_val = example_features(net_backbone, val, loader)
    seed_everything(cfg.seed)
    head = ImageHead(net_backbone.feature_dim, task.num_classes)
    y_train = torch.tensor([ex.label for ex in train])
    y_val = torch.tensor([ex.label for ex in val])
    result = train_classifier(head, f_train, y_train, f_val, y_val, cfg)

    if state_checksum(net_backbone) != before:
        raise RuntimeError("backbone weights changed during head training")
    return ImageModel(backbone, BackboneWithHead(net_backbone, head), task, cfg,
                      result.best_val_loss, result.best_epoch, result.stopped_epoch)


def embed_images(model: ImageModel, images: Sequence[np.ndarray]) -> np.ndarray:
    """Post-ReLU activations of the 256-wide head layer."""
    feats = backbone_features(model.backbone, images)
    model.head.eval()
    with torch.no_grad():
        return model.head.embed(feats).numpy().astype(np.float32)


def embed_image(model: ImageModel, image: np.ndarray) -> Embedding:
    return Embedding(embed_images(model, [image])[0], "image")


def embed_examples(model: ImageModel, examples: Sequence[MultimodalExample], loader: ImageLoader) -> np.ndarray:
    feats = example_features(model.backbone, examples, loader)
    model.head.eval()
    with torch.no_grad():
        return model.head.embed(feats).numpy().astype(np.float32)


def predict_images(model: ImageModel, images: Sequence[np.ndarray]) -> list[Prediction]:
    feats = backbone_features(model.backbone, images)
    model.head.eval()
    with torch.no_grad():
        logits = model.head(feats)
    probs = torch.softmax(logits, dim=-1).numpy()
    return [Prediction(int(l), p) for l, p in zip(argmax_lowest(logits), probs)]


def predict_image(model: ImageModel, image: np.ndarray) -> Prediction:
    return predict_images(model, [image])[0]


def predict_examples(model: ImageModel, examples: Sequence[MultimodalExample], loader: ImageLoader) -> list[Prediction]:
    feats = example_features(model.backbone, examples, loader)
    with torch.no_grad():
        logits = model.head(feats)
    probs = torch.softmax(logits, dim=-1).numpy()
    return [Prediction(int(l), p) for l, p in zip(argmax_lowest(logits), probs)]


def save_image_model(model: ImageModel, run_dir: str | Path, extra: dict | None = None) -> Path:
    meta = {
        "kind": "image",
        "backbone": model.backbone_name,
        "backbone_checksum": state_checksum(model.backbone),
        "task": model.task.name,
        "config": config_dict(model.config),
        "best_val_loss": model.best_val_loss,
        "best_epoch": model.best_epoch,
        "stopped_epoch": model.stopped_epoch,
        **(extra or {}),
    }
    return save_checkpoint(run_dir, model.head, meta)


def load_image_model(run_dir: str | Path, task: TaskSpec) -> ImageModel:
    meta = load_metadata(run_dir)
    backbone = build_backbone(meta["backbone"])
    for p in backbone.parameters():
        p.requires_grad_(False)
    head = ImageHead(backbone.feature_dim, task.num_classes)
    head.load_state_dict(load_state(run_dir))
    head.eval()
    return ImageModel(meta["backbone"], BackboneWithHead(backbone, head), task, TrainingConfig(**meta["config"]),
                      meta["best_val_loss"], meta["best_epoch"], meta["stopped_epoch"])


def default_image_config(seed: int = 0, **overrides) -> TrainingConfig:
    return TrainingConfig(patience=IMAGE_PATIENCE, seed=seed, **overrides)

"""Training loop, early stopping and checkpoint sidecars shared by all models."""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import os
import random
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np
import torch
from torch import nn

logger = logging.getLogger(__name__)

TEXT_PATIENCE = 5
IMAGE_PATIENCE = 10
FUSION_PATIENCE = 5


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 1e-4
    patience: int = TEXT_PATIENCE
    max_epochs: int = 50
    batch_size: int = 32
    seed: int = 0
    max_length: int = 128

    def __post_init__(self) -> None:
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.max_epochs < 1 or self.batch_size < 1:
            raise ValueError("max_epochs and batch_size must be >= 1")

    def with_(self, **changes) -> "TrainingConfig":
        return replace(self, **changes)


class EarlyStopping:
    """Tracks validation loss; signals a stop after ``patience`` epochs
    without a strict improvement. Epochs are numbered from 1."""

    def __init__(self, patience: int):
        if patience < 1:
            raise ValueError("patience must be >= 1")
        self.patience = patience
        self.best_loss = float("inf")
        self.best_epoch = 0
        self.epoch = 0

    def step(self, loss: float) -> bool:
        """Record one epoch's loss; return True if it is a new best."""
        self.epoch += 1
        if loss < self.best_loss:
            self.best_loss = loss
            self.best_epoch = self.epoch
            return True
        return False

    @property
    def should_stop(self) -> bool:
        return self.epoch - self.best_epoch >= self.patience


@dataclass
class TrainResult:
    best_epoch: int
    stopped_epoch: int
    best_val_loss: float
    history: list[float] = field(default_factory=list)


def fit(
    model: nn.Module,
    train_epoch: Callable[[], float],
    validation_loss: Callable[[], float],
    patience: int,
    max_epochs: int,
) -> TrainResult:
    """Run epochs until early stopping or ``max_epochs``.

    The model is left holding the weights from the epoch with the lowest
    validation loss.
    """
    stopper = EarlyStopping(patience)
    best_state = copy.deepcopy(model.state_dict())
    history = []
    for _ in range(max_epochs):
        train_epoch()
        loss = float(validation_loss())
        history.append(loss)
        if stopper.step(loss):
            best_state = copy.deepcopy(model.state_dict())
        logger.debug("epoch %d val_loss %.5f (best %d)", stopper.epoch, loss, stopper.best_epoch)
        if stopper.should_stop:
            break
    model.load_state_dict(best_state)
    return TrainResult(stopper.best_epoch, stopper.epoch, stopper.best_loss, history)


def seed_everything(seed: int) -> torch.Generator:
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)
    return torch.Generator().manual_seed(seed)


def train_classifier(
    model: nn.Module,
    train_inputs: torch.Tensor,
    train_labels: torch.Tensor,
    val_inputs: torch.Tensor,
    val_labels: torch.Tensor,
    cfg: TrainingConfig,
    parameters=None,
    forward: Callable[[torch.Tensor], torch.Tensor] | None = None,
) -> TrainResult:
    """Cross-entropy training with Adam and early stopping.

    ``forward`` maps a batch of inputs to logits (defaults to ``model``);
    ``parameters`` restricts what the optimizer updates.
    """
    if len(train_labels) == 0 or len(val_labels) == 0:
        raise ValueError("empty train or validation split")
    forward = forward or model
    gen = torch.Generator().manual_seed(cfg.seed)
    params = list(parameters if parameters is not None else model.parameters())
    optimizer = torch.optim.Adam(params, lr=cfg.learning_rate)
    loss_fn = nn.CrossEntropyLoss()

    def train_epoch() -> float:
        model.train()
        order = torch.randperm(len(train_labels), generator=gen)
        total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            optimizer.zero_grad()
            loss = loss_fn(forward(train_inputs[idx]), train_labels[idx])
            loss.backward()
            optimizer.step()
            total += loss.item() * len(idx)
        return total / len(order)

    def validation_loss() -> float:
        model.eval()
        with torch.no_grad():
            total = 0.0
            for start in range(0, len(val_labels), 256):
                sl = slice(start, start + 256)
                total += loss_fn(forward(val_inputs[sl]), val_labels[sl]).item() * len(val_labels[sl])
        return total / len(val_labels)

    result = fit(model, train_epoch, validation_loss, cfg.patience, cfg.max_epochs)
    model.eval()
    return result


def argmax_lowest(scores: torch.Tensor) -> torch.Tensor:
    """Row-wise argmax; ties go to the lowest class index."""
    best = scores.max(dim=-1, keepdim=True).values
    hits = scores == best
    idx = torch.arange(scores.shape[-1]).expand_as(scores)
    return torch.where(hits, idx, torch.full_like(idx, scores.shape[-1])).min(dim=-1).values


def state_checksum(module: nn.Module) -> str:
    """SHA-256 over every parameter and buffer, in name order."""
    h = hashlib.sha256()
    for name, tensor in sorted(module.state_dict().items()):
        h.update(name.encode())
        h.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


def save_checkpoint(run_dir: str | os.PathLike, module: nn.Module, metadata: dict) -> Path:
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    torch.save(module.state_dict(), run_dir / "model.pt")
    meta = dict(metadata, checksum=state_checksum(module))
    (run_dir / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n")
    return run_dir


def load_metadata(run_dir: str | os.PathLike) -> dict:
    return json.loads((Path(run_dir) / "metadata.json").read_text())


def load_state(run_dir: str | os.PathLike) -> dict:
    return torch.load(Path(run_dir) / "model.pt", weights_only=True)


def config_dict(cfg: TrainingConfig) -> dict:
    return asdict(cfg)

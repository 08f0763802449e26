"""Modality-tagged embedding vectors and the on-disk embedding cache."""

from __future__ import annotations

import hashlib
import os
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import DatasetVersion, dumps_manifest

TEXT_DIM = 768
IMAGE_DIM = 256
FUSED_DIM = TEXT_DIM + IMAGE_DIM
MODALITIES = ("text", "image", "fused")


@dataclass(frozen=True)
class Embedding:
    values: np.ndarray
    modality: str

    def __post_init__(self) -> None:
        if self.modality not in MODALITIES:
            raise ValueError(f"unknown modality {self.modality!r}")
        arr = np.asarray(self.values, dtype=np.float32)
        if arr.ndim != 1:
            raise ValueError("an embedding is a 1-d vector")
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


def dataset_key(version: DatasetVersion) -> str:
    """Content hash identifying one dataset version."""
    digest = hashlib.sha256(dumps_manifest(version).encode("utf-8")).hexdigest()[:16]
    return f"{version.task.name}-{version.language.value}-{digest}"


class EmbeddingCache:
    """Write-once ``.npz`` files of embeddings keyed by (model, dataset).

    Each file holds the example ids and the matching embedding matrix.
    """

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)

    def path(self, model_checksum: str, dataset: str) -> Path:
        return self.root / model_checksum[:16] / f"{dataset}.npz"

    def has(self, model_checksum: str, dataset: str) -> bool:
        return self.path(model_checksum, dataset).is_file()

    def put(self, model_checksum: str, dataset: str, ids: Sequence[str], matrix: np.ndarray) -> Path:
        path = self.path(model_checksum, dataset)
        if path.exists():
            return path
        matrix = np.asarray(matrix, dtype=np.float32)
        if matrix.shape[0] != len(ids):
            raise ValueError("one embedding row per id required")
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(f"{path.stem}.{os.getpid()}-{threading.get_ident()}.tmp.npz")
        np.savez(tmp, ids=np.asarray(list(ids), dtype=str), matrix=matrix)
        os.replace(tmp, path)
        return path

    def get(self, model_checksum: str, dataset: str) -> dict[str, np.ndarray]:
        return read_embedding_file(self.path(model_checksum, dataset))

    def lookup(self, model_checksum: str, dataset: str, ids: Sequence[str]) -> np.ndarray:
        table = self.get(model_checksum, dataset)
        return np.stack([table[i] for i in ids])


def read_embedding_file(path: str | os.PathLike) -> dict[str, np.ndarray]:
    with np.load(path) as data:
        return dict(zip(data["ids"].tolist(), data["matrix"]))

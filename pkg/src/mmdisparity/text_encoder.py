"""Fine-tuning of pluggable text encoders and penultimate-layer embeddings.

Two encoder backends are available through ``TextEncoderSpec.encoder_id``:

* ``tiny:<name>`` -- a small transformer built locally with a hashing
  tokenizer. Its "pretrained" weights come from a fixed seed derived from the
  name, so every run sharing an encoder id starts from the same body.
* ``hf:<model id>`` -- any Hugging Face encoder loadable with ``AutoModel``.
"""

from __future__ import annotations

import hashlib
import logging
import unicodedata
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
import torch
from torch import nn

from .data import Language, MultimodalExample, TaskSpec
from .embeddings import TEXT_DIM, Embedding
from .training import (
    TEXT_PATIENCE,
    TrainingConfig,
    argmax_lowest,
    config_dict,
    load_metadata,
    load_state,
    save_checkpoint,
    seed_everything,
    train_classifier,
)

logger = logging.getLogger(__name__)

FAMILIES = ("monolingual", "multilingual")

# Hugging Face ids of the published model choices, by (family, language).
REFERENCE_ENCODERS: dict[tuple[str, str], str] = {
    ("monolingual", "en"): "distilbert-base-cased",
    ("monolingual", "es"): "dccuchile/bert-base-spanish-wwm-cased",
    ("monolingual", "fr"): "camembert-base",
    ("monolingual", "pt"): "neuralmind/bert-base-portuguese-cased",
    ("monolingual", "zh"): "hfl/chinese-bert-wwm-ext",
    ("monolingual", "hi"): "monsoon-nlp/hindi-bert",
    ("multilingual", "*"): "distilbert-base-multilingual-cased",
}


@dataclass(frozen=True)
class TextEncoderSpec:
    encoder_id: str
    family: str
    language: Language
    hidden_dim: int = TEXT_DIM

    def __post_init__(self) -> None:
        object.__setattr__(self, "language", Language.parse(self.language))
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")

    def supports(self, language: Language) -> bool:
        return self.family == "multilingual" or self.language is Language.parse(language)

    @classmethod
    def default(cls, family: str, language: Language | str, backend: str = "tiny") -> "TextEncoderSpec":
        language = Language.parse(language)
        if backend == "tiny":
            name = "multilingual" if family == "multilingual" else language.value
            return cls(f"tiny:{name}", family, language)
        key = (family, language.value if family == "monolingual" else "*")
        return cls(f"hf:{REFERENCE_ENCODERS[key]}", family, language)


# ---------------------------------------------------------------------------
# Tiny local backend

def _is_cjk(ch: str) -> bool:
    return "\u4e00" <= ch <= "\u9fff" or "\u3400" <= ch <= "\u4dbf"


def basic_tokens(text: str) -> list[str]:
    """Lower-cased word tokens; CJK characters are tokens on their own and
    punctuation is dropped."""
    out = []
    for word in text.lower().split():
        buf = []
        for ch in word:
            if _is_cjk(ch):
                if buf:
                    out.append("".join(buf))
                    buf = []
                out.append(ch)
            elif unicodedata.category(ch).startswith("P"):
                if buf:
                    out.append("".join(buf))
                    buf = []
            else:
                buf.append(ch)
        if buf:
            out.append("".join(buf))
    return out


class HashTokenizer:
    """Maps word tokens to ids by hashing; id 0 is padding."""

    def __init__(self, vocab_size: int = 8192):
        self.vocab_size = vocab_size

    def token_ids(self, text: str) -> list[int]:
        ids = []
        for tok in basic_tokens(text):
            h = int.from_bytes(hashlib.blake2b(tok.encode("utf-8"), digest_size=8).digest(), "little")
            ids.append(1 + h % (self.vocab_size - 1))
        return ids


class TinyTransformer(nn.Module):
    def __init__(self, hidden_dim: int = TEXT_DIM, vocab_size: int = 8192, layers: int = 1,
                 heads: int = 12, ff_dim: int = 1024, max_length: int = 128):
        super().__init__()
        self.token_embedding = nn.Embedding(vocab_size, hidden_dim, padding_idx=0)
        self.position_embedding = nn.Embedding(max_length, hidden_dim)
        layer = nn.TransformerEncoderLayer(hidden_dim, heads, ff_dim, dropout=0.0, batch_first=True)
        self.encoder = nn.TransformerEncoder(layer, layers, enable_nested_tensor=False)
        self.norm = nn.LayerNorm(hidden_dim)

    def forward(self, ids: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        pos = torch.arange(ids.shape[1], device=ids.device)
        x = self.token_embedding(ids) + self.position_embedding(pos)
        x = self.encoder(x, src_key_padding_mask=~mask)
        return self.norm(x)


class TinyBackend(nn.Module):
    def __init__(self, name: str, hidden_dim: int, max_length: int = 128):
        super().__init__()
        self.tokenizer = HashTokenizer()
        self.max_length = max_length
        seed = int.from_bytes(hashlib.sha256(f"tiny:{name}".encode()).digest()[:4], "little")
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            self.body = TinyTransformer(hidden_dim, self.tokenizer.vocab_size, max_length=max_length)

    def tokenize(self, texts: Sequence[str], max_length: int) -> torch.Tensor:
        max_length = min(max_length, self.max_length)
        rows = [self.tokenizer.token_ids(t)[:max_length] for t in texts]
        width = max(1, max(len(r) for r in rows))
        packed = torch.zeros((len(rows), 2, width), dtype=torch.long)
        for i, r in enumerate(rows):
            packed[i, 0, : len(r)] = torch.tensor(r, dtype=torch.long)
            packed[i, 1, : len(r)] = 1
        return packed

    def forward(self, packed: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        ids, mask = packed[:, 0], packed[:, 1].bool()
        return self.body(ids, mask), mask


class HFBackend(nn.Module):
    def __init__(self, model_id: str):
        super().__init__()
        from transformers import AutoModel, AutoTokenizer

        self.tokenizer = AutoTokenizer.from_pretrained(model_id)
        self.body = AutoModel.from_pretrained(model_id)

    def tokenize(self, texts: Sequence[str], max_length: int) -> torch.Tensor:
        enc = self.tokenizer(list(texts), truncation=True, max_length=max_length,
                             padding=True, return_tensors="pt")
        return torch.stack([enc["input_ids"], enc["attention_mask"]], dim=1)

    def forward(self, packed: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        ids, mask = packed[:, 0], packed[:, 1]
        out = self.body(input_ids=ids, attention_mask=mask)
        return out.last_hidden_state, mask.bool()


def build_backend(spec: TextEncoderSpec) -> nn.Module:
    kind, _, name = spec.encoder_id.partition(":")
    if kind == "tiny":
        return TinyBackend(name, spec.hidden_dim)
    if kind == "hf":
        return HFBackend(name)
    raise ValueError(f"unknown encoder id {spec.encoder_id!r}")


# ---------------------------------------------------------------------------
# Classifier


class TextClassifier(nn.Module):
    """Encoder body plus a linear classification head on mean-pooled token
    states of the last encoder layer."""

    def __init__(self, backend: nn.Module, hidden_dim: int, num_classes: int):
        super().__init__()
        self.backend = backend
        self.head = nn.Linear(hidden_dim, num_classes)

    def embed(self, packed: torch.Tensor) -> torch.Tensor:
        states, mask = self.backend(packed)
        m = mask.unsqueeze(-1).to(states.dtype)
        return (states * m).sum(dim=1) / m.sum(dim=1).clamp(min=1.0)

    def forward(self, packed: torch.Tensor) -> torch.Tensor:
        return self.head(self.embed(packed))


@dataclass
class FineTunedTextModel:
    spec: TextEncoderSpec
    classifier: TextClassifier
    task: TaskSpec
    language: Language
    config: TrainingConfig
    best_val_loss: float
    best_epoch: int
    stopped_epoch: int

    @property
    def head_width(self) -> int:
        return self.classifier.head.out_features


class Prediction(NamedTuple):
    label: int
    scores: np.ndarray


def _check_texts(backend: nn.Module, texts: Sequence[str], max_length: int,
                 ids: Sequence[str] | None = None) -> torch.Tensor:
    packed = backend.tokenize(texts, max_length)
    empty = (packed[:, 1].sum(dim=1) == 0).nonzero().flatten().tolist()
    if empty:
        where = [ids[i] for i in empty] if ids is not None else [texts[i] for i in empty]
        raise ValueError(f"text tokenizes to zero tokens: {where[:5]}")
    return packed


def fine_tune_text(
    spec: TextEncoderSpec,
    train: Sequence[MultimodalExample],
    val: Sequence[MultimodalExample],
    cfg: TrainingConfig,
    task: TaskSpec,
) -> FineTunedTextModel:
    """Fine-tune encoder body and a fresh head with cross-entropy and Adam."""
    if not train or not val:
        raise ValueError("empty train or validation split")
    languages = {ex.language for ex in (*train, *val)}
    if len(languages) != 1:
        raise ValueError(f"mixed languages in data: {sorted(l.value for l in languages)}")
    language = languages.pop()
    if not spec.supports(language):
        raise ValueError(f"{spec.family} encoder for {spec.language.value} cannot take {language.value} data")

    backend = build_backend(spec)
    # Only the head initialization and batch order depend on the seed.
    seed_everything(cfg.seed)
    model = TextClassifier(backend, spec.hidden_dim, task.num_classes)

    x_train = _check_texts(backend, [ex.text for ex in train], cfg.max_length, [ex.id for ex in train])
    x_val = _check_texts(backend, [ex.text for ex in val], cfg.max_length, [ex.id for ex in val])
    y_train = torch.tensor([ex.label for ex in train])
    y_val = torch.tensor([ex.label for ex in val])
    result = train_classifier(model, x_train, y_train, x_val, y_val, cfg)
    return FineTunedTextModel(spec, model, task, language, cfg, result.best_val_loss,
                              result.best_epoch, result.stopped_epoch)


def _batches(model: FineTunedTextModel, texts: Sequence[str], batch_size: int = 64):
    backend = model.classifier.backend
    for start in range(0, len(texts), batch_size):
        yield _check_texts(backend, texts[start : start + batch_size], model.config.max_length)


def embed_texts(model: FineTunedTextModel, texts: Sequence[str]) -> np.ndarray:
    """Mean over tokens of the last encoder layer, one row per text."""
    model.classifier.eval()
    with torch.no_grad():
        rows = [model.classifier.embed(b) for b in _batches(model, texts)]
    return torch.cat(rows).numpy().astype(np.float32)


def embed_text(model: FineTunedTextModel, text: str) -> Embedding:
    return Embedding(embed_texts(model, [text])[0], "text")


def text_logits(model: FineTunedTextModel, texts: Sequence[str]) -> torch.Tensor:
    model.classifier.eval()
    with torch.no_grad():
        return torch.cat([model.classifier(b) for b in _batches(model, texts)])


def predict_texts(model: FineTunedTextModel, texts: Sequence[str]) -> list[Prediction]:
    logits = text_logits(model, texts)
    labels = argmax_lowest(logits)
    probs = torch.softmax(logits, dim=-1).numpy()
    return [Prediction(int(l), p) for l, p in zip(labels, probs)]


def predict_text(model: FineTunedTextModel, text: str) -> Prediction:
    return predict_texts(model, [text])[0]


def save_text_model(model: FineTunedTextModel, run_dir: str | Path, extra: dict | None = None) -> Path:
    meta = {
        "kind": "text",
        "spec": {**asdict(model.spec), "language": model.spec.language.value},
        "task": model.task.name,
        "task_classes": list(model.task.classes),
        "language": model.language.value,
        "config": config_dict(model.config),
        "best_val_loss": model.best_val_loss,
        "best_epoch": model.best_epoch,
        "stopped_epoch": model.stopped_epoch,
        **(extra or {}),
    }
    return save_checkpoint(run_dir, model.classifier, meta)


def load_text_model(run_dir: str | Path, task: TaskSpec) -> FineTunedTextModel:
    meta = load_metadata(run_dir)
    spec = TextEncoderSpec(**meta["spec"])
    classifier = TextClassifier(build_backend(spec), spec.hidden_dim, task.num_classes)
    classifier.load_state_dict(load_state(run_dir))
    classifier.eval()
    return FineTunedTextModel(spec, classifier, task, Language.parse(meta["language"]),
                              TrainingConfig(**meta["config"]), meta["best_val_loss"],
                              meta["best_epoch"], meta["stopped_epoch"])


def default_text_config(seed: int = 0, **overrides) -> TrainingConfig:
    return TrainingConfig(patience=TEXT_PATIENCE, seed=seed, **overrides)

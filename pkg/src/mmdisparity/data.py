"""Dataset records, task definitions and the manifest file format.

A manifest is a UTF-8 text file with a ``#``-prefixed header block followed
by a column row and one tab-separated record per example::

    # task: crisis
    # classes: ["affected_individuals", ...]
    # metric_mode: macro
    # positive_class: -
    # language: en
    # provenance: original
    id	split	label	image_ref	text
    tw-0001	train	3	images/tw-0001.jpg	flood in Houston

The text column is last and backslash-escaped so a record always fits on a
single line.
"""

from __future__ import annotations

import json
import logging
import os
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

logger = logging.getLogger(__name__)


class Language(str, Enum):
    EN = "en"
    ES = "es"
    FR = "fr"
    PT = "pt"
    ZH = "zh"
    HI = "hi"

    @classmethod
    def parse(cls, value: "str | Language") -> "Language":
        try:
            return cls(value.strip().lower() if isinstance(value, str) and not isinstance(value, cls) else value)
        except ValueError:
            raise ManifestError(f"unknown language {value!r}") from None

    def __str__(self) -> str:
        return self.value


REFERENCE_LANGUAGE = Language.EN
LANGUAGES: tuple[Language, ...] = tuple(Language)
NON_ENGLISH: tuple[Language, ...] = tuple(l for l in Language if l is not REFERENCE_LANGUAGE)
# Relative amount of pre-training text per language, largest first.
CORPUS_SIZE_ORDER: tuple[Language, ...] = (
    Language.EN, Language.FR, Language.ES, Language.PT, Language.ZH, Language.HI,
)

SPLITS = ("train", "validation", "test")
PROVENANCES = ("original", "machine-translated", "human-translated")


class ManifestError(ValueError):
    """Raised when a manifest cannot be parsed or fails validation."""


@dataclass(frozen=True)
class TaskSpec:
    name: str
    classes: tuple[str, ...]
    metric_mode: str = "macro"
    positive_class: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "classes", tuple(self.classes))
        if len(self.classes) < 2:
            raise ValueError("a task needs at least two classes")
        if len(set(self.classes)) != len(self.classes):
            raise ValueError("class labels must be unique")
        if self.metric_mode not in ("macro", "binary-positive"):
            raise ValueError(f"unknown metric mode {self.metric_mode!r}")
        if self.metric_mode == "binary-positive":
            if len(self.classes) != 2:
                raise ValueError("binary-positive mode needs exactly two classes")
            if self.positive_class is None or not 0 <= self.positive_class < len(self.classes):
                raise ValueError("binary-positive mode needs a valid positive_class")
        elif self.positive_class is not None:
            raise ValueError("positive_class is only meaningful in binary-positive mode")

    @property
    def num_classes(self) -> int:
        return len(self.classes)


CRISIS = TaskSpec(
    "crisis",
    (
        "affected_individuals",
        "infrastructure_and_utility_damage",
        "not_humanitarian",
        "other_relevant_information",
        "rescue_volunteering_or_donation_effort",
    ),
)
FAKE_NEWS = TaskSpec("fake-news", ("real", "fake"), "binary-positive", positive_class=1)
EMOTION = TaskSpec("emotion", ("creepy", "gore", "happy", "rage"))

TASKS: dict[str, TaskSpec] = {t.name: t for t in (CRISIS, FAKE_NEWS, EMOTION)}

# Published split sizes (train, validation, test) of the three source datasets.
REFERENCE_SPLIT_SIZES: dict[str, tuple[int, int, int]] = {
    "crisis": (5263, 998, 955),
    "fake-news": (9502, 1055, 2687),
    "emotion": (2568, 321, 318),
}

# Published class proportions of each dataset, by class name.
REFERENCE_CLASS_PROPORTIONS: dict[str, dict[str, float]] = {
    "crisis": {
        "infrastructure_and_utility_damage": 0.10,
        "rescue_volunteering_or_donation_effort": 0.14,
        "affected_individuals": 0.01,
        "other_relevant_information": 0.22,
        "not_humanitarian": 0.53,
    },
    "fake-news": {"fake": 0.21, "real": 0.79},
    "emotion": {"creepy": 0.22, "rage": 0.19, "gore": 0.25, "happy": 0.34},
}


def get_task(name: str) -> TaskSpec:
    try:
        return TASKS[name]
    except KeyError:
        raise ManifestError(f"unknown task {name!r}; known: {sorted(TASKS)}") from None


@dataclass(frozen=True)
class MultimodalExample:
    id: str
    text: str
    image_ref: str
    label: int
    language: Language
    split: str


@dataclass(frozen=True)
class DatasetVersion:
    task: TaskSpec
    language: Language
    examples: tuple[MultimodalExample, ...]
    provenance: str = "original"

    def __post_init__(self) -> None:
        object.__setattr__(self, "examples", tuple(self.examples))
        object.__setattr__(self, "language", Language.parse(self.language))
        validate(self)

    def split(self, name: str) -> list[MultimodalExample]:
        if name not in SPLITS:
            raise ManifestError(f"unknown split {name!r}")
        return [ex for ex in self.examples if ex.split == name]

    def split_sizes(self) -> dict[str, int]:
        counts = Counter(ex.split for ex in self.examples)
        return {s: counts.get(s, 0) for s in SPLITS}

    def by_id(self) -> dict[str, MultimodalExample]:
        return {ex.id: ex for ex in self.examples}

    def with_texts(self, texts: Mapping[str, str], language: Language, provenance: str) -> "DatasetVersion":
        """Copy of this version with every text replaced by ``texts[id]``."""
        examples = [
            MultimodalExample(ex.id, texts[ex.id], ex.image_ref, ex.label, language, ex.split)
            for ex in self.examples
        ]
        return DatasetVersion(self.task, language, tuple(examples), provenance)


def validate(version: DatasetVersion) -> None:
    if version.provenance not in PROVENANCES:
        raise ManifestError(f"unknown provenance {version.provenance!r}")
    if not version.examples:
        raise ManifestError("no examples")
    seen: set[str] = set()
    n = version.task.num_classes
    for ex in version.examples:
        if ex.id in seen:
            raise ManifestError(f"duplicate id {ex.id!r}")
        seen.add(ex.id)
        if ex.split not in SPLITS:
            raise ManifestError(f"unknown split {ex.split!r} for {ex.id!r}")
        if not 0 <= ex.label < n:
            raise ManifestError(f"label {ex.label} out of range for {ex.id!r} ({n} classes)")
        if ex.language != version.language:
            raise ManifestError(f"example {ex.id!r} is {ex.language}, dataset is {version.language}")


def missing_images(version: DatasetVersion, root: str | os.PathLike | None = None) -> list[str]:
    """Ids whose image_ref does not resolve to an existing file."""
    base = Path(root) if root is not None else Path(".")
    return [ex.id for ex in version.examples if not (base / ex.image_ref).is_file()]


def class_proportions(examples: Iterable[MultimodalExample], task: TaskSpec) -> dict[str, float]:
    counts = Counter(ex.label for ex in examples)
    total = sum(counts.values())
    if total == 0:
        raise ValueError("no examples")
    return {name: counts.get(i, 0) / total for i, name in enumerate(task.classes)}


# ---------------------------------------------------------------------------
# Manifest I/O

_COLUMNS = ("id", "split", "label", "image_ref", "text")
_ESCAPES = {"\\": "\\\\", "\t": "\\t", "\n": "\\n", "\r": "\\r"}
_UNESCAPES = {"\\": "\\", "t": "\t", "n": "\n", "r": "\r"}


def escape_field(value: str) -> str:
    return "".join(_ESCAPES.get(ch, ch) for ch in value)


def unescape_field(value: str) -> str:
    out = []
    chars = iter(value)
    for ch in chars:
        if ch != "\\":
            out.append(ch)
            continue
        nxt = next(chars, None)
        if nxt not in _UNESCAPES:
            raise ManifestError(f"bad escape sequence in {value!r}")
        out.append(_UNESCAPES[nxt])
    return "".join(out)


def dumps_manifest(version: DatasetVersion) -> str:
    task = version.task
    pos = "-" if task.positive_class is None else str(task.positive_class)
    lines = [
        f"# task: {task.name}",
        f"# classes: {json.dumps(list(task.classes), ensure_ascii=False)}",
        f"# metric_mode: {task.metric_mode}",
        f"# positive_class: {pos}",
        f"# language: {version.language.value}",
        f"# provenance: {version.provenance}",
        "\t".join(_COLUMNS),
    ]
    for ex in version.examples:
        for name, value in (("id", ex.id), ("image_ref", ex.image_ref)):
            if any(c in value for c in "\t\n\r"):
                raise ManifestError(f"{name} {value!r} contains a tab or newline")
        lines.append("\t".join((ex.id, ex.split, str(ex.label), ex.image_ref, escape_field(ex.text))))
    return "\n".join(lines) + "\n"


def save_manifest(version: DatasetVersion, path: str | os.PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(dumps_manifest(version))
    return path


def loads_manifest(content: str, task: TaskSpec | None = None) -> DatasetVersion:
    lines = content.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    header: dict[str, str] = {}
    idx = 0
    while idx < len(lines) and lines[idx].startswith("#"):
        key, sep, value = lines[idx][1:].strip().partition(":")
        if not sep:
            raise ManifestError(f"malformed header line {lines[idx]!r}")
        header[key.strip()] = value.strip()
        idx += 1
    missing = {"task", "classes", "metric_mode", "positive_class", "language", "provenance"} - header.keys()
    if missing:
        raise ManifestError(f"manifest header missing {sorted(missing)}")
    if idx >= len(lines) or tuple(lines[idx].split("\t")) != _COLUMNS:
        raise ManifestError("manifest column row missing or malformed")
    idx += 1

    try:
        classes = json.loads(header["classes"])
        pos = None if header["positive_class"] == "-" else int(header["positive_class"])
        file_task = TaskSpec(header["task"], tuple(classes), header["metric_mode"], pos)
    except (ValueError, TypeError) as err:
        raise ManifestError(f"bad task header: {err}") from None
    if task is not None and task != file_task:
        raise ManifestError(f"manifest task {file_task.name!r} does not match {task.name!r}")
    language = Language.parse(header["language"])

    examples = []
    for lineno, line in enumerate(lines[idx:], start=idx + 1):
        parts = line.split("\t")
        if len(parts) != len(_COLUMNS):
            raise ManifestError(f"line {lineno}: expected {len(_COLUMNS)} fields, got {len(parts)}")
        ex_id, split, label, image_ref, text = parts
        try:
            label_idx = int(label)
        except ValueError:
            raise ManifestError(f"line {lineno}: label {label!r} is not an integer") from None
        examples.append(MultimodalExample(ex_id, unescape_field(text), image_ref, label_idx, language, split))
    if not examples:
        raise ManifestError("no examples")
    return DatasetVersion(file_task, language, tuple(examples), header["provenance"])


def load_manifest(
    path: str | os.PathLike,
    task: TaskSpec | None = None,
    image_root: str | os.PathLike | None = None,
) -> DatasetVersion:
    """Load and validate a manifest.

    Unresolvable images only produce a warning here; training code raises on
    them. ``image_root`` defaults to the manifest's directory.
    """
    path = Path(path)
    try:
        content = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as err:
        raise ManifestError(f"{path}: not valid UTF-8 ({err})") from None
    if not content.strip():
        raise ManifestError("no examples")
    version = loads_manifest(content, task)
    missing = missing_images(version, image_root if image_root is not None else path.parent)
    if missing:
        logger.warning("%s: %d image(s) not found, e.g. %s", path, len(missing), missing[0])
    return version


def check_parallel(versions: Sequence[DatasetVersion]) -> list[str]:
    """Ids whose (split, label) differ or that are absent in some version.

    Returns a sorted list; empty means the versions are parallel.
    """
    if len(versions) < 2:
        return []
    tasks = {v.task for v in versions}
    if len(tasks) > 1:
        raise ValueError("versions belong to different tasks")
    tables = [{ex.id: (ex.split, ex.label) for ex in v.examples} for v in versions]
    all_ids = set().union(*tables)
    bad = []
    for ex_id in all_ids:
        values = [t.get(ex_id) for t in tables]
        if any(v is None for v in values) or len(set(values)) > 1:
            bad.append(ex_id)
    return sorted(bad)


def manifest_path(data_dir: str | os.PathLike, task: str, language: str | Language, suffix: str = "") -> Path:
    """Conventional location ``<data>/<task>/<lang><suffix>.tsv``."""
    return Path(data_dir) / task / f"{Language.parse(language).value}{suffix}.tsv"

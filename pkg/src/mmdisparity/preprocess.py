"""Text cleaning and image standardization applied before encoding."""

from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources

import numpy as np
from PIL import Image

# ---------------------------------------------------------------------------
# Text

CLEANING_RULES = (
    "strip-urls",
    "strip-emoticons",
    "strip-platform-tokens",
    "strip-symbols",
    "expand-negations",
    "collapse-whitespace",
)

# A URL is the whole whitespace-delimited token containing a scheme or "www.".
_URL_RE = re.compile(r"\S*(?:[a-zA-Z][a-zA-Z0-9+.\-]*://|www\.)\S*")
_EMOJI_RE = re.compile(
    "["
    "\U0001F1E6-\U0001F1FF"  # regional indicators (flags)
    "\U0001F300-\U0001F5FF"
    "\U0001F600-\U0001F64F"
    "\U0001F680-\U0001F6FF"
    "\U0001F700-\U0001F77F"
    "\U0001F780-\U0001F7FF"
    "\U0001F800-\U0001F8FF"
    "\U0001F900-\U0001F9FF"
    "\U0001FA00-\U0001FAFF"
    "\u2600-\u26FF"
    "\u2700-\u27BF"
    "\uFE0F\u200D\u20E3"
    "]+"
)
_LEADING_PLATFORM_RE = re.compile(r"^\s*(?:RT\b:?|@\S+)\s*")


def _data_lines(name: str) -> list[str]:
    text = resources.files("mmdisparity.resources").joinpath(name).read_text(encoding="utf-8")
    return [line for line in text.splitlines() if line and not line.startswith("#")]


@lru_cache(maxsize=None)
def contraction_table() -> dict[str, str]:
    table = {}
    for line in _data_lines("contractions.txt"):
        short, expanded = line.split("\t")
        table[short.lower()] = expanded
    return table


@lru_cache(maxsize=None)
def ascii_emoticons() -> frozenset[str]:
    return frozenset(_data_lines("emoticons.txt"))


@lru_cache(maxsize=None)
def _negation_re() -> re.Pattern:
    forms = sorted(contraction_table(), key=len, reverse=True)
    alternatives = "|".join(re.escape(f).replace("'", "['’]") for f in forms)
    return re.compile(rf"(?<![\w'’])(?:{alternatives})(?![\w'’])", re.IGNORECASE)


def strip_urls(text: str) -> str:
    return _URL_RE.sub(" ", text)


@lru_cache(maxsize=None)
def _emoticon_re() -> re.Pattern:
    forms = sorted(ascii_emoticons(), key=len, reverse=True)
    return re.compile(r"(?<!\S)(?:" + "|".join(map(re.escape, forms)) + r")(?!\S)")


def strip_emoticons(text: str) -> str:
    text = _EMOJI_RE.sub(" ", text)
    return _emoticon_re().sub(" ", text)


def strip_platform_tokens(text: str) -> str:
    """Drop a leading retweet marker and the mentions that follow it."""
    if not re.match(r"^\s*RT\b", text):
        return text
    prev = None
    while prev != text:
        prev = text
        text = _LEADING_PLATFORM_RE.sub("", text, count=1)
    return text


def strip_symbols(text: str) -> str:
    return text.replace("@", "").replace("#", "")


def _match_case(source: str, expansion: str) -> str:
    if source.isupper() and len(source) > 1:
        return expansion.upper()
    if source[:1].isupper():
        return expansion[:1].upper() + expansion[1:]
    return expansion


def expand_negations(text: str) -> str:
    table = contraction_table()

    def repl(m: re.Match) -> str:
        key = m.group(0).lower().replace("’", "'")
        return _match_case(m.group(0), table[key])

    return _negation_re().sub(repl, text)


def collapse_whitespace(text: str) -> str:
    return " ".join(text.split())


_PIPELINE = (
    strip_urls,
    strip_emoticons,
    strip_platform_tokens,
    strip_symbols,
    expand_negations,
    collapse_whitespace,
)


def _clean_once(text: str) -> str:
    for rule in _PIPELINE:
        text = rule(text)
    return text


def clean_text(raw: str) -> str:
    """Apply the cleaning rules in order.

    Removing a symbol can expose a new match for an earlier rule (``#RT``
    becomes a leading ``RT``), so the pass is repeated until nothing changes.
    Every rule only deletes characters or expands a contraction, which
    bounds the number of passes.
    """
    text = _clean_once(raw)
    for _ in range(16):
        again = _clean_once(text)
        if again == text:
            return text
        text = again
    return text


# ---------------------------------------------------------------------------
# Images

IMAGE_SIZE = 224
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


def resized_shape(height: int, width: int, size: int = IMAGE_SIZE) -> tuple[int, int]:
    """Aspect-preserving target shape whose shorter side equals ``size``."""
    if height <= width:
        return size, max(size, round(width * size / height))
    return max(size, round(height * size / width)), size


def center_crop_box(height: int, width: int, size: int = IMAGE_SIZE) -> tuple[int, int]:
    """Top-left (row, col) of the centered ``size`` square; ties round down."""
    return (height - size) // 2, (width - size) // 2


def _to_float(image: np.ndarray) -> np.ndarray:
    if image.dtype == np.uint8:
        return image.astype(np.float32) / 255.0
    return image.astype(np.float32, copy=False)


def standardize_image(
    image: np.ndarray,
    mean: tuple[float, float, float] = IMAGENET_MEAN,
    std: tuple[float, float, float] = IMAGENET_STD,
    size: int = IMAGE_SIZE,
) -> np.ndarray:
    """Resize (shorter side to ``size``), center-crop and normalize.

    ``image`` is H x W x 3, either uint8 in [0, 255] or float in [0, 1].
    Returns a float32 array of shape (size, size, 3).
    """
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected an H x W x 3 image, got shape {image.shape}")
    h, w = image.shape[:2]
    if h < 1 or w < 1:
        raise ValueError("image has an empty dimension")
    pixels = _to_float(image)

    th, tw = resized_shape(h, w, size)
    if (th, tw) != (h, w):
        channels = [
            np.asarray(Image.fromarray(np.ascontiguousarray(pixels[:, :, c]), mode="F").resize(
                (tw, th), Image.BILINEAR
            ))
            for c in range(3)
        ]
        pixels = np.stack(channels, axis=-1)

    top, left = center_crop_box(th, tw, size)
    pixels = pixels[top : top + size, left : left + size, :]
    out = (pixels - np.asarray(mean, dtype=np.float32)) / np.asarray(std, dtype=np.float32)
    return out.astype(np.float32)


def load_image(path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"))

import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from mmdisparity.preprocess import (
    CLEANING_RULES,
    IMAGENET_MEAN,
    IMAGENET_STD,
    ascii_emoticons,
    center_crop_box,
    clean_text,
    contraction_table,
    expand_negations,
    resized_shape,
    standardize_image,
    strip_platform_tokens,
    strip_urls,
)

FUZZ_TOKENS = [
    "RT", "rt", "RT:", "@user", "@", "#", "#Houston", "##tag", "http://t.co/abc", "https://x.org/a?b=1",
    "www.example.com", "ftp://f", "a://b", ":)", ":-(", ";)", "<3", ":D", "\U0001F600", "\u2764\ufe0f",
    "\U0001F1FA\U0001F1F8", "can't", "won't", "Can't", "WON'T", "don't", "isn’t", "cannot", "flood", "in",
    "Houston", "'", "’", "t", "n't", "  ", "\t", "\n", "洪水", "बाढ़", "é", "@www.x.com", "#:)", "#RT",
    "RT@a", ":", "-", "😀😀",
]


def fuzz_corpus(n: int = 1000, seed: int = 0) -> list[str]:
    rng = random.Random(seed)
    out = []
    for _ in range(n):
        k = rng.randint(0, 12)
        seps = [rng.choice(["", " ", " ", "  ", "\t"]) for _ in range(k)]
        out.append("".join(s + rng.choice(FUZZ_TOKENS) for s in seps))
    return out


def test_rule_order():
    assert CLEANING_RULES == ("strip-urls", "strip-emoticons", "strip-platform-tokens",
                              "strip-symbols", "expand-negations", "collapse-whitespace")


def test_contraction_table_named_forms():
    table = contraction_table()
    assert table["can't"] == "can not"
    assert table["won't"] == "will not"


def test_negations():
    assert clean_text("can't") == "can not"
    assert clean_text("won't") == "will not"
    assert expand_negations("They WON'T go, Can't stop") == "They WILL NOT go, Can not stop"
    assert clean_text("isn’t") == "is not"


def test_composite_example():
    assert clean_text("RT @user: flood in #Houston http://t.co/abc") == "flood in Houston"


def test_clean_text_is_fixed_point_on_clean_input():
    assert clean_text("flood in Houston") == "flood in Houston"
    assert clean_text("") == ""


def test_urls_are_whole_tokens():
    assert strip_urls("see http://a.b/c?d now").split() == ["see", "now"]
    assert clean_text("go to www.site.org/x today") == "go to today"


def test_emoticons_removed():
    assert clean_text("great :) day \U0001F600 \u2764\ufe0f") == "great day"
    assert ":)" in ascii_emoticons()
    # punctuation inside words is kept
    assert clean_text("ratio 3:1") == "ratio 3:1"


def test_platform_tokens_only_leading():
    assert strip_platform_tokens("RT @a @b: hello @c") == "hello @c"
    assert clean_text("hello RT @c") == "hello RT c"
    assert clean_text("RTE news") == "RTE news"


def test_symbols():
    assert clean_text("#Houston @FEMA") == "Houston FEMA"


def test_idempotence_fuzz_corpus():
    corpus = fuzz_corpus(1000)
    for s in corpus:
        once = clean_text(s)
        assert clean_text(once) == once, repr(s)
        assert "@" not in once and "#" not in once
        assert "http" not in once and "www." not in once
        assert once == once.strip() and "  " not in once


@settings(max_examples=300, deadline=None)
@given(st.text(max_size=80))
def test_idempotence_property(s):
    once = clean_text(s)
    assert clean_text(once) == once


# -- images -----------------------------------------------------------------


@pytest.mark.parametrize("shape,resized,box", [
    ((448, 672), (224, 336), (0, 56)),
    ((224, 224), (224, 224), (0, 0)),
    ((200, 300), (224, 336), (0, 56)),
    ((672, 448), (336, 224), (56, 0)),
    ((225, 225), (224, 224), (0, 0)),
])
def test_geometry(shape, resized, box):
    assert resized_shape(*shape) == resized
    assert center_crop_box(*resized) == box


def test_crop_columns_448x672():
    # crop keeps resized columns 56..279
    top, left = center_crop_box(*resized_shape(448, 672))
    assert (top, left, left + 223) == (0, 56, 279)


def test_odd_crop_takes_lower_offset():
    assert center_crop_box(224, 227) == (0, 1)


def test_identity_geometry_only_normalizes():
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, (224, 224, 3), dtype=np.uint8)
    out = standardize_image(img)
    expected = (img.astype(np.float64) / 255.0 - np.array(IMAGENET_MEAN)) / np.array(IMAGENET_STD)
    np.testing.assert_allclose(out, expected, atol=1e-5)


def _pil_reference(img: np.ndarray, h: int, w: int) -> np.ndarray:
    chans = [np.asarray(Image.fromarray(img[..., c].astype(np.float32) / 255.0, mode="F")
                        .resize((w, h), Image.BILINEAR)) for c in range(3)]
    return np.stack(chans, axis=-1)


@pytest.mark.parametrize("shape", [(448, 672), (200, 300)])
def test_resize_then_crop(shape):
    rng = np.random.default_rng(1)
    img = rng.integers(0, 256, (*shape, 3), dtype=np.uint8)
    resized = _pil_reference(img, 224, 336)
    crop = resized[:, 56:280]
    expected = (crop - np.array(IMAGENET_MEAN)) / np.array(IMAGENET_STD)
    np.testing.assert_allclose(standardize_image(img), expected, atol=1e-5)


def test_cropped_border_is_irrelevant():
    rng = np.random.default_rng(2)
    a = rng.integers(0, 256, (224, 400, 3), dtype=np.uint8)
    b = a.copy()
    left, _ = center_crop_box(224, 400)[1], None
    b[:, : left - 2] = 0
    b[:, left + 224 + 2 :] = 255
    np.testing.assert_array_equal(standardize_image(a), standardize_image(b))


def test_non_rgb_rejected():
    with pytest.raises(ValueError):
        standardize_image(np.zeros((10, 10), dtype=np.uint8))
    with pytest.raises(ValueError):
        standardize_image(np.zeros((10, 10, 4), dtype=np.uint8))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 500), st.integers(1, 500))
def test_output_shape_and_aspect(h, w):
    rh, rw = resized_shape(h, w)
    assert min(rh, rw) == 224
    # long side is within one pixel of the exact aspect-preserving length
    exact_long = max(h, w) * 224 / min(h, w)
    assert abs(max(rh, rw) - exact_long) <= 1.0
    out = standardize_image(np.zeros((h, w, 3), dtype=np.uint8))
    assert out.shape == (224, 224, 3) and out.dtype == np.float32

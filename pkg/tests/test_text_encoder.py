import numpy as np
import pytest
import torch

from mmdisparity.data import EMOTION, Language
from mmdisparity.embeddings import TEXT_DIM
from mmdisparity.text_encoder import (
    REFERENCE_ENCODERS,
    TextEncoderSpec,
    basic_tokens,
    build_backend,
    default_text_config,
    embed_text,
    embed_texts,
    fine_tune_text,
    load_text_model,
    predict_text,
    predict_texts,
    save_text_model,
    text_logits,
)
from mmdisparity.training import argmax_lowest
from mmdisparity.translate import StubTranslator, translate_dataset

from conftest import make_version


@pytest.fixture(scope="module")
def data():
    return make_version(n=(48, 16, 32))


@pytest.fixture(scope="module")
def model(data):
    spec = TextEncoderSpec.default("multilingual", "en")
    return fine_tune_text(spec, data.split("train"), data.split("validation"),
                          default_text_config(0, max_epochs=8), EMOTION)


def test_spec_defaults():
    mono = TextEncoderSpec.default("monolingual", "fr", backend="hf")
    assert mono.encoder_id == f"hf:{REFERENCE_ENCODERS[('monolingual', 'fr')]}"
    assert TextEncoderSpec.default("multilingual", "hi", backend="hf").encoder_id == \
        "hf:distilbert-base-multilingual-cased"
    assert TextEncoderSpec.default("monolingual", "zh").hidden_dim == 768
    assert not mono.supports("es") and TextEncoderSpec.default("multilingual", "en").supports("hi")
    with pytest.raises(ValueError):
        TextEncoderSpec("tiny:x", "bilingual", "en")


def test_basic_tokens():
    assert basic_tokens("Flood, in HOUSTON!") == ["flood", "in", "houston"]
    assert basic_tokens("休斯顿洪水 now") == ["休", "斯", "顿", "洪", "水", "now"]


def test_embedding_dim_and_determinism(model):
    e = embed_text(model, "storm flood")
    assert e.dim == TEXT_DIM == 768 and e.modality == "text"
    np.testing.assert_array_equal(e.values, embed_text(model, "storm flood").values)


def test_one_token_embedding_is_its_state(model):
    packed = model.classifier.backend.tokenize(["storm"], 128)
    with torch.no_grad():
        states, mask = model.classifier.backend(packed)
    assert int(mask.sum()) == 1
    np.testing.assert_allclose(embed_text(model, "storm").values, states[0, 0].numpy(), rtol=1e-6, atol=1e-6)


def test_padding_does_not_change_embedding(model):
    alone = embed_texts(model, ["storm flood"])[0]
    batched = embed_texts(model, ["storm flood", "a much longer text with many more tokens in it"])[0]
    np.testing.assert_allclose(alone, batched, atol=1e-5)


def test_separable_accuracy(model, data):
    test = data.split("test")
    preds = predict_texts(model, [ex.text for ex in test])
    acc = np.mean([p.label == ex.label for p, ex in zip(preds, test)])
    assert acc >= 0.95
    assert model.stopped_epoch <= 8


def test_prediction_scores(model):
    p = predict_text(model, "happy party")
    assert p.scores.shape == (4,) and abs(p.scores.sum() - 1) < 1e-5
    assert p.label == int(np.argmax(p.scores))


def test_logit_scaling_keeps_argmax(model, data):
    logits = text_logits(model, [ex.text for ex in data.split("test")])
    assert torch.equal(argmax_lowest(logits), argmax_lowest(logits * 7.5))


def test_body_is_fine_tuned(model):
    fresh = build_backend(model.spec)
    changed = any(not torch.equal(a, b) for a, b in
                  zip(fresh.state_dict().values(), model.classifier.backend.state_dict().values()))
    assert changed


def test_save_load(model, tmp_path):
    save_text_model(model, tmp_path, {"seed": 0})
    loaded = load_text_model(tmp_path, EMOTION)
    texts = ["storm flood", "angry rage"]
    np.testing.assert_allclose(embed_texts(loaded, texts), embed_texts(model, texts), atol=1e-6)
    assert loaded.stopped_epoch == model.stopped_epoch


def test_language_checks(data):
    es = translate_dataset(data, "es", StubTranslator())
    mono_fr = TextEncoderSpec.default("monolingual", "fr")
    cfg = default_text_config(0, max_epochs=1)
    with pytest.raises(ValueError):
        fine_tune_text(mono_fr, es.split("train"), es.split("validation"), cfg, EMOTION)
    with pytest.raises(ValueError):
        fine_tune_text(TextEncoderSpec.default("multilingual", "en"), data.split("train"), es.split("validation"),
                       cfg, EMOTION)


def test_empty_text_rejected(data):
    from mmdisparity.data import MultimodalExample
    bad = [MultimodalExample("z", "!!!", "z.png", 0, Language.EN, "train")]
    with pytest.raises(ValueError, match="zero tokens"):
        fine_tune_text(TextEncoderSpec.default("multilingual", "en"), bad, data.split("validation"),
                       default_text_config(0, max_epochs=1), EMOTION)

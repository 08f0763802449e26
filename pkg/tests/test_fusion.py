import numpy as np
import pytest
import torch

from mmdisparity.data import EMOTION, TaskSpec
from mmdisparity.embeddings import FUSED_DIM, IMAGE_DIM, TEXT_DIM, Embedding, EmbeddingCache, dataset_key
from mmdisparity.fusion import (
    HIDDEN_WIDTHS,
    FusionNet,
    default_fusion_config,
    expected_parameter_count,
    fuse,
    fuse_matrices,
    load_fusion_model,
    predict_fused,
    predict_fusion,
    predict_fusion_batch,
    save_fusion_model,
    train_fusion,
    train_fusion_on_embeddings,
)
from mmdisparity.image_encoder import default_image_config, file_loader, train_image_head
from mmdisparity.metrics import compute_metrics
from mmdisparity.text_encoder import TextEncoderSpec, default_text_config, fine_tune_text
from mmdisparity.training import FUSION_PATIENCE, state_checksum

from conftest import make_version


def test_fuse_dims_and_order():
    t = Embedding(np.arange(TEXT_DIM, dtype=np.float32), "text")
    i = Embedding(np.arange(IMAGE_DIM, dtype=np.float32) + 1000, "image")
    f = fuse(t, i)
    assert f.dim == FUSED_DIM == 1024 and f.modality == "fused"
    assert f.values[768] == i.values[0]  # component 769 is the first image component
    np.testing.assert_array_equal(f.values[:768], t.values)
    z = fuse(Embedding(np.zeros(768), "text"), Embedding(np.zeros(256), "image"))
    assert not z.values.any() and z.dim == 1024


def test_fuse_validation():
    t = Embedding(np.zeros(768), "text")
    i = Embedding(np.zeros(256), "image")
    with pytest.raises(ValueError):
        fuse(i, t)
    with pytest.raises(ValueError):
        fuse(Embedding(np.zeros(700), "text"), i)
    with pytest.raises(ValueError):
        fuse_matrices(np.zeros((2, 768)), np.zeros((3, 256)))


@pytest.mark.parametrize("classes", [2, 4, 5])
def test_fusion_net_shape_and_parameter_count(classes):
    net = FusionNet(classes)
    assert net.widths == (1024, 512, 128, 32, classes)
    assert HIDDEN_WIDTHS == (512, 128, 32)
    count = sum(p.numel() for p in net.parameters())
    weights = 1024 * 512 + 512 * 128 + 128 * 32 + 32 * classes
    biases = 512 + 128 + 32 + classes
    assert count == expected_parameter_count(classes) == weights + biases


def test_fusion_patience():
    assert default_fusion_config().patience == FUSION_PATIENCE == 5


def _embeddings(seed, n, image_signal, text_signal):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 4
    rng.shuffle(y)
    tp = rng.normal(size=(4, TEXT_DIM))
    ip = rng.normal(size=(4, IMAGE_DIM))
    text = text_signal * tp[y] / np.sqrt(TEXT_DIM) * 4 + rng.normal(size=(n, TEXT_DIM))
    image = image_signal * ip[y] / np.sqrt(IMAGE_DIM) * 4 + rng.normal(size=(n, IMAGE_DIM))
    return text.astype(np.float32), image.astype(np.float32), y


def test_image_dominant_fusion_follows_image():
    text, image, y = _embeddings(0, 600, image_signal=3.0, text_signal=0.0)
    x = fuse_matrices(text, image)
    model = train_fusion_on_embeddings(x[:300], y[:300], x[300:400], y[300:400],
                                       default_fusion_config(0, max_epochs=40), EMOTION, "en", "multilingual")
    fused_pred = np.array([p.label for p in predict_fused(model, x[400:])])
    # image embedding identifies the class: image-only prediction is the nearest class mean
    means = np.stack([image[:300][y[:300] == c].mean(0) for c in range(4)])
    image_pred = ((image[400:, None] - means[None]) ** 2).sum(-1).argmin(1)
    assert (image_pred == y[400:]).mean() >= 0.99
    assert (fused_pred == image_pred).mean() >= 0.95


def test_informative_image_beats_text_only():
    text, image, y = _embeddings(1, 600, image_signal=2.0, text_signal=0.6)
    cfg = default_fusion_config(0, max_epochs=40)
    tr, va = slice(0, 400), slice(400, 600)
    fused = fuse_matrices(text, image)
    mm = train_fusion_on_embeddings(fused[tr], y[tr], fused[va], y[va], cfg, EMOTION, "en", "multilingual")
    # text-only counterpart: same network, image block zeroed out
    blind = fuse_matrices(text, np.zeros_like(image))
    to = train_fusion_on_embeddings(blind[tr], y[tr], blind[va], y[va], cfg, EMOTION, "en", "multilingual")
    f1 = lambda m, x: compute_metrics(y[va].tolist(), [p.label for p in predict_fused(m, x[va])], EMOTION).f1
    assert f1(mm, fused) > f1(to, blind)


def test_tied_logits_and_determinism():
    text, image, y = _embeddings(2, 40, 1.0, 1.0)
    x = fuse_matrices(text, image)
    model = train_fusion_on_embeddings(x[:20], y[:20], x[20:], y[20:], default_fusion_config(0, max_epochs=1),
                                       EMOTION, "en", "multilingual")
    a = predict_fused(model, x[:5])
    b = predict_fused(model, x[:5])
    assert [p.label for p in a] == [p.label for p in b]
    with torch.no_grad():
        last = model.net.layers[-1]
        last.weight.zero_()
        last.bias.zero_()
    assert all(p.label == 0 for p in predict_fused(model, x))


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("fusion")
    version = make_version(n=(24, 8, 8), image_dir=root)
    loader = file_loader(root)
    text_model = fine_tune_text(TextEncoderSpec.default("multilingual", "en"), version.split("train"),
                                version.split("validation"), default_text_config(0, max_epochs=2), EMOTION)
    image_model = train_image_head(version.split("train"), version.split("validation"),
                                   default_image_config(0, max_epochs=2), EMOTION, loader)
    return root, version, loader, text_model, image_model


def test_train_fusion_keeps_unimodal_models_frozen(pipeline):
    root, version, loader, text_model, image_model = pipeline
    sums = state_checksum(text_model.classifier), state_checksum(image_model.net)
    cache = EmbeddingCache(root / "emb")
    model = train_fusion(text_model, image_model, version.split("train"), version.split("validation"),
                         default_fusion_config(0, max_epochs=3), loader, cache, version)
    assert (state_checksum(text_model.classifier), state_checksum(image_model.net)) == sums
    assert cache.has(sums[0], dataset_key(version)) and cache.has(sums[1], dataset_key(version))
    ex = version.split("test")[0]
    assert predict_fusion(model, ex).label == predict_fusion(model, ex).label
    batch = predict_fusion_batch(model, version.split("test"))
    assert len(batch) == 8 and batch[0].scores.shape == (4,)

    save_fusion_model(model, root / "run")
    loaded = load_fusion_model(root / "run", EMOTION)
    assert state_checksum(loaded.net) == state_checksum(model.net)


def test_train_fusion_task_mismatch(pipeline):
    root, version, loader, text_model, image_model = pipeline
    other = TaskSpec("other", ("a", "b", "c", "d"))
    image_model_other = type(image_model)(image_model.backbone_name, image_model.net, other, image_model.config,
                                          0.0, 1, 1)
    with pytest.raises(ValueError, match="task mismatch"):
        train_fusion(text_model, image_model_other, version.split("train"), version.split("validation"),
                     default_fusion_config(0, max_epochs=1), loader)


def test_embedding_cache(tmp_path):
    cache = EmbeddingCache(tmp_path)
    m = np.arange(6, dtype=np.float32).reshape(3, 2)
    cache.put("abc" * 10, "ds", ["a", "b", "c"], m)
    np.testing.assert_array_equal(cache.lookup("abc" * 10, "ds", ["c", "a"]), m[[2, 0]])
    cache.put("abc" * 10, "ds", ["a", "b", "c"], m + 1)  # write-once
    np.testing.assert_array_equal(cache.lookup("abc" * 10, "ds", ["a"]), m[[0]])
    with pytest.raises(ValueError):
        cache.put("zzz" * 10, "ds", ["a"], m)

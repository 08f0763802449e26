import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmdisparity.data import (
    CRISIS,
    EMOTION,
    FAKE_NEWS,
    LANGUAGES,
    REFERENCE_CLASS_PROPORTIONS,
    REFERENCE_SPLIT_SIZES,
    DatasetVersion,
    Language,
    ManifestError,
    MultimodalExample,
    TaskSpec,
    check_parallel,
    class_proportions,
    dumps_manifest,
    get_task,
    load_manifest,
    loads_manifest,
    manifest_path,
    missing_images,
    save_manifest,
)
from mmdisparity.translate import StubTranslator, translate_dataset

from conftest import make_version


def test_task_presets():
    assert CRISIS.num_classes == 5
    assert FAKE_NEWS.classes == ("real", "fake")
    assert FAKE_NEWS.metric_mode == "binary-positive" and FAKE_NEWS.positive_class == 1
    assert EMOTION.classes == ("creepy", "gore", "happy", "rage")
    assert get_task("crisis") is CRISIS
    with pytest.raises(ValueError):
        get_task("sports")


def test_reference_split_sizes():
    assert REFERENCE_SPLIT_SIZES["crisis"] == (5263, 998, 955)
    assert REFERENCE_SPLIT_SIZES["fake-news"] == (9502, 1055, 2687)
    # stored as reported, not re-derived from an 80:10:10 ratio
    assert REFERENCE_SPLIT_SIZES["emotion"] == (2568, 321, 318)


def test_reference_proportions_sum_to_one():
    for task, props in REFERENCE_CLASS_PROPORTIONS.items():
        assert set(props) == set(get_task(task).classes)
        assert sum(props.values()) == pytest.approx(1.0, abs=0.011)


def test_taskspec_validation():
    with pytest.raises(ValueError):
        TaskSpec("x", ("a",))
    with pytest.raises(ValueError):
        TaskSpec("x", ("a", "b"), "binary-positive")
    with pytest.raises(ValueError):
        TaskSpec("x", ("a", "b", "c"), "binary-positive", positive_class=1)
    with pytest.raises(ValueError):
        TaskSpec("x", ("a", "a"))


def test_language_parse():
    assert Language.parse("ES") is Language.ES
    assert Language.parse(Language.HI) is Language.HI
    with pytest.raises(ValueError):
        Language.parse("de")


def test_version_validation_errors():
    ex = MultimodalExample("a", "t", "a.png", 0, Language.EN, "train")
    with pytest.raises(ValueError, match="no examples"):
        DatasetVersion(EMOTION, Language.EN, (), "original")
    with pytest.raises(ValueError, match="duplicate"):
        DatasetVersion(EMOTION, Language.EN, (ex, ex), "original")
    with pytest.raises(ValueError):
        DatasetVersion(EMOTION, Language.EN, (MultimodalExample("a", "t", "a.png", 4, Language.EN, "train"),),
                       "original")
    with pytest.raises(ValueError):
        DatasetVersion(EMOTION, Language.EN, (MultimodalExample("a", "t", "a.png", 0, Language.EN, "dev"),),
                       "original")
    with pytest.raises(ValueError):
        DatasetVersion(EMOTION, Language.ES, (ex,), "original")


def test_split_sizes_and_access():
    v = make_version(n=(8, 4, 3))
    assert v.split_sizes() == {"train": 8, "validation": 4, "test": 3}
    assert len(v.split("test")) == 3
    assert v.by_id()["ex0000"].split == "train"


def test_manifest_round_trip(tmp_path):
    v = make_version(Language.ZH, task=CRISIS)
    v = v.with_texts({ex.id: ex.text + "\t洪水\n\\n" for ex in v.examples}, Language.ZH, "machine-translated")
    path = save_manifest(v, manifest_path(tmp_path, "crisis", "zh"))
    assert path == tmp_path / "crisis" / "zh.tsv"
    assert load_manifest(path) == v


def test_empty_manifest_file(tmp_path):
    path = tmp_path / "empty.tsv"
    path.write_text("")
    with pytest.raises(ValueError, match="no examples"):
        load_manifest(path)


def test_header_only_manifest(tmp_path):
    header = dumps_manifest(make_version()).split("\n")[:7]
    with pytest.raises(ValueError, match="no examples"):
        loads_manifest("\n".join(header) + "\n")


def test_manifest_task_mismatch():
    with pytest.raises(ManifestError):
        loads_manifest(dumps_manifest(make_version()), CRISIS)


def test_missing_images_warn_on_load(tmp_path, caplog):
    v = make_version()
    path = save_manifest(v, tmp_path / "m.tsv")
    with caplog.at_level("WARNING"):
        loaded = load_manifest(path, image_root=tmp_path)
    assert loaded == v
    assert len(missing_images(v, tmp_path)) == len(v.examples)
    assert any("missing" in r.message for r in caplog.records)


def test_class_proportions():
    v = make_version(n=(8, 0, 0))
    assert class_proportions(v.examples, EMOTION) == {c: 0.25 for c in EMOTION.classes}


def test_check_parallel_translation():
    en = make_version()
    es = translate_dataset(en, "es", StubTranslator())
    assert check_parallel([en, es]) == []
    assert check_parallel([en]) == []


def test_check_parallel_dropped_example():
    en = make_version()
    es = translate_dataset(en, "es", StubTranslator())
    dropped = DatasetVersion(es.task, es.language, es.examples[1:], es.provenance)
    assert check_parallel([en, dropped]) == [en.examples[0].id]


def test_check_parallel_label_change():
    en = make_version()
    fr = translate_dataset(en, "fr", StubTranslator())
    first = fr.examples[0]
    changed = MultimodalExample(first.id, first.text, first.image_ref, (first.label + 1) % 4, first.language, first.split)
    fr = DatasetVersion(fr.task, fr.language, (changed, *fr.examples[1:]), fr.provenance)
    assert check_parallel([en, fr]) == [first.id]


def test_check_parallel_mixed_tasks():
    with pytest.raises(ValueError):
        check_parallel([make_version(), make_version(task=CRISIS)])


def test_split_totals_constant_across_languages():
    en = make_version()
    versions = [en] + [translate_dataset(en, l, StubTranslator()) for l in LANGUAGES if l is not Language.EN]
    assert len({sum(v.split_sizes().values()) for v in versions}) == 1


_text = st.text(st.characters(blacklist_categories=("Cs",)), max_size=40)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(_text, st.integers(0, 3), st.sampled_from(["train", "validation", "test"])),
                min_size=1, max_size=15),
       st.sampled_from(list(LANGUAGES)))
def test_manifest_round_trip_property(rows, language):
    examples = tuple(MultimodalExample(f"id{i}", t, f"img/{i}.jpg", y, language, s)
                     for i, (t, y, s) in enumerate(rows))
    v = DatasetVersion(EMOTION, language, examples, "original" if language is Language.EN else "human-translated")
    assert loads_manifest(dumps_manifest(v)) == v

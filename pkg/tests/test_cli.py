import json
import subprocess
import sys

import yaml

from mmdisparity.cli import build_parser, main
from mmdisparity.data import load_manifest, manifest_path, save_manifest

from conftest import make_version

VERBS = ("prepare", "translate", "train-text", "train-image", "train-fusion", "evaluate", "report", "synth", "run")


def test_all_verbs_registered():
    parser = build_parser()
    sub = next(a for a in parser._actions if a.dest == "command")
    assert set(VERBS) <= set(sub.choices)


def test_prepare_clean(tmp_path, capsys):
    v = make_version(n=(4, 2, 2), image_dir=tmp_path)
    v = v.with_texts({ex.id: f"RT @x: #storm can't {i} http://t.co/z" for i, ex in enumerate(v.examples)},
                     v.language, v.provenance)
    src = save_manifest(v, tmp_path / "raw.tsv")
    assert main(["prepare", str(src), "--clean", "--out", str(tmp_path / "clean.tsv")]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["missing_images"] == 0 and summary["split_sizes"] == {"train": 4, "validation": 2, "test": 2}
    cleaned = load_manifest(tmp_path / "clean.tsv")
    assert cleaned.examples[0].text == "storm can not 0"


def test_unimodal_fusion_evaluate_chain(tmp_path, capsys):
    v = make_version(n=(12, 4, 4), image_dir=tmp_path)
    src = save_manifest(v, tmp_path / "emotion" / "en.tsv")
    args = ["--image-root", str(tmp_path)]
    assert main(["translate", str(src), "--target", "es", "--out-dir", str(tmp_path)]) == 0
    es = manifest_path(tmp_path, "emotion", "es")
    assert es.exists()
    assert main(["train-text", str(es), "--out", str(tmp_path / "t"), "--max-epochs", "1"]) == 0
    assert main(["train-image", str(src), "--out", str(tmp_path / "i"), "--max-epochs", "1", *args]) == 0
    assert main(["train-fusion", str(es), "--out", str(tmp_path / "f"), "--text-run", str(tmp_path / "t"),
                 "--image-run", str(tmp_path / "i"), "--max-epochs", "1", *args]) == 0
    capsys.readouterr()
    assert main(["evaluate", str(tmp_path / "f"), str(es), *args]) == 0
    report = json.loads(capsys.readouterr().out)
    assert 0.0 <= report["f1"] <= 1.0 and report["metric_mode"] == "macro"


def test_synth_run_report(tmp_path, capsys):
    cfg = tmp_path / "synth.yaml"
    cfg.write_text(yaml.safe_dump({"seed": 1, "n_per_split": {"train": 10, "validation": 5, "test": 5}}))
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "bench")]) == 0
    assert (tmp_path / "bench" / "synth" / "hi.tsv").exists()

    exp = tmp_path / "exp.yaml"
    exp.write_text(yaml.safe_dump({
        "task": "synth", "output_dir": "out", "mode": "synthetic", "seeds": [0], "families": ["monolingual"],
        "modalities": ["text"], "training": {"max_epochs": 3},
        "synth": {"n_per_split": {"train": 30, "validation": 10, "test": 30}},
    }))
    assert main(["run", str(exp)]) == 0
    assert "trained 6 cells" in capsys.readouterr().out
    assert main(["run", str(exp)]) == 0
    assert "trained 0 cells" in capsys.readouterr().out
    assert main(["report", str(tmp_path / "out"), "--out", str(tmp_path / "rep")]) == 0
    assert (tmp_path / "rep" / "disparity.tsv").exists()


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "mmdisparity.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for verb in VERBS:
        assert verb in out.stdout

"""Command-line entry point."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

from .data import NON_ENGLISH, Language, class_proportions, load_manifest, manifest_path, missing_images, save_manifest
from .experiment import ExperimentManifest, load_ledger, run_experiment
from .fusion import (
    default_fusion_config,
    fuse_matrices,
    load_fusion_model,
    predict_fused,
    save_fusion_model,
    train_fusion,
    unimodal_embeddings,
)
from .image_encoder import (
    default_image_config,
    file_loader,
    load_image_model,
    predict_examples,
    save_image_model,
    train_image_head,
)
from .metrics import compute_metrics
from .preprocess import clean_text
from .report import emit_report
from .synth import SynthConfig, generate_synthetic, write_synthetic
from .text_encoder import (
    TextEncoderSpec,
    default_text_config,
    fine_tune_text,
    load_text_model,
    predict_texts,
    save_text_model,
)
from .training import load_metadata
from .translate import HttpTranslator, StubTranslator, TranslationCache, translate_dataset

logger = logging.getLogger("mmdisparity")


def _overrides(args) -> dict:
    out = {}
    if getattr(args, "max_epochs", None):
        out["max_epochs"] = args.max_epochs
    if getattr(args, "batch_size", None):
        out["batch_size"] = args.batch_size
    return out


def _image_root(args, manifest: str) -> Path:
    return Path(args.image_root) if args.image_root else Path(manifest).parent


def cmd_prepare(args) -> int:
    version = load_manifest(args.manifest, image_root=_image_root(args, args.manifest))
    if args.clean:
        version = version.with_texts({ex.id: clean_text(ex.text) for ex in version.examples},
                                     version.language, version.provenance)
    missing = missing_images(version, _image_root(args, args.manifest))
    summary = {
        "task": version.task.name,
        "language": version.language.value,
        "split_sizes": version.split_sizes(),
        "class_proportions": {k: round(v, 4) for k, v in class_proportions(version.examples, version.task).items()},
        "missing_images": len(missing),
    }
    if args.out:
        save_manifest(version, args.out)
    print(json.dumps(summary, indent=2))
    return 0


def cmd_translate(args) -> int:
    src = load_manifest(args.manifest)
    client = (HttpTranslator(args.endpoint, args.model_id) if args.endpoint else StubTranslator())
    cache = TranslationCache(args.cache) if args.cache else None
    targets = [Language.parse(t) for t in args.target] if args.target else list(NON_ENGLISH)
    out_dir = Path(args.out_dir)
    for target in targets:
        version = translate_dataset(src, target, client, cache, retries=args.retries, workers=args.workers)
        path = save_manifest(version, manifest_path(out_dir, src.task.name, target))
        print(f"{target.value}\t{path}")
    return 0


def cmd_train_text(args) -> int:
    version = load_manifest(args.manifest)
    spec = TextEncoderSpec.default(args.family, version.language, args.backend)
    cfg = default_text_config(args.seed, **_overrides(args))
    model = fine_tune_text(spec, version.split("train"), version.split("validation"), cfg, version.task)
    save_text_model(model, args.out, {"seed": args.seed, "manifest": str(args.manifest)})
    print(f"best_epoch={model.best_epoch} stopped_epoch={model.stopped_epoch} val_loss={model.best_val_loss:.4f}")
    return 0


def cmd_train_image(args) -> int:
    version = load_manifest(args.manifest)
    cfg = default_image_config(args.seed, **_overrides(args))
    model = train_image_head(version.split("train"), version.split("validation"), cfg, version.task,
                             file_loader(_image_root(args, args.manifest)), args.backbone)
    save_image_model(model, args.out, {"seed": args.seed, "manifest": str(args.manifest)})
    print(f"best_epoch={model.best_epoch} stopped_epoch={model.stopped_epoch} val_loss={model.best_val_loss:.4f}")
    return 0


def cmd_train_fusion(args) -> int:
    version = load_manifest(args.manifest)
    text_model = load_text_model(args.text_run, version.task)
    image_model = load_image_model(args.image_run, version.task)
    cfg = default_fusion_config(args.seed, **_overrides(args))
    model = train_fusion(text_model, image_model, version.split("train"), version.split("validation"), cfg,
                         file_loader(_image_root(args, args.manifest)))
    save_fusion_model(model, args.out, {"seed": args.seed, "manifest": str(args.manifest),
                                        "text_run": str(args.text_run), "image_run": str(args.image_run)})
    print(f"best_epoch={model.best_epoch} stopped_epoch={model.stopped_epoch} val_loss={model.best_val_loss:.4f}")
    return 0


def cmd_evaluate(args) -> int:
    version = load_manifest(args.manifest)
    examples = version.split(args.split)
    gold = [ex.label for ex in examples]
    meta = load_metadata(args.run)
    loader = file_loader(_image_root(args, args.manifest))
    kind = meta["kind"]
    if kind == "text":
        preds = [p.label for p in predict_texts(load_text_model(args.run, version.task), [ex.text for ex in examples])]
    elif kind == "image":
        preds = [p.label for p in predict_examples(load_image_model(args.run, version.task), examples, loader)]
    elif kind == "fusion":
        model = load_fusion_model(args.run, version.task)
        text_model = load_text_model(meta["text_run"], version.task)
        image_model = load_image_model(meta["image_run"], version.task)
        t, i = unimodal_embeddings(text_model, image_model, examples, loader)
        preds = [p.label for p in predict_fused(model, fuse_matrices(t, i))]
    else:
        raise SystemExit(f"cannot evaluate a run of kind {kind!r}")
    report = compute_metrics(gold, preds, version.task)
    print(json.dumps(report.as_dict(), indent=2, sort_keys=True))
    return 0


def cmd_report(args) -> int:
    out = Path(args.out) if args.out else Path(args.run_root) / "report"
    written = emit_report(load_ledger(args.run_root), out, figures=not args.no_figures)
    for name in sorted(written):
        print(written[name])
    return 0


def cmd_synth(args) -> int:
    raw = yaml.safe_load(Path(args.config).read_text(encoding="utf-8")) or {}
    cfg = SynthConfig(**raw)
    written = write_synthetic(generate_synthetic(cfg), args.out)
    (Path(args.out) / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    for lang, path in written.items():
        print(f"{lang}\t{path}")
    return 0


def cmd_run(args) -> int:
    manifest = ExperimentManifest.load(args.manifest)
    ledger = run_experiment(manifest, force=args.force, only=args.only)
    cells = ledger.cells
    failed = sorted(k for k, v in cells.items() if v["status"] != "done")
    print(f"trained {ledger.trained} cells; {len(cells) - len(failed)} done, {len(failed)} failed")
    for key in failed:
        print(f"FAILED {key}: {cells[key].get('error')}")
    if any(v["status"] == "done" for v in cells.values()):
        emit_report(cells, manifest.output_dir / "report")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmdisparity", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="validate a dataset manifest, optionally cleaning its texts")
    p.add_argument("manifest")
    p.add_argument("--clean", action="store_true")
    p.add_argument("--out", help="write the (cleaned) manifest here")
    p.add_argument("--image-root")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("translate", help="machine-translate an English manifest")
    p.add_argument("manifest")
    p.add_argument("--target", action="append", help="target language (repeatable; default all non-English)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--endpoint", help="translation endpoint URL (default: offline stub)")
    p.add_argument("--model-id", default="remote")
    p.add_argument("--cache")
    p.add_argument("--retries", type=int, default=3)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_translate)

    for name, func in (("train-text", cmd_train_text), ("train-image", cmd_train_image),
                       ("train-fusion", cmd_train_fusion)):
        p = sub.add_parser(name)
        p.add_argument("manifest")
        p.add_argument("--out", required=True, help="run directory")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--max-epochs", type=int)
        p.add_argument("--batch-size", type=int)
        p.set_defaults(func=func)
        if name == "train-text":
            p.add_argument("--family", choices=("monolingual", "multilingual"), default="multilingual")
            p.add_argument("--backend", choices=("tiny", "hf"), default="tiny")
        else:
            p.add_argument("--image-root")
        if name == "train-image":
            p.add_argument("--backbone", default="tiny")
        if name == "train-fusion":
            p.add_argument("--text-run", required=True)
            p.add_argument("--image-run", required=True)

    p = sub.add_parser("evaluate", help="score a trained run on a manifest split")
    p.add_argument("run")
    p.add_argument("manifest")
    p.add_argument("--split", default="test")
    p.add_argument("--image-root")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="tables and figures from an experiment directory")
    p.add_argument("run_root")
    p.add_argument("--out")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("synth", help="write a synthetic benchmark")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run", help="run an experiment manifest")
    p.add_argument("manifest")
    p.add_argument("--force", action="store_true")
    p.add_argument("--only", help="glob over cell keys, e.g. 'crisis/*/en/text/*'")
    p.set_defaults(func=cmd_run)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

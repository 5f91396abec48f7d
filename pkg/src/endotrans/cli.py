"""Command-line front end.

Subcommands cover the pipeline stages end to end::

    ingest       validate the configured manifests and print pool summaries
    gan-train    train the translation model on the two real pools
    translate    materialize a fake dataset from a trained model
    clf-train    train a single classifier on one real pool
    experiment   run cross-validated experiment blocks (and write the report)
    report       rebuild the report from cached artifacts, training nothing

Exit codes: 0 success, 2 invalid configuration or inputs, 3 missing
dependency (files that should exist), 4 numerical failure during training.
Commands that write into ``--out`` take a lock file there, so concurrent
invocations on the same directory serialize instead of clobbering each
other.  Completed artifacts are stamped with a config hash and skipped on
re-runs.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from filelock import FileLock

from . import __version__
from .classifiers import ARCHITECTURES, save_classifier, train_classifier
from .config import EXPERIMENT_IDS, RunConfig, load_config
from .data import load_manifest, save_dataset
from .errors import DependencyError, NumericalError, ValidationError
from .experiments import ExperimentRunner, load_results
from .report import write_report
from .translation import (
    DIRECTIONS,
    SOURCE_DOMAIN,
    TranslationModelBundle,
    train_translation,
)
from .util import stable_hash

log = logging.getLogger(__name__)


def _load_reals(config: RunConfig) -> dict:
    paths = config.paths
    if not paths.wli_manifest or not paths.nbi_manifest:
        raise ValidationError("config paths section must set wli_manifest and nbi_manifest")
    reals = {
        "WLI": load_manifest(paths.wli_manifest, expected_size=paths.patch_size),
        "NBI": load_manifest(paths.nbi_manifest, expected_size=paths.patch_size),
    }
    for dom, ds in reals.items():
        if ds.domain != dom:
            raise ValidationError(
                f"manifest configured for {dom} actually contains domain {ds.domain!r}"
            )
    return reals


def _locked(out_dir: Path) -> FileLock:
    out_dir.mkdir(parents=True, exist_ok=True)
    return FileLock(out_dir / ".lock")


def _stamp_matches(stamp: Path, expected_hash: str) -> bool:
    if not stamp.exists():
        return False
    try:
        return json.loads(stamp.read_text(encoding="utf-8")).get("hash") == expected_hash
    except (json.JSONDecodeError, OSError):
        return False


def _write_stamp(stamp: Path, expected_hash: str, **extra) -> None:
    stamp.write_text(json.dumps({"hash": expected_hash, **extra}, sort_keys=True), encoding="utf-8")


# ------------------------------------------------------------------ commands


def cmd_ingest(args) -> int:
    config = load_config(args.config)
    reals = _load_reals(config)
    for ds in reals.values():
        print(ds.summary())
        print(f"  patients: {len(ds.patients)}")
    print("manifests OK")
    return 0


def cmd_gan_train(args) -> int:
    config = load_config(args.config)
    gan_cfg = config.require_gan()
    if args.seed is not None:
        gan_cfg = dataclasses.replace(gan_cfg, seed=args.seed)
    reals = _load_reals(config)
    out_dir = Path(args.out)
    with _locked(out_dir):
        expected = stable_hash(
            {
                "gan": gan_cfg.to_dict(),
                "weights": dataclasses.asdict(config.weights),
                "sources": {d: sorted(p.source_id for p in ds) for d, ds in reals.items()},
            }
        )
        bundle_path = out_dir / "bundle.ckpt"
        if bundle_path.exists():
            bundle = TranslationModelBundle.load(bundle_path)
            if bundle.config_hash == expected:
                print(f"{bundle_path} is up to date (epoch {bundle.epoch}); nothing to do")
                return 0
            log.info("existing checkpoint is stale; retraining")
        bundle = train_translation(
            gan_cfg, reals["WLI"], reals["NBI"], weights=config.weights, out_dir=out_dir
        )
        bundle.config_hash = expected
        bundle.save(bundle_path)
        print(f"trained {gan_cfg.epochs} epochs -> {bundle_path}")
    return 0


def cmd_translate(args) -> int:
    from .translation import translate_dataset

    config = load_config(args.config)
    bundle_path = Path(args.bundle) if args.bundle else Path(args.out) / "bundle.ckpt"
    if not bundle_path.exists():
        raise DependencyError(f"translation checkpoint not found: {bundle_path}")
    bundle = TranslationModelBundle.load(bundle_path)
    reals = _load_reals(config)
    source = reals[SOURCE_DOMAIN[args.direction]]
    out_dir = Path(args.out)
    with _locked(out_dir):
        fake = translate_dataset(bundle, source, args.direction)
        target_dir = out_dir / f"fake_{fake.domain}"
        expected = stable_hash(
            {"bundle": bundle.config_hash, "direction": args.direction,
             "sources": sorted(p.source_id for p in source)}
        )
        stamp = target_dir / "done.json"
        if _stamp_matches(stamp, expected):
            print(f"{target_dir} is up to date; nothing to do")
            return 0
        manifest = save_dataset(fake, target_dir)
        _write_stamp(stamp, expected, count=len(fake))
        print(f"wrote {len(fake)} translated patches -> {manifest}")
    return 0


def cmd_clf_train(args) -> int:
    config = load_config(args.config)
    reals = _load_reals(config)
    train_set = reals[args.train_domain]
    arch = args.arch
    if arch == "all":
        raise ValidationError("clf-train trains one architecture; pass --arch explicitly")
    clf_config = config.clf_config_for(arch)
    if args.seed is not None:
        clf_config = dataclasses.replace(clf_config, seed=args.seed)
    spec = config.spec_for(arch)
    out_dir = Path(args.out)
    with _locked(out_dir):
        expected = stable_hash(
            {
                "clf": dataclasses.asdict(clf_config),
                "spec": dataclasses.asdict(spec),
                "sources": sorted(p.source_id for p in train_set),
            }
        )
        ckpt = out_dir / f"{arch}.ckpt"
        stamp = out_dir / f"{arch}.done.json"
        if ckpt.exists() and _stamp_matches(stamp, expected):
            print(f"{ckpt} is up to date; nothing to do")
            return 0
        model, history = train_classifier(clf_config, spec, train_set)
        save_classifier(model, ckpt, meta_extra={"config_hash": expected})
        curve = out_dir / f"{arch}_loss.csv"
        with curve.open("w", encoding="utf-8") as fh:
            fh.write("iteration,loss,lr\n")
            for it, value, lr in history.loss_curve:
                fh.write(f"{it},{value:.6f},{lr:.8g}\n")
        _write_stamp(stamp, expected)
        print(f"trained {arch} for {clf_config.iterations} iterations -> {ckpt}")
    return 0


def _experiment_selection(args, config: RunConfig):
    exp = config.require_experiment()
    ids = tuple(args.experiment) if args.experiment else None
    if args.arch and args.arch != "all":
        archs: tuple[str, ...] | None = (args.arch,)
    else:
        archs = None
    return exp, ids, archs


def cmd_experiment(args) -> int:
    config = load_config(args.config)
    exp, ids, archs = _experiment_selection(args, config)
    if args.seed is not None:
        exp = dataclasses.replace(exp, seed=args.seed)
    if args.per_fold_gan:
        exp = dataclasses.replace(exp, per_fold_gan=True)
    config.experiment = exp
    reals = _load_reals(config)
    out_dir = Path(args.out)
    with _locked(out_dir):
        runner = ExperimentRunner(config, reals, out_dir)
        results = runner.run(experiment_ids=ids, architectures=archs)
        report = write_report(results, out_dir)
    print(f"ran {len(results.cells)} cells over {results.k} folds -> {out_dir / 'report.txt'}")
    if report["incomplete"]:
        print("warning: report is incomplete")
    return 0


def cmd_report(args) -> int:
    config = load_config(args.config)
    exp, ids, archs = _experiment_selection(args, config)
    if args.seed is not None:
        config.experiment = dataclasses.replace(exp, seed=args.seed)
    if args.per_fold_gan:
        config.experiment = dataclasses.replace(config.experiment, per_fold_gan=True)
    reals = _load_reals(config)
    out_dir = Path(args.out)
    if not out_dir.exists():
        raise DependencyError(f"output directory not found: {out_dir}")
    with _locked(out_dir):
        results = load_results(config, reals, out_dir, experiment_ids=ids, architectures=archs)
        if not results.cells:
            raise DependencyError(f"no completed cells found under {out_dir}; run `experiment` first")
        report = write_report(results, out_dir)
    print((out_dir / "report.txt").read_text(encoding="utf-8"))
    if report["incomplete"]:
        print("warning: report is incomplete")
    return 0


# --------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="endotrans",
        description="domain translation and classifier evaluation for endoscopic imagery",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-q", "--quiet", action="store_true", help="only warnings and errors")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", required=True, help="YAML run configuration")
        if out_required:
            p.add_argument("--out", required=True, help="artifact directory")

    p = sub.add_parser("ingest", help="validate manifests and print pool summaries")
    common(p, out_required=False)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("gan-train", help="train the translation model")
    common(p)
    p.add_argument("--seed", type=int, default=None, help="override the configured seed")
    p.set_defaults(func=cmd_gan_train)

    p = sub.add_parser("translate", help="write a translated (fake) dataset")
    common(p)
    p.add_argument("--direction", choices=DIRECTIONS, required=True)
    p.add_argument("--bundle", default=None, help="checkpoint path (default: OUT/bundle.ckpt)")
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("clf-train", help="train one classifier on a real pool")
    common(p)
    p.add_argument("--arch", choices=(*ARCHITECTURES, "all"), required=True)
    p.add_argument("--train-domain", choices=("WLI", "NBI"), default="WLI")
    p.add_argument("--seed", type=int, default=None, help="override the configured seed")
    p.set_defaults(func=cmd_clf_train)

    for name, func in (("experiment", cmd_experiment), ("report", cmd_report)):
        p = sub.add_parser(
            name,
            help="run experiment blocks" if name == "experiment" else "render report from cache",
        )
        common(p)
        p.add_argument(
            "--experiment", action="append", choices=EXPERIMENT_IDS, default=None,
            help="restrict to one block (repeatable); default: all configured",
        )
        p.add_argument("--arch", choices=(*ARCHITECTURES, "all"), default="all")
        p.add_argument("--per-fold-gan", action="store_true",
                       help="train a separate translation model per fold")
        p.add_argument("--seed", type=int, default=None, help="override the experiment seed")
        p.set_defaults(func=func)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DependencyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.snapshot:
            print(f"  state: {exc.snapshot}", file=sys.stderr)
        return 4


def entrypoint() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()

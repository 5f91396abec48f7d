"""The five evaluation protocols over patient-grouped cross-validation.

Each experiment is a block of rows; a row names which domains are pooled for
training and which single domain is used for testing.  ``WLI_f`` / ``NBI_f``
are the translated (fake) variants: ``NBI_f`` is WLI data mapped through the
forward generator, ``WLI_f`` is NBI data mapped back.

  E1   baseline on each real domain separately
  E2a  NBI testing: real-only vs +WLI reals vs +NBI_f fakes in training
  E2b  WLI testing: real-only vs +NBI reals vs +WLI_f fakes in training
  E3a  WLI-side transfer: real/augmented training vs testing on NBI_f
  E3b  NBI-side transfer: real/augmented training vs testing on WLI_f

Patients are dealt into folds once, over the union of both domains, and a
fake patch always follows its source patient.  A train/test patient overlap
anywhere is a hard error, never a warning.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass
from pathlib import Path

from .classifiers import (
    PredictionRecord,
    evaluate,
    read_prediction_records,
    train_classifier,
    write_prediction_records,
)
from .config import RunConfig
from .data import DOMAINS, DomainDataset, concat_datasets
from .errors import LeakageError, ValidationError
from .folds import PatientFoldPlan, assign_folds
from .translation import TranslationModelBundle, train_translation, translate_dataset
from .util import derive_seed, stable_hash

log = logging.getLogger(__name__)

#: Ordered train-domain pools and the test domain for every experiment row.
#: The first row of each block is its baseline for significance marking.
EXPERIMENT_TABLE: dict[str, tuple[tuple[tuple[str, ...], str], ...]] = {
    "E1": (
        (("WLI",), "WLI"),
        (("NBI",), "NBI"),
    ),
    "E2a": (
        (("NBI",), "NBI"),
        (("NBI", "WLI"), "NBI"),
        (("NBI", "NBI_f"), "NBI"),
    ),
    "E2b": (
        (("WLI",), "WLI"),
        (("NBI", "WLI"), "WLI"),
        (("WLI_f", "WLI"), "WLI"),
    ),
    "E3a": (
        (("WLI",), "WLI"),
        (("WLI_f", "WLI"), "WLI"),
        (("NBI_f",), "NBI_f"),
        (("NBI", "NBI_f"), "NBI_f"),
    ),
    "E3b": (
        (("NBI",), "NBI"),
        (("NBI", "NBI_f"), "NBI"),
        (("WLI_f",), "WLI_f"),
        (("WLI", "WLI_f"), "WLI_f"),
    ),
}


@dataclass(frozen=True)
class ExperimentRow:
    train_domains: tuple[str, ...]
    test_domain: str

    def __post_init__(self):
        for d in self.train_domains + (self.test_domain,):
            if d not in DOMAINS:
                raise ValidationError(f"unknown domain {d!r} in experiment row")
        if not self.train_domains:
            raise ValidationError("experiment row needs at least one training domain")

    @property
    def train_label(self) -> str:
        return "+".join(self.train_domains)

    @property
    def uses_fakes(self) -> bool:
        return any(d.endswith("_f") for d in self.train_domains + (self.test_domain,))


@dataclass(frozen=True)
class ExperimentPlan:
    experiment_id: str
    rows: tuple[ExperimentRow, ...]
    baseline_index: int = 0


def build_experiment_plan(experiment_id: str) -> ExperimentPlan:
    try:
        table = EXPERIMENT_TABLE[experiment_id]
    except KeyError:
        raise ValidationError(
            f"unknown experiment id {experiment_id!r}; expected one of {tuple(EXPERIMENT_TABLE)}"
        ) from None
    rows = tuple(ExperimentRow(train_domains=t, test_domain=d) for t, d in table)
    return ExperimentPlan(experiment_id=experiment_id, rows=rows)


@dataclass
class CellSeries:
    """Per-fold accuracies and pooled prediction records for one table cell."""

    experiment_id: str
    row_index: int
    row: ExperimentRow
    arch: str
    fold_accuracies: tuple[float, ...]
    records: tuple[PredictionRecord, ...]

    @property
    def pooled_accuracy(self) -> float:
        return sum(r.correct for r in self.records) / len(self.records)


@dataclass
class RunResults:
    plans: dict
    cells: dict  # (experiment_id, row_index, arch) -> CellSeries
    k: int
    architectures: tuple[str, ...]
    config_hash: str

    def cell(self, experiment_id: str, row_index: int, arch: str) -> CellSeries | None:
        return self.cells.get((experiment_id, row_index, arch))


def _restrict(dataset: DomainDataset, patients: frozenset[str]) -> DomainDataset:
    return dataset.filter(lambda p: p.patient_id in patients)


def assert_patient_disjoint(train_set: DomainDataset, test_set: DomainDataset, context: str = "") -> None:
    """Hard guard: any patient appearing on both sides of a split is an error."""
    overlap = train_set.patients & test_set.patients
    if overlap:
        where = f"{context}: " if context else ""
        raise LeakageError(
            f"{where}patients {sorted(overlap)[:3]} appear in both train and test splits"
        )


class ExperimentRunner:
    """Drives fold planning, translation, per-cell training, and caching.

    Artifacts land under ``out_dir``: ``gan/`` holds translation checkpoints,
    ``cells/<exp>/<row>/<arch>/fold<k>/`` holds per-cell prediction records
    plus a ``done.json`` stamp whose hash gates reuse, and ``jobs.jsonl`` is
    an append-only ledger of what was trained versus served from cache.
    """

    def __init__(self, config: RunConfig, real: dict[str, DomainDataset], out_dir: str | Path):
        for dom in ("WLI", "NBI"):
            if dom not in real:
                raise ValidationError(f"runner needs a real {dom} dataset")
            if len(real[dom]) == 0:
                raise ValidationError(f"real {dom} dataset is empty")
            if real[dom].domain != dom:
                raise ValidationError(f"dataset passed as {dom} has domain {real[dom].domain!r}")
        self.config = config
        self.exp = config.require_experiment()
        self.real = {"WLI": real["WLI"], "NBI": real["NBI"]}
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.fold_plan: PatientFoldPlan = assign_folds(
            [self.real["WLI"], self.real["NBI"]], k=self.exp.k_folds, seed=self.exp.seed
        )
        self.data_fingerprint = stable_hash(
            {dom: sorted(p.source_id for p in ds) for dom, ds in self.real.items()}
        )
        self._shared_fakes: dict[str, DomainDataset] | None = None
        self._shared_bundle: TranslationModelBundle | None = None

    # ---------------------------------------------------------------- jobs

    def _log_job(self, **entry) -> None:
        with (self.out_dir / "jobs.jsonl").open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")

    # ----------------------------------------------------------------- GAN

    def _gan_config(self, fold: int | None):
        cfg = self.config.require_gan()
        if fold is None:
            return cfg
        return dataclasses.replace(cfg, seed=derive_seed(cfg.seed, "gan-fold", fold))

    def _gan_hash(self, fold: int | None, train_sets: dict[str, DomainDataset]) -> str:
        return stable_hash(
            {
                "gan": self._gan_config(fold).to_dict(),
                "weights": dataclasses.asdict(self.config.weights),
                "fold": fold,
                "sources": {d: sorted(p.source_id for p in ds) for d, ds in train_sets.items()},
            }
        )

    def gan_bundle(self, fold: int | None = None) -> TranslationModelBundle:
        """Translation model for a fold (trained on that fold's train split),
        or the shared model trained on everything when ``fold`` is None."""
        if fold is None and self._shared_bundle is not None:
            return self._shared_bundle
        if fold is None:
            train_sets = self.real
            path = self.out_dir / "gan" / "shared.ckpt"
        else:
            keep = frozenset(
                pid for pid, f in self.fold_plan.assignment.items() if f != fold
            )
            train_sets = {d: _restrict(ds, keep) for d, ds in self.real.items()}
            path = self.out_dir / "gan" / f"fold{fold}.ckpt"
        expected = self._gan_hash(fold, train_sets)
        if path.exists():
            bundle = TranslationModelBundle.load(path)
            if bundle.config_hash == expected:
                self._log_job(kind="gan", fold=fold, status="cached", hash=expected)
                if fold is None:
                    self._shared_bundle = bundle
                return bundle
            log.info("stale translation checkpoint at %s; retraining", path)
        cfg = self._gan_config(fold)
        log.info(
            "training translation model (%s): %s | %s",
            "shared" if fold is None else f"fold {fold}",
            train_sets["WLI"].summary(),
            train_sets["NBI"].summary(),
        )
        bundle = train_translation(
            cfg, train_sets["WLI"], train_sets["NBI"], weights=self.config.weights,
            out_dir=path.parent / (path.stem + "_logs"),
        )
        bundle.config_hash = expected
        bundle.save(path)
        self._log_job(kind="gan", fold=fold, status="trained", hash=expected)
        if fold is None:
            self._shared_bundle = bundle
        return bundle

    def fakes(self, fold: int | None = None) -> dict[str, DomainDataset]:
        """Translate both full real pools through the (shared or fold) model."""
        if fold is None and self._shared_fakes is not None:
            return self._shared_fakes
        bundle = self.gan_bundle(fold)
        out = {
            "NBI_f": translate_dataset(bundle, self.real["WLI"], "x_to_y"),
            "WLI_f": translate_dataset(bundle, self.real["NBI"], "y_to_x"),
        }
        if fold is None:
            self._shared_fakes = out
        return out

    # --------------------------------------------------------------- cells

    def _cell_seed(self, experiment_id: str, row: ExperimentRow, arch: str, fold: int) -> int:
        return derive_seed(
            self.exp.seed, experiment_id, row.train_label, row.test_domain, arch, fold
        )

    def _cell_hash(self, experiment_id: str, row: ExperimentRow, arch: str, fold: int, gan_hash: str | None) -> str:
        clf = dataclasses.replace(
            self.config.clf_config_for(arch), seed=self._cell_seed(experiment_id, row, arch, fold)
        )
        return stable_hash(
            {
                "experiment": experiment_id,
                "row": [list(row.train_domains), row.test_domain],
                "arch": arch,
                "fold": fold,
                "k": self.exp.k_folds,
                "cv_seed": self.exp.seed,
                "clf": dataclasses.asdict(clf),
                "spec": dataclasses.asdict(self.config.spec_for(arch)),
                "gan": gan_hash,
                "data": self.data_fingerprint,
            }
        )

    def cell_dir(self, experiment_id: str, row_index: int, row: ExperimentRow, arch: str, fold: int) -> Path:
        return (
            self.out_dir
            / "cells"
            / experiment_id
            / f"row{row_index}_{row.train_label}_on_{row.test_domain}"
            / arch
            / f"fold{fold}"
        )

    def _run_cell(
        self,
        experiment_id: str,
        row_index: int,
        row: ExperimentRow,
        arch: str,
        fold: int,
        pools: dict[str, DomainDataset],
        gan_hash: str | None,
    ) -> tuple[float, tuple[PredictionRecord, ...]]:
        test_patients = self.fold_plan.patients_in_fold(fold)
        train_patients = frozenset(self.fold_plan.assignment) - test_patients

        train_set = concat_datasets(
            [_restrict(pools[d], train_patients) for d in row.train_domains]
        )
        test_set = _restrict(pools[row.test_domain], test_patients)
        if len(train_set) == 0:
            raise ValidationError(
                f"{experiment_id} {row.train_label}: empty training pool in fold {fold}"
            )
        if len(test_set) == 0:
            raise ValidationError(
                f"{experiment_id} test domain {row.test_domain}: no test patches in fold {fold}"
            )
        assert_patient_disjoint(train_set, test_set, context=f"{experiment_id} fold {fold}")

        cell_hash = self._cell_hash(experiment_id, row, arch, fold, gan_hash)
        cell_dir = self.cell_dir(experiment_id, row_index, row, arch, fold)
        stamp = cell_dir / "done.json"
        records_path = cell_dir / "records.csv"
        if stamp.exists() and records_path.exists():
            meta = json.loads(stamp.read_text(encoding="utf-8"))
            if meta.get("hash") == cell_hash:
                records = read_prediction_records(records_path)
                self._log_job(
                    kind="cell", experiment=experiment_id, row=row.train_label,
                    test=row.test_domain, arch=arch, fold=fold, status="cached",
                    accuracy=meta["accuracy"], hash=cell_hash,
                )
                return float(meta["accuracy"]), records
            log.info("stale cell artifact at %s; retraining", cell_dir)

        seed = self._cell_seed(experiment_id, row, arch, fold)
        clf_config = dataclasses.replace(self.config.clf_config_for(arch), seed=seed)
        spec = self.config.spec_for(arch)
        log.info(
            "%s | train %s -> test %s | %s fold %d | train=%d test=%d",
            experiment_id, row.train_label, row.test_domain, arch, fold,
            len(train_set), len(test_set),
        )
        model, history = train_classifier(clf_config, spec, train_set)
        if clf_config.audit_batches:
            train_ids = {p.source_id for p in train_set}
            for batch in history.batch_sources:
                bad = set(batch) - train_ids
                if bad:
                    raise LeakageError(f"batch sampled ids outside the training split: {sorted(bad)[:3]}")
        result = evaluate(model, test_set)
        cell_dir.mkdir(parents=True, exist_ok=True)
        write_prediction_records(records_path, result.records)
        stamp.write_text(
            json.dumps({"hash": cell_hash, "accuracy": result.accuracy}, sort_keys=True),
            encoding="utf-8",
        )
        self._log_job(
            kind="cell", experiment=experiment_id, row=row.train_label,
            test=row.test_domain, arch=arch, fold=fold, status="trained",
            accuracy=result.accuracy, hash=cell_hash,
        )
        return result.accuracy, result.records

    # ----------------------------------------------------------------- run

    def run(
        self,
        experiment_ids: tuple[str, ...] | None = None,
        architectures: tuple[str, ...] | None = None,
    ) -> RunResults:
        experiment_ids = tuple(experiment_ids or self.exp.ids)
        architectures = tuple(architectures or self.exp.architectures)
        plans = {eid: build_experiment_plan(eid) for eid in experiment_ids}
        needs_fakes = any(row.uses_fakes for plan in plans.values() for row in plan.rows)

        acc: dict[tuple, list[float]] = {}
        recs: dict[tuple, list[PredictionRecord]] = {}
        for fold in range(self.exp.k_folds):
            pools = dict(self.real)
            gan_hash = None
            if needs_fakes:
                gan_fold = fold if self.exp.per_fold_gan else None
                bundle = self.gan_bundle(gan_fold)
                pools.update(self.fakes(gan_fold))
                gan_hash = bundle.config_hash
            for eid, plan in plans.items():
                for row_index, row in enumerate(plan.rows):
                    for arch in architectures:
                        key = (eid, row_index, arch)
                        cell_gan = gan_hash if row.uses_fakes else None
                        accuracy, records = self._run_cell(
                            eid, row_index, row, arch, fold, pools, cell_gan
                        )
                        acc.setdefault(key, []).append(accuracy)
                        recs.setdefault(key, []).extend(records)

        cells = {
            key: CellSeries(
                experiment_id=key[0],
                row_index=key[1],
                row=plans[key[0]].rows[key[1]],
                arch=key[2],
                fold_accuracies=tuple(acc[key]),
                records=tuple(recs[key]),
            )
            for key in acc
        }
        return RunResults(
            plans=plans,
            cells=cells,
            k=self.exp.k_folds,
            architectures=architectures,
            config_hash=self.config.full_hash(),
        )


def run_cross_validation(
    config: RunConfig,
    real: dict[str, DomainDataset],
    out_dir: str | Path,
    experiment_ids: tuple[str, ...] | None = None,
    architectures: tuple[str, ...] | None = None,
) -> RunResults:
    """Convenience wrapper: build a runner and execute the requested blocks."""
    return ExperimentRunner(config, real, out_dir).run(experiment_ids, architectures)


def load_results(
    config: RunConfig,
    real: dict[str, DomainDataset],
    out_dir: str | Path,
    experiment_ids: tuple[str, ...] | None = None,
    architectures: tuple[str, ...] | None = None,
) -> RunResults:
    """Rebuild results from cached cell artifacts without training anything.

    Cells whose stamp hash does not match the current config are rejected;
    cells that were never produced are simply absent from the result (the
    report renders them as gaps and flags the table as incomplete).
    """
    runner = ExperimentRunner(config, real, out_dir)
    experiment_ids = tuple(experiment_ids or runner.exp.ids)
    architectures = tuple(architectures or runner.exp.architectures)
    plans = {eid: build_experiment_plan(eid) for eid in experiment_ids}

    gan_hashes: dict[int | None, str] = {}

    def gan_hash_for(fold: int | None) -> str | None:
        if fold not in gan_hashes:
            if fold is None:
                train_sets = runner.real
            else:
                keep = frozenset(p for p, f in runner.fold_plan.assignment.items() if f != fold)
                train_sets = {d: _restrict(ds, keep) for d, ds in runner.real.items()}
            gan_hashes[fold] = runner._gan_hash(fold, train_sets)
        return gan_hashes[fold]

    cells = {}
    for eid, plan in plans.items():
        for row_index, row in enumerate(plan.rows):
            for arch in architectures:
                folds_acc: list[float] = []
                pooled: list[PredictionRecord] = []
                complete = True
                for fold in range(runner.exp.k_folds):
                    cell_dir = runner.cell_dir(eid, row_index, row, arch, fold)
                    stamp = cell_dir / "done.json"
                    if not (stamp.exists() and (cell_dir / "records.csv").exists()):
                        complete = False
                        break
                    meta = json.loads(stamp.read_text(encoding="utf-8"))
                    gh = None
                    if row.uses_fakes:
                        gh = gan_hash_for(fold if runner.exp.per_fold_gan else None)
                    expected = runner._cell_hash(eid, row, arch, fold, gh)
                    if meta.get("hash") != expected:
                        raise ValidationError(
                            f"cached cell {cell_dir} was produced under a different configuration"
                        )
                    folds_acc.append(float(meta["accuracy"]))
                    pooled.extend(read_prediction_records(cell_dir / "records.csv"))
                if complete:
                    cells[(eid, row_index, arch)] = CellSeries(
                        experiment_id=eid, row_index=row_index, row=row, arch=arch,
                        fold_accuracies=tuple(folds_acc), records=tuple(pooled),
                    )
    return RunResults(
        plans=plans, cells=cells, k=runner.exp.k_folds,
        architectures=architectures, config_hash=config.full_hash(),
    )

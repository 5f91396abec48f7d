import json

import numpy as np
import pytest

from endotrans.classifiers import ClfTrainConfig
from endotrans.config import (
    ClassifierSection,
    ExperimentConfig,
    PathsConfig,
    RunConfig,
)
from endotrans.data import DomainDataset
from endotrans.errors import LeakageError, ValidationError
from endotrans.experiments import (
    EXPERIMENT_TABLE,
    ExperimentRow,
    ExperimentRunner,
    assert_patient_disjoint,
    build_experiment_plan,
    load_results,
    run_cross_validation,
)
from endotrans.translation import GanTrainConfig

from conftest import make_tiny_dataset

#: frozen golden copy of the experiment definitions; any change to the real
#: table must be deliberate enough to update this literal too
GOLDEN_TABLE = {
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


def test_experiment_table_matches_golden():
    assert EXPERIMENT_TABLE == GOLDEN_TABLE


def test_plan_construction():
    plan = build_experiment_plan("E3a")
    assert plan.baseline_index == 0
    assert [r.train_label for r in plan.rows] == ["WLI", "WLI_f+WLI", "NBI_f", "NBI+NBI_f"]
    assert [r.test_domain for r in plan.rows] == ["WLI", "WLI", "NBI_f", "NBI_f"]
    assert [r.uses_fakes for r in plan.rows] == [False, True, True, True]
    with pytest.raises(ValidationError, match="unknown experiment id"):
        build_experiment_plan("E9")


def test_experiment_row_validation():
    with pytest.raises(ValidationError):
        ExperimentRow(train_domains=("XRAY",), test_domain="WLI")
    with pytest.raises(ValidationError):
        ExperimentRow(train_domains=(), test_domain="WLI")


def test_leakage_guard():
    a = make_tiny_dataset("WLI", n_patients=3)
    b = make_tiny_dataset("NBI", n_patients=3)  # same patient ids P00..P02
    with pytest.raises(LeakageError, match="appear in both"):
        assert_patient_disjoint(a, b)
    disjoint = a.filter(lambda p: p.patient_id == "P00")
    other = b.filter(lambda p: p.patient_id != "P00")
    assert_patient_disjoint(disjoint, other)  # no error


def tiny_run_config(ids=("E1", "E2b"), k=2, per_fold_gan=False, clf_overrides=None):
    default = dict(iterations=4, batch_size=6, lr=0.005, seed=0)
    default.update(clf_overrides or {})
    classifier = ClassifierSection(
        default=default,
        specs={"vggf": {"crop_size": 64, "width_mult": 0.25}},
    )
    return RunConfig(
        paths=PathsConfig(patch_size=64),
        gan=GanTrainConfig(
            epochs=2,
            seed=5,
            generator_base_channels=4,
            generator_depth=2,
            max_channels=8,
            discriminator_base_channels=4,
            discriminator_layers=1,
            adversarial_form="lsgan",
        ),
        classifier=classifier,
        # experiment seed chosen so both folds keep two classes in every domain
        experiment=ExperimentConfig(
            ids=ids, k_folds=k, architectures=("vggf",), seed=0, per_fold_gan=per_fold_gan
        ),
    )


@pytest.fixture(scope="module")
def finished_run(tmp_path_factory, corpus64):
    out = tmp_path_factory.mktemp("run")
    config = tiny_run_config()
    results = run_cross_validation(config, corpus64, out)
    return config, out, results


def test_run_produces_all_cells(finished_run, corpus64):
    config, out, results = finished_run
    # E1 has 2 rows, E2b has 3; one architecture each
    assert len(results.cells) == 5
    for (eid, row_index, arch), cell in results.cells.items():
        assert arch == "vggf"
        assert len(cell.fold_accuracies) == 2
        assert all(0.0 <= a <= 1.0 for a in cell.fold_accuracies)
    # pooled records over folds cover every patch of the test domain exactly once
    e1_wli = results.cell("E1", 0, "vggf")
    assert sorted(r.source_id for r in e1_wli.records) == sorted(
        p.source_id for p in corpus64["WLI"]
    )


def test_artifacts_on_disk(finished_run):
    config, out, results = finished_run
    assert (out / "gan" / "shared.ckpt").exists()
    jobs = [json.loads(line) for line in (out / "jobs.jsonl").read_text().splitlines()]
    trained = [j for j in jobs if j["status"] == "trained"]
    assert any(j["kind"] == "gan" for j in trained)
    assert sum(j["kind"] == "cell" for j in trained) == 10  # 5 cells x 2 folds
    assert all("time" not in j and "timestamp" not in j for j in jobs)
    cell_dirs = list((out / "cells").glob("E*/row*/*/fold*"))
    assert len(cell_dirs) == 10
    for d in cell_dirs:
        assert (d / "records.csv").exists() and (d / "done.json").exists()


def test_rerun_serves_from_cache(finished_run, corpus64):
    config, out, results = finished_run
    before = (out / "jobs.jsonl").read_text().splitlines()
    again = run_cross_validation(config, corpus64, out)
    after = (out / "jobs.jsonl").read_text().splitlines()
    new_jobs = [json.loads(line) for line in after[len(before):]]
    assert new_jobs and all(j["status"] == "cached" for j in new_jobs)
    for key, cell in results.cells.items():
        assert again.cells[key].fold_accuracies == cell.fold_accuracies
        assert again.cells[key].records == cell.records


def test_load_results_reconstructs_everything(finished_run, corpus64):
    config, out, results = finished_run
    loaded = load_results(config, corpus64, out)
    assert set(loaded.cells) == set(results.cells)
    for key, cell in results.cells.items():
        assert loaded.cells[key].fold_accuracies == cell.fold_accuracies
        assert loaded.cells[key].records == cell.records


def test_load_results_rejects_stale_config(finished_run, corpus64):
    config, out, results = finished_run
    changed = tiny_run_config(clf_overrides={"lr": 0.001})
    with pytest.raises(ValidationError, match="different configuration"):
        load_results(changed, corpus64, out)


def test_load_results_reports_gaps_as_missing(finished_run, corpus64):
    config, out, results = finished_run
    wider = tiny_run_config(ids=("E1", "E2b", "E2a"))
    loaded = load_results(wider, corpus64, out)
    assert ("E2a", 0, "vggf") not in loaded.cells
    assert ("E1", 0, "vggf") in loaded.cells


def test_fakes_inherit_patients_and_sources(finished_run, corpus64):
    config, out, results = finished_run
    runner = ExperimentRunner(config, corpus64, out)
    fakes = runner.fakes(None)
    assert fakes["NBI_f"].domain == "NBI_f"
    assert fakes["NBI_f"].patients == corpus64["WLI"].patients
    assert {p.source_id for p in fakes["WLI_f"]} == {p.source_id for p in corpus64["NBI"]}


def test_per_fold_gan_trains_one_model_per_fold(tmp_path, corpus64):
    config = tiny_run_config(ids=("E2b",), per_fold_gan=True)
    out = tmp_path / "perfold"
    results = run_cross_validation(config, corpus64, out)
    assert (out / "gan" / "fold0.ckpt").exists()
    assert (out / "gan" / "fold1.ckpt").exists()
    assert not (out / "gan" / "shared.ckpt").exists()
    jobs = [json.loads(line) for line in (out / "jobs.jsonl").read_text().splitlines()]
    gan_trained = [j for j in jobs if j["kind"] == "gan" and j["status"] == "trained"]
    assert {j["fold"] for j in gan_trained} == {0, 1}


def test_runner_validates_inputs(corpus64, tmp_path):
    config = tiny_run_config()
    with pytest.raises(ValidationError, match="needs a real NBI"):
        ExperimentRunner(config, {"WLI": corpus64["WLI"]}, tmp_path)
    empty = {"WLI": corpus64["WLI"], "NBI": DomainDataset.from_patches([], domain="NBI")}
    with pytest.raises(ValidationError, match="empty"):
        ExperimentRunner(config, empty, tmp_path)
    swapped = {"WLI": corpus64["NBI"], "NBI": corpus64["WLI"]}
    with pytest.raises(ValidationError, match="has domain"):
        ExperimentRunner(config, swapped, tmp_path)

import csv
import json

import numpy as np
import pytest
from PIL import Image

from endotrans.classifiers import PredictionRecord
from endotrans.errors import ValidationError
from endotrans.experiments import CellSeries, RunResults, build_experiment_plan
from endotrans.report import (
    aggregate,
    format_cell,
    mean_std_pct,
    render_text,
    save_comparison_grid,
    write_report,
)
from endotrans.synthetic import make_corpus

from conftest import make_patch
from endotrans.data import DomainDataset


def test_mean_std_formatting():
    assert format_cell([0.818, 0.860, 0.902]) == "86.0(4.2)"
    assert format_cell([0.86]) == "86.0(0.0)"  # single fold: zero spread
    assert format_cell([0.5, 0.5, 0.5]) == "50.0(0.0)"
    mean, std = mean_std_pct([0.82, 0.90])
    assert mean == pytest.approx(86.0)
    assert std == pytest.approx(np.sqrt(32.0))  # sample std, ddof=1
    with pytest.raises(ValidationError):
        mean_std_pct([])


def _records(outcomes, true="healthy"):
    wrong = "celiac"
    return tuple(
        PredictionRecord(f"id{i}", true, true if ok else wrong, 0.8)
        for i, ok in enumerate(outcomes)
    )


def _cell(eid, row_index, arch, fold_accs, outcomes, plan):
    return CellSeries(
        experiment_id=eid,
        row_index=row_index,
        row=plan.rows[row_index],
        arch=arch,
        fold_accuracies=tuple(fold_accs),
        records=_records(outcomes),
    )


def _fake_results(archs=("vggf",), drop=None):
    plan = build_experiment_plan("E2a")
    n = 30
    base_outcomes = [i % 5 != 0 for i in range(n)]  # 24/30 correct
    better_outcomes = [True] * n  # fixes all 6 baseline errors -> b=0, c=6
    mixed_outcomes = [i % 5 != 1 for i in range(n)]  # same accuracy, different items
    cells = {}
    for arch in archs:
        cells[("E2a", 0, arch)] = _cell("E2a", 0, arch, [0.80, 0.80], base_outcomes, plan)
        cells[("E2a", 1, arch)] = _cell("E2a", 1, arch, [0.84, 0.84], mixed_outcomes, plan)
        cells[("E2a", 2, arch)] = _cell("E2a", 2, arch, [1.0, 1.0], better_outcomes, plan)
    if drop:
        del cells[drop]
    return RunResults(
        plans={"E2a": plan},
        cells=cells,
        k=2,
        architectures=tuple(archs),
        config_hash="f" * 64,
    )


def test_aggregate_marks_significant_gains_only():
    report = aggregate(_fake_results())
    rows = report["experiments"]["E2a"]["rows"]
    base, mid, best = (r["cells"]["vggf"] for r in rows)
    assert base["p_vs_baseline"] is None  # baseline compares to nothing
    assert not base["display"].endswith("*")
    # same-accuracy row: 6 vs 6 discordant, p = 1-ish, no star
    assert mid["p_vs_baseline"] > 0.05
    assert not mid["significant_gain"]
    # all-correct row: b=0, c=6 discordant -> exact p = 2/64 = 0.03125 < 0.05
    assert best["p_vs_baseline"] == pytest.approx(0.03125)
    assert best["significant_gain"]
    assert best["display"] == "100.0(0.0)*"
    # the full pairwise grid is kept alongside the starred baseline column
    grid = report["experiments"]["E2a"]["pairwise"]["vggf"]
    assert set(grid) == {"0-1", "0-2", "1-2"}
    assert grid["0-2"] == best["p_vs_baseline"]
    assert grid["0-1"] == pytest.approx(1.0)  # b=c=6, perfectly symmetric
    assert grid["1-2"] == pytest.approx(0.03125)  # row 2 fixes all 6 of row 1's errors


def test_aggregate_mean_over_archs_and_rows():
    report = aggregate(_fake_results(archs=("alexnet", "vggf")))
    rows = report["experiments"]["E2a"]["rows"]
    assert rows[0]["mean_over_archs"] == pytest.approx(80.0)
    assert rows[2]["mean_over_archs"] == pytest.approx(100.0)
    assert not report["incomplete"]


def test_aggregate_flags_missing_cells():
    report = aggregate(_fake_results(archs=("alexnet", "vggf"), drop=("E2a", 1, "alexnet")))
    assert report["incomplete"]
    rows = report["experiments"]["E2a"]["rows"]
    assert rows[1]["cells"]["alexnet"] is None
    assert rows[1]["mean_over_archs"] is None  # no partial means
    assert rows[0]["mean_over_archs"] == pytest.approx(80.0)


def test_render_text_layout():
    text = render_text(aggregate(_fake_results()))
    assert "== E2a ==" in text
    assert "NBI+NBI_f" in text
    assert "100.0(0.0)*" in text
    assert "80.0(0.0)" in text
    missing = render_text(aggregate(_fake_results(drop=("E2a", 1, "vggf"))))
    assert "WARNING" in missing


def test_write_report_files(tmp_path):
    report = write_report(_fake_results(), tmp_path)
    data = json.loads((tmp_path / "report.json").read_text())
    assert data == report
    assert data["config_hash"] == "f" * 64
    text = (tmp_path / "report.txt").read_text()
    assert "== E2a ==" in text
    with (tmp_path / "report.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3
    by_train = {r["train"]: r for r in rows}
    assert by_train["NBI+NBI_f"]["significant_gain"] == "1"
    assert by_train["NBI"]["p_vs_baseline"] == ""
    assert float(by_train["NBI+WLI"]["mean_pct"]) == pytest.approx(84.0)


def test_comparison_grid(tmp_path):
    corpus = make_corpus(n_patients=2, images_per_patient=3, size=16, seed=0)
    real = corpus["WLI"]
    fake = DomainDataset.from_patches(
        [
            make_patch(size=16, domain="NBI_f", provenance="fake", source_id=p.source_id, seed=i)
            for i, p in enumerate(real)
        ],
        domain="NBI_f",
    )
    path = save_comparison_grid(real, fake, tmp_path / "grid.png", n=4, seed=0)
    with Image.open(path) as img:
        w, h = img.size
    assert h == 2 * 16 + 3 * 4  # two rows plus margins
    assert w == 4 * 16 + 5 * 4
    with pytest.raises(ValidationError):
        save_comparison_grid(real, DomainDataset.from_patches([], domain="NBI_f"), tmp_path / "x.png")


def test_unpaired_rows_get_no_p_value():
    # E1's two rows test on disjoint item sets, so no paired test applies.
    plan = build_experiment_plan("E1")
    wli_recs = tuple(
        PredictionRecord(f"wli{i}", "healthy", "healthy", 0.9) for i in range(10)
    )
    nbi_recs = tuple(
        PredictionRecord(f"nbi{i}", "healthy", "healthy" if i else "celiac", 0.9)
        for i in range(10)
    )
    results = RunResults(
        plans={"E1": plan},
        cells={
            ("E1", 0, "vggf"): CellSeries("E1", 0, plan.rows[0], "vggf", (0.9,), wli_recs),
            ("E1", 1, "vggf"): CellSeries("E1", 1, plan.rows[1], "vggf", (1.0,), nbi_recs),
        },
        k=1,
        architectures=("vggf",),
        config_hash="a" * 64,
    )
    report = aggregate(results)
    second = report["experiments"]["E1"]["rows"][1]["cells"]["vggf"]
    assert second["p_vs_baseline"] is None
    assert not second["significant_gain"]
    assert "*" not in second["display"]
    assert report["experiments"]["E1"]["pairwise"]["vggf"] == {}

"""Turns raw cross-validation results into the summary table.

Each cell shows percent accuracy over folds as ``mean(std)`` with one
decimal, e.g. ``86.0(4.2)`` (sample standard deviation; a single fold shows
``0.0``).  The last column is the plain mean over architectures.  Within an
experiment block, a trailing ``*`` marks cells whose pooled predictions beat
the block's first (baseline) row significantly at the 0.05 level under the
paired discordant-count test; pairing is by source id, which lets a
translated test set pair with its real counterpart.  Rows whose test set
shares no items with the baseline's (e.g. the two independent baselines of
the first experiment) are reported without a p-value.

Writers: ``report.txt`` (aligned table), ``report.json`` (full structure,
including per-fold accuracies, the baseline p-values, and the complete
pairwise p-value matrix for every pairable row pair in a block),
``report.csv`` (one row per cell).  A missing cell renders as ``-`` and
flips the ``incomplete`` flag.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
from PIL import Image

from .data import DomainDataset, denormalize_to_u8
from .errors import ValidationError
from .experiments import RunResults
from .mcnemar import mcnemar_records

ALPHA = 0.05


def mean_std_pct(fold_accuracies) -> tuple[float, float]:
    """Percent mean and sample std (ddof=1) over folds; one fold gives std 0."""
    accs = np.asarray(fold_accuracies, dtype=np.float64) * 100.0
    if accs.size == 0:
        raise ValidationError("no fold accuracies to aggregate")
    std = float(accs.std(ddof=1)) if accs.size > 1 else 0.0
    return float(accs.mean()), std


def format_cell(fold_accuracies) -> str:
    mean, std = mean_std_pct(fold_accuracies)
    return f"{mean:.1f}({std:.1f})"


def _pairable(records_a, records_b) -> bool:
    """True when both prediction sets cover exactly the same source ids."""
    return {r.source_id for r in records_a} == {r.source_id for r in records_b}


def aggregate(results: RunResults) -> dict:
    """Build the JSON-ready report structure from run results."""
    report: dict = {
        "config_hash": results.config_hash,
        "k_folds": results.k,
        "architectures": list(results.architectures),
        "significance_level": ALPHA,
        "incomplete": False,
        "experiments": {},
    }
    for eid, plan in results.plans.items():
        rows_out = []
        for row_index, row in enumerate(plan.rows):
            cells_out: dict = {}
            arch_means = []
            for arch in results.architectures:
                cell = results.cell(eid, row_index, arch)
                if cell is None:
                    report["incomplete"] = True
                    cells_out[arch] = None
                    continue
                mean, std = mean_std_pct(cell.fold_accuracies)
                entry = {
                    "mean": mean,
                    "std": std,
                    "display": f"{mean:.1f}({std:.1f})",
                    "fold_accuracies": list(cell.fold_accuracies),
                    "pooled_accuracy": cell.pooled_accuracy,
                    "p_vs_baseline": None,
                    "significant_gain": False,
                }
                if row_index != plan.baseline_index:
                    base = results.cell(eid, plan.baseline_index, arch)
                    if base is not None and _pairable(cell.records, base.records):
                        test = mcnemar_records(cell.records, base.records)
                        entry["p_vs_baseline"] = test.p_value
                        entry["significant_gain"] = (
                            test.p_value < ALPHA and cell.pooled_accuracy > base.pooled_accuracy
                        )
                        if entry["significant_gain"]:
                            entry["display"] += "*"
                arch_means.append(mean)
                cells_out[arch] = entry
            rows_out.append(
                {
                    "train": row.train_label,
                    "test": row.test_domain,
                    "baseline": row_index == plan.baseline_index,
                    "cells": cells_out,
                    "mean_over_archs": (
                        float(np.mean(arch_means)) if len(arch_means) == len(results.architectures) else None
                    ),
                }
            )
        pairwise: dict = {}
        for arch in results.architectures:
            cells = [results.cell(eid, i, arch) for i in range(len(plan.rows))]
            grid = {}
            for i in range(len(cells)):
                for j in range(i + 1, len(cells)):
                    a, b = cells[i], cells[j]
                    if a is None or b is None or not _pairable(a.records, b.records):
                        continue
                    grid[f"{i}-{j}"] = mcnemar_records(a.records, b.records).p_value
            pairwise[arch] = grid
        report["experiments"][eid] = {"rows": rows_out, "pairwise": pairwise}
    return report


def render_text(report: dict) -> str:
    """Fixed-width table, one block per experiment."""
    archs = report["architectures"]
    lines = [
        f"cross-validated accuracy, k={report['k_folds']} folds "
        f"(cells: percent mean(std); * = significant gain over the block baseline "
        f"at p<{report['significance_level']:g})",
        f"config {report['config_hash'][:12]}",
    ]
    if report["incomplete"]:
        lines.append("WARNING: table is incomplete; missing cells shown as -")
    header = ["train", "test", *archs, "mean"]
    widths = [max(14, len(h)) for h in header]
    for eid, block in report["experiments"].items():
        lines.append("")
        lines.append(f"== {eid} ==")
        lines.append("  ".join(h.ljust(w) for h, w in zip(header, widths)))
        for row in block["rows"]:
            cells = []
            for arch in archs:
                entry = row["cells"].get(arch)
                cells.append(entry["display"] if entry else "-")
            mean = f"{row['mean_over_archs']:.1f}" if row["mean_over_archs"] is not None else "-"
            values = [row["train"], row["test"], *cells, mean]
            lines.append("  ".join(v.ljust(w) for v, w in zip(values, widths)))
    return "\n".join(lines) + "\n"


def write_report(results: RunResults, out_dir: str | Path) -> dict:
    """Aggregate and write ``report.json`` / ``report.csv`` / ``report.txt``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = aggregate(results)
    (out_dir / "report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (out_dir / "report.txt").write_text(render_text(report), encoding="utf-8")
    with (out_dir / "report.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["experiment", "train", "test", "arch", "mean_pct", "std_pct", "display",
             "p_vs_baseline", "significant_gain"]
        )
        for eid, block in report["experiments"].items():
            for row in block["rows"]:
                for arch in report["architectures"]:
                    entry = row["cells"].get(arch)
                    if entry is None:
                        writer.writerow([eid, row["train"], row["test"], arch, "", "", "-", "", ""])
                        continue
                    writer.writerow(
                        [
                            eid, row["train"], row["test"], arch,
                            f"{entry['mean']:.4f}", f"{entry['std']:.4f}", entry["display"],
                            "" if entry["p_vs_baseline"] is None else f"{entry['p_vs_baseline']:.6g}",
                            int(entry["significant_gain"]),
                        ]
                    )
    return report


def save_comparison_grid(
    real: DomainDataset, fake: DomainDataset, path: str | Path, n: int = 6, seed: int = 0
) -> Path:
    """Side-by-side strip: originals on the top row, their translations below.

    Fakes are matched to sources by ``source_id``; patches without a match
    are skipped.
    """
    by_source = {p.source_id: p for p in fake}
    candidates = [p for p in real if p.source_id in by_source]
    if not candidates:
        raise ValidationError("no source_id overlap between the two datasets")
    rng = np.random.default_rng(seed)
    take = min(n, len(candidates))
    picks = [candidates[i] for i in rng.choice(len(candidates), size=take, replace=False)]

    h, w = picks[0].size
    margin = 4
    canvas = Image.new(
        "RGB", (take * w + (take + 1) * margin, 2 * h + 3 * margin), (32, 32, 32)
    )
    for col, patch in enumerate(picks):
        x = margin + col * (w + margin)
        canvas.paste(Image.fromarray(denormalize_to_u8(patch.pixels)), (x, margin))
        twin = by_source[patch.source_id]
        canvas.paste(Image.fromarray(denormalize_to_u8(twin.pixels)), (x, h + 2 * margin))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    canvas.save(path)
    return path

"""Run a miniature version of the cross-validated evaluation protocol end to
end from a config file, then render the report.

The full protocol has five experiment blocks; this demo runs E1 (real WLI
vs real NBI baselines), which needs no translation model and finishes in
about a minute.  Blocks that mix in fake pools (E2a/E2b/E3a/E3b) pull in
the [gan] section the same way — just slower.

Run from the repository root:

    python3 demos/04_experiments.py
"""

import textwrap
from pathlib import Path

from endotrans import load_config, make_corpus, run_cross_validation, write_report
from endotrans.data import save_dataset

OUT = Path(__file__).parent / "_out" / "04_experiments"

CONFIG = """
paths:
  wli_manifest: {out}/WLI/manifest.csv
  nbi_manifest: {out}/NBI/manifest.csv
  patch_size: 64

classifier:
  default: {{iterations: 400, batch_size: 16, lr: 0.01, seed: 0}}
  specs:
    vggf: {{crop_size: 64, width_mult: 0.25}}

experiment:
  ids: [E1]
  k_folds: 2
  architectures: [vggf]
  seed: 0
"""


def main():
    corpus = make_corpus(n_patients=8, images_per_patient=3, size=64, seed=9)
    for ds in corpus.values():
        save_dataset(ds, OUT / ds.domain)

    cfg_path = OUT / "run.yaml"
    cfg_path.write_text(textwrap.dedent(CONFIG.format(out=OUT)), encoding="utf-8")
    config = load_config(cfg_path)
    print(f"config hash {config.full_hash()[:12]}...  experiments {config.experiment.ids}")

    real = {
        "WLI": corpus["WLI"],
        "NBI": corpus["NBI"],
    }
    print("running E1 under 2-fold patient-grouped cross-validation ...")
    results = run_cross_validation(config, real, OUT / "artifacts")
    report = write_report(results, OUT / "artifacts")

    print("\n" + (OUT / "artifacts" / "report.txt").read_text())
    e1 = report["experiments"]["E1"]["rows"]
    for row in e1:
        cell = row["cells"]["vggf"]
        tag = " (baseline)" if row["baseline"] else ""
        print(f"  train {row['train']:>4} -> test {row['test']}: {cell['display']}{tag}")

    print(
        "\nthe same run via the command line:\n"
        f"  endotrans experiment --config {cfg_path} --out {OUT / 'artifacts'}\n"
        f"  endotrans report --config {cfg_path} --out {OUT / 'artifacts'}"
    )
    print("artifacts are cached by config hash; re-running skips finished cells.")


if __name__ == "__main__":
    main()

"""Train two patch classifiers on the same pool, score them on held-out
patients, and ask whether their difference means anything (paired McNemar
test on the shared test items).

Run from the repository root:

    python3 demos/03_classifiers.py
"""

from pathlib import Path

from endotrans import (
    ClassifierSpec,
    ClfTrainConfig,
    evaluate,
    make_synthetic_dataset,
    mcnemar_records,
    train_classifier,
)
from endotrans.classifiers import read_prediction_records, write_prediction_records

OUT = Path(__file__).parent / "_out" / "03_classifiers"


def main():
    train_set = make_synthetic_dataset("WLI", n_patients=12, images_per_patient=3, size=64, seed=5)
    test_set = make_synthetic_dataset("WLI", n_patients=8, images_per_patient=3, size=64, seed=5,
                                      patient_prefix="HELD")
    print("train:", train_set.summary(), "| test:", test_set.summary())

    cfg = ClfTrainConfig(iterations=400, batch_size=32, lr=0.01, seed=0)
    results = {}
    for arch in ("vggf", "alexnet"):
        spec = ClassifierSpec(arch, crop_size=64, width_mult=0.25)
        model, history = train_classifier(cfg, spec, train_set)
        res = evaluate(model, test_set)
        results[arch] = res
        print(f"  {arch:8s} final loss {history.loss_curve[-1][1]:.4f}   accuracy {res.accuracy:.3f}")

    print("\npaired comparison on identical test items:")
    test = mcnemar_records(results["vggf"].records, results["alexnet"].records)
    print(f"  b={test.b} c={test.c}  p={test.p_value:.4f}  ({test.method})")
    verdict = "distinguishable" if test.p_value < 0.05 else "not distinguishable"
    print(f"  the two architectures are {verdict} at the 5% level here")

    OUT.mkdir(parents=True, exist_ok=True)
    path = write_prediction_records(OUT / "vggf_predictions.csv", results["vggf"].records)
    again = read_prediction_records(path)
    assert again == tuple(results["vggf"].records)
    print(f"\nper-item records round-trip through {path}")


if __name__ == "__main__":
    main()

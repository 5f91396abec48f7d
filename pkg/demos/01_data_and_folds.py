"""Data plumbing tour: build a toy corpus, round-trip it through manifests,
and split it into patient-grouped folds.

Run from the repository root:

    python3 demos/01_data_and_folds.py
"""

from pathlib import Path

from endotrans import (
    LeakageError,
    assign_folds,
    load_manifest,
    make_corpus,
    merge_datasets,
    save_dataset,
)
from endotrans.experiments import assert_patient_disjoint

OUT = Path(__file__).parent / "_out" / "01_data"


def main():
    print("=== 1. synthesize a two-domain corpus ===")
    corpus = make_corpus(n_patients=8, images_per_patient=3, size=64, seed=0)
    for domain, ds in corpus.items():
        print(f"  {ds.summary()}   patients: {len(ds.patients)}")

    print("\n=== 2. write manifests + PNGs, read them back ===")
    for domain, ds in corpus.items():
        manifest = save_dataset(ds, OUT / domain)
        reloaded = load_manifest(manifest, expected_size=64)
        assert len(reloaded) == len(ds) and reloaded.patients == ds.patients
        print(f"  {manifest}  ->  {reloaded.summary()}")

    print("\n=== 3. patient-grouped folds (shared across domains) ===")
    plan = assign_folds(list(corpus.values()), k=4, seed=0)
    for fold in range(plan.k):
        members = sorted(plan.patients_in_fold(fold))
        print(f"  fold {fold}: {members}")
    wli = corpus["WLI"]
    test_patients = plan.patients_in_fold(0)
    test_set = wli.filter(lambda p: p.patient_id in test_patients)
    train_set = wli.filter(lambda p: p.patient_id not in test_patients)
    assert_patient_disjoint(train_set, test_set, context="fold 0")
    print(f"  fold 0 split: {len(train_set)} train / {len(test_set)} test patches, no shared patients")

    print("\n=== 4. the leakage guard actually bites ===")
    leaky = merge_datasets(train_set, test_set)
    try:
        assert_patient_disjoint(leaky, test_set, context="deliberate leak")
    except LeakageError as err:
        print(f"  caught as intended: {err}")


if __name__ == "__main__":
    main()

"""Patient-grouped cross-validation fold planning.

Folds partition *patients*, not patches: every image of a patient, in any
domain and regardless of real/fake provenance, belongs to the same fold.
Translated patches inherit the fold of their source patient automatically
because they keep the source ``patient_id``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .data import DomainDataset
from .errors import ValidationError


@dataclass(frozen=True)
class PatientFoldPlan:
    """A k-way partition of patient ids, identical across domains."""

    k: int
    assignment: Mapping[str, int]

    def fold_of(self, patient_id: str) -> int:
        try:
            return self.assignment[patient_id]
        except KeyError:
            raise ValidationError(f"patient {patient_id!r} is not covered by the fold plan") from None

    def patients_in_fold(self, fold: int) -> frozenset[str]:
        return frozenset(p for p, f in self.assignment.items() if f == fold)

    def fold_sizes(self) -> list[int]:
        sizes = [0] * self.k
        for f in self.assignment.values():
            sizes[f] += 1
        return sizes

    def validate(self) -> None:
        if set(self.assignment.values()) - set(range(self.k)):
            raise ValidationError("fold indices out of range")
        sizes = self.fold_sizes()
        if max(sizes) - min(sizes) > 1:
            raise ValidationError(f"fold sizes too skewed: {sizes}")


def assign_folds(datasets: Sequence[DomainDataset], k: int = 5, seed: int = 0) -> PatientFoldPlan:
    """Deal patients into k folds: shuffle deterministically, then round-robin.

    The patient universe is the union over all given datasets, so a patient
    imaged in both domains lands in exactly one fold.
    """
    if k < 2:
        raise ValidationError(f"fold count must be >= 2, got {k}")
    patients = sorted(set().union(*(d.patients for d in datasets)) if datasets else set())
    if not patients:
        raise ValidationError("no patients found in the given datasets")
    if len(patients) < k:
        raise ValidationError(f"cannot split {len(patients)} patients into {k} folds")
    rng = np.random.default_rng(seed)
    order = [patients[i] for i in rng.permutation(len(patients))]
    return PatientFoldPlan(k=k, assignment={pid: i % k for i, pid in enumerate(order)})

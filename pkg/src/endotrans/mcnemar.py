"""Paired significance testing for two classifiers scored on the same items.

The test looks only at discordant pairs: ``b`` items the first classifier got
right and the second got wrong, ``c`` the reverse.  For small discordant
counts (b + c < 25) it uses the exact two-sided binomial tail; otherwise the
chi-square statistic with a continuity correction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from scipy.stats import chi2

from .classifiers import PredictionRecord
from .errors import ValidationError

EXACT_THRESHOLD = 25


@dataclass(frozen=True)
class SignificanceResult:
    b: int
    c: int
    p_value: float
    method: str  # "exact-binomial" or "chi2-corrected"

    @property
    def n_discordant(self) -> int:
        return self.b + self.c


def mcnemar_counts(b: int, c: int) -> SignificanceResult:
    """p-value from the discordant-pair counts alone."""
    if b < 0 or c < 0:
        raise ValidationError(f"discordant counts must be non-negative, got b={b} c={c}")
    n = b + c
    if n == 0:
        # No disagreements at all: the classifiers are indistinguishable.
        return SignificanceResult(b=b, c=c, p_value=1.0, method="exact-binomial")
    if n < EXACT_THRESHOLD:
        k = max(b, c)
        tail = sum(math.comb(n, i) for i in range(k, n + 1)) / 2**n
        p = min(1.0, 2.0 * tail)
        return SignificanceResult(b=b, c=c, p_value=p, method="exact-binomial")
    stat = max(0.0, abs(b - c) - 1.0) ** 2 / n
    p = float(chi2.sf(stat, df=1))
    return SignificanceResult(b=b, c=c, p_value=min(1.0, max(p, 0.0)), method="chi2-corrected")


def paired_outcomes(
    records_a: Sequence[PredictionRecord], records_b: Sequence[PredictionRecord]
) -> tuple[int, int]:
    """Match two record sets by source_id and count discordant pairs.

    Both runs must cover exactly the same items; source ids are the join key,
    so translated copies (which keep their source ids) pair with the
    originals even when the two classifiers were tested on different domains.
    """
    by_id_a = {r.source_id: r for r in records_a}
    by_id_b = {r.source_id: r for r in records_b}
    if len(by_id_a) != len(records_a) or len(by_id_b) != len(records_b):
        raise ValidationError("duplicate source_id in prediction records")
    if set(by_id_a) != set(by_id_b):
        missing = set(by_id_a) ^ set(by_id_b)
        raise ValidationError(
            f"prediction record sets cover different items ({len(missing)} unmatched, "
            f"e.g. {sorted(missing)[:3]})"
        )
    b = c = 0
    for sid, ra in by_id_a.items():
        rb = by_id_b[sid]
        if ra.true_label != rb.true_label:
            raise ValidationError(f"source_id {sid!r} has conflicting true labels between runs")
        if ra.correct and not rb.correct:
            b += 1
        elif rb.correct and not ra.correct:
            c += 1
    return b, c


def mcnemar_records(
    records_a: Sequence[PredictionRecord], records_b: Sequence[PredictionRecord]
) -> SignificanceResult:
    b, c = paired_outcomes(records_a, records_b)
    return mcnemar_counts(b, c)

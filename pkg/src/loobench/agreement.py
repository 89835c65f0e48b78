"""Inter-annotator agreement coefficients.

Both kappas return None when chance agreement is total (expected
agreement 1) and the statistic is undefined, rather than raising: callers
report "undefined" alongside the other stats.
"""

from __future__ import annotations

from collections import Counter
from typing import Hashable, Sequence

from .errors import ValidationError


def cohen_kappa(a: Sequence[Hashable], b: Sequence[Hashable]) -> float | None:
    """Cohen's kappa between two raters.

        kappa = (p_o - p_e) / (1 - p_e)

    p_o is the observed agreement rate; p_e the chance rate from each
    rater's marginal label frequencies. When p_e == 1, returns 1.0 for
    perfect agreement and None (undefined) otherwise.
    """
    if len(a) != len(b):
        raise ValidationError(f"label lists differ in length: {len(a)} vs {len(b)}")
    if not a:
        raise ValidationError("label lists are empty")
    n = len(a)
    p_o = sum(1 for x, y in zip(a, b) if x == y) / n
    freq_a = Counter(a)
    freq_b = Counter(b)
    p_e = sum(freq_a[label] / n * freq_b.get(label, 0) / n for label in freq_a)
    if p_e == 1.0:
        return 1.0 if p_o == 1.0 else None
    return (p_o - p_e) / (1.0 - p_e)


def fleiss_kappa(ratings: Sequence[Sequence[int]]) -> float | None:
    """Fleiss' kappa from an item-by-category count matrix.

    Every row must sum to the same number of raters n >= 2. Per-item
    agreement P_i = (sum_j n_ij^2 - n) / (n(n-1)); kappa compares the mean
    P_i against expected agreement from pooled category proportions.
    """
    if not ratings:
        raise ValidationError("ratings matrix is empty")
    widths = {len(row) for row in ratings}
    if len(widths) != 1:
        raise ValidationError("ragged ratings matrix")
    n = sum(ratings[0])
    if any(sum(row) != n for row in ratings):
        raise ValidationError("rows must all sum to the same rater count")
    if n < 2:
        raise ValidationError("fleiss_kappa needs at least 2 raters per item")

    items = len(ratings)
    categories = len(ratings[0])
    p_bar = sum(
        (sum(c * c for c in row) - n) / (n * (n - 1)) for row in ratings
    ) / items
    totals = [sum(row[j] for row in ratings) for j in range(categories)]
    grand = items * n
    proportions = [t / grand for t in totals]
    p_e = sum(p * p for p in proportions)
    if p_e == 1.0:
        return None
    return (p_bar - p_e) / (1.0 - p_e)

"""Evaluation: Dice overlap, slice preprocessing, aggregates, and the
paired Wilcoxon signed-rank test."""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import Sequence

import numpy as np

from .core import Mask
from .errors import DimMismatch, IcsError
from .volume_io import CaseBundle
from .core import Volume, Slice


class AllEmpty(IcsError):
    pass


class EmptySeries(IcsError):
    pass


class TooFewPairs(IcsError):
    pass


def dsc(pred: Mask, gt: Mask) -> float:
    """Dice similarity 2*TP / (2*TP + FP + FN); both-empty counts as 1.0."""
    if pred.data.shape != gt.data.shape:
        raise DimMismatch("mask dimensions differ")
    p = pred.data.astype(bool)
    g = gt.data.astype(bool)
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    if tp + fp + fn == 0:
        return 1.0
    return 2.0 * tp / (2.0 * tp + fp + fn)


def drop_empty_slices(bundle: CaseBundle) -> CaseBundle:
    """Remove slices with empty ground truth; reindex contiguously.

    The original slice indices are kept in ``original_indices``.
    """
    keep = [i for i in range(1, bundle.n_slices + 1) if not bundle.label_at(i).is_empty()]
    if not keep:
        raise AllEmpty("every slice has an empty ground-truth mask")
    if len(keep) == bundle.n_slices:
        return bundle
    slices = tuple(
        Slice(index=j + 1, data=bundle.image.slice_at(i).data) for j, i in enumerate(keep)
    )
    image = Volume(slices=slices, spacing=bundle.image.spacing, id=bundle.image.id)
    labels = tuple(bundle.label_at(i) for i in keep)
    return CaseBundle(
        image=image,
        labels=labels,
        region=bundle.region,
        original_indices=tuple(bundle.original_indices[i - 1] for i in keep),
    )


@dataclass
class DscStats:
    per_slice: list[tuple[int, float]]
    mean: float
    std: float  # sample std (n-1); 0 for n=1
    n: int


def aggregate(per_slice: Sequence[tuple[int, float]]) -> DscStats:
    """Sample mean and sample standard deviation of a DSC series."""
    per_slice = list(per_slice)
    if not per_slice:
        raise EmptySeries("cannot aggregate an empty series")
    vals = np.array([v for _, v in per_slice], dtype=np.float64)
    mean = float(vals.mean())
    std = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
    return DscStats(per_slice=per_slice, mean=mean, std=std, n=len(vals))


@dataclass
class PairedTestResult:
    statistic: float  # min(W+, W-)
    p_value: float
    n_effective: int
    method: str


def _midranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    sorted_vals = values[order]
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _exact_two_sided_p(ranks: np.ndarray, w_plus: float) -> float:
    """Two-sided p by full enumeration of sign assignments.

    Works on doubled ranks so midranks (.5 steps) stay integral; counts fit
    float64 exactly for n <= 20.
    """
    r2 = np.rint(2.0 * ranks).astype(int)
    total = int(r2.sum())
    dist = np.zeros(total + 1)
    dist[0] = 1.0
    for r in r2:
        shifted = np.zeros_like(dist)
        shifted[r:] = dist[: total + 1 - r]
        dist = dist + shifted
    n_outcomes = 2.0 ** len(ranks)
    w2 = int(round(2.0 * w_plus))
    p_le = dist[: w2 + 1].sum() / n_outcomes
    p_ge = dist[w2:].sum() / n_outcomes
    return min(1.0, 2.0 * min(p_le, p_ge))


def _approx_two_sided_p(ranks: np.ndarray, statistic: float, counts_of_ties: np.ndarray) -> float:
    """Normal approximation: continuity correction, tie-adjusted variance,
    and an Edgeworth kurtosis term (the rank-sum null is platykurtic, and
    the plain normal tail is visibly off for n near the exact cutover)."""
    n = len(ranks)
    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0 - float(((counts_of_ties**3 - counts_of_ties) / 48.0).sum())
    if var <= 0:
        return 1.0
    z = (statistic - mean + 0.5) / math.sqrt(var)
    # excess kurtosis of sum(r_i * Bernoulli(1/2)) is -sum(r^4)/8 / var^2
    excess = -float((ranks**4).sum()) / 8.0 / var**2
    phi = math.exp(-z * z / 2.0) / math.sqrt(2.0 * math.pi)
    p_one = NormalDist().cdf(z) - phi * excess / 24.0 * (z**3 - 3.0 * z)
    return min(1.0, max(0.0, 2.0 * p_one))


def paired_test(a: Sequence[float], b: Sequence[float], exact_limit: int = 20) -> PairedTestResult:
    """Two-sided Wilcoxon signed-rank test on paired samples.

    Zero differences are dropped, ties are mid-ranked; the null
    distribution is enumerated exactly up to ``exact_limit`` effective
    pairs, and approximated normally (continuity correction + tie variance
    adjustment) above it.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise IcsError("paired_test needs two equal-length 1-D samples")
    d = a - b
    d = d[d != 0.0]
    n = len(d)
    if n < 2:
        raise TooFewPairs(f"only {n} non-zero difference(s)")
    absd = np.abs(d)
    ranks = _midranks(absd)
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    statistic = min(w_plus, w_minus)
    _, tie_counts = np.unique(absd, return_counts=True)
    if n <= exact_limit:
        p = _exact_two_sided_p(ranks, w_plus)
        method = "wilcoxon-exact"
    else:
        p = _approx_two_sided_p(ranks, statistic, tie_counts.astype(np.float64))
        method = "wilcoxon-normal"
    return PairedTestResult(statistic=statistic, p_value=p, n_effective=n, method=method)


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> PairedTestResult:
    """Paired t-test alternative, available for comparison runs."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or len(a) < 2:
        raise TooFewPairs("need at least two pairs")
    d = a - b
    n = len(d)
    sd = d.std(ddof=1)
    if sd == 0:
        raise TooFewPairs("all differences identical")
    t = float(d.mean() / (sd / math.sqrt(n)))
    # two-sided p via the regularized incomplete beta function
    df = n - 1
    x = df / (df + t * t)
    p = float(_betainc_reg(df / 2.0, 0.5, x))
    return PairedTestResult(statistic=t, p_value=min(1.0, p), n_effective=n, method="t-paired")


def _betainc_reg(a: float, b: float, x: float) -> float:
    # Regularized incomplete beta via Lentz's continued fraction.
    if x <= 0:
        return 0.0
    if x >= 1:
        return 1.0
    if x > (a + 1) / (a + b + 2):
        return 1.0 - _betainc_reg(b, a, 1.0 - x)
    ln_beta = math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
    front = math.exp(a * math.log(x) + b * math.log(1 - x) - ln_beta) / a
    f, c, d = 1.0, 1.0, 0.0
    for i in range(200):
        m = i // 2
        if i == 0:
            num = 1.0
        elif i % 2 == 0:
            num = m * (b - m) * x / ((a + 2 * m - 1) * (a + 2 * m))
        else:
            num = -(a + m) * (a + b + m) * x / ((a + 2 * m) * (a + 2 * m + 1))
        d = 1.0 + num * d
        d = 1.0 / (d if abs(d) > 1e-30 else 1e-30)
        c = 1.0 + num / (c if abs(c) > 1e-30 else 1e-30)
        f *= c * d
        if abs(1.0 - c * d) < 1e-12:
            break
    return front * (f - 1.0)

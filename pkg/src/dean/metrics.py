"""Rank-based performance metrics and nonparametric comparison machinery.

Tie conventions are fixed explicitly throughout: tied score pairs earn 0.5
in the ROC statistic, tied scores form one block in average precision, and
ranks are averaged everywhere.  The chi-square survival function is
computed from the regularized incomplete gamma function (series below
x = a+1, continued fraction above), so the module has no runtime
dependency beyond numpy.
"""

import csv
import math
from dataclasses import dataclass
from typing import List

import numpy as np

from .errors import DataFormatError

WILCOXON_EXACT_LIMIT = 20  # exact sign-assignment distribution up to this m


@dataclass
class ScoredLabels:
    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.scores.shape != self.labels.shape or self.scores.ndim != 1:
            raise ValueError("scores and labels must be 1-D and equal length")
        if not np.all(np.isin(self.labels, (0, 1))):
            raise ValueError("labels must contain only 0 and 1")


def _as_scored(scores, labels=None) -> ScoredLabels:
    if labels is None and isinstance(scores, ScoredLabels):
        return scores
    return ScoredLabels(scores, labels)


def rank_average(values) -> np.ndarray:
    """1-based ranks of values ascending, ties sharing the average rank."""
    v = np.asarray(values, dtype=np.float64)
    order = np.argsort(v, kind="stable")
    ranks = np.empty(v.shape[0], dtype=np.float64)
    i = 0
    while i < v.shape[0]:
        j = i
        while j + 1 < v.shape[0] and v[order[j + 1]] == v[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auc_roc(scores, labels=None) -> float:
    """Probability that an anomaly outscores a normal sample, ties as 0.5.

    Mann-Whitney formulation computed through one average-rank pass,
    O(n log n).
    """
    s = _as_scored(scores, labels)
    n1 = int(s.labels.sum())
    n0 = s.labels.shape[0] - n1
    if n0 == 0 or n1 == 0:
        raise ValueError("AUC-ROC needs both classes present")
    ranks = rank_average(s.scores)
    # 2U and 2*n0*n1 are exact integers, so the quotient rounds once
    u2 = int(round(2.0 * ranks[s.labels == 1].sum())) - n1 * (n1 + 1)
    return u2 / (2 * n0 * n1)


def auc_pr(scores, labels=None) -> float:
    """Average precision over descending scores, tied scores as one block.

    Sum over blocks of (precision after the block) * (recall gained by the
    block); precision is evaluated only once the whole tie block is in.
    """
    s = _as_scored(scores, labels)
    n_pos = int(s.labels.sum())
    if n_pos == 0:
        raise ValueError("AUC-PR needs at least one positive")
    order = np.argsort(-s.scores, kind="stable")
    sc = s.scores[order]
    lb = s.labels[order]
    ap = 0.0
    tp = 0
    seen = 0
    i = 0
    n = sc.shape[0]
    while i < n:
        j = i
        while j + 1 < n and sc[j + 1] == sc[i]:
            j += 1
        block_pos = int(lb[i:j + 1].sum())
        seen += j - i + 1
        tp += block_pos
        if block_pos:
            ap += (tp / seen) * (block_pos / n_pos)
        i = j + 1
    return ap


@dataclass
class ResultsTable:
    """Datasets x algorithms matrix of performance values (higher better)."""

    algorithms: List[str]
    datasets: List[str]
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        expected = (len(self.datasets), len(self.algorithms))
        if self.values.shape != expected:
            raise ValueError(f"values must have shape {expected}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("missing or non-finite cells are not supported")


def load_results_csv(path) -> ResultsTable:
    """First column: dataset name; remaining columns: per-algorithm values."""
    try:
        fh = open(path, "r", newline="")
    except OSError as exc:
        raise DataFormatError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        if len(header) < 3:
            raise DataFormatError(f"{path}: need at least two algorithm columns")
        algorithms = [h.strip() for h in header[1:]]
        datasets, rows = [], []
        for i, row in enumerate(reader, start=1):
            if len(row) != len(header):
                raise DataFormatError(f"{path}: row {i} is ragged")
            datasets.append(row[0].strip())
            try:
                rows.append([float(c) for c in row[1:]])
            except ValueError:
                raise DataFormatError(
                    f"{path}: row {i} has a non-numeric cell") from None
        if not rows:
            raise DataFormatError(f"{path}: no data rows")
    return ResultsTable(algorithms, datasets, np.array(rows))


def mean_ranks(table: ResultsTable) -> np.ndarray:
    """Average rank per algorithm; rank 1 is the best (highest) value,
    ties share the average rank."""
    if len(table.algorithms) < 2 or len(table.datasets) < 1:
        raise ValueError("need at least two algorithms and one dataset")
    k = len(table.algorithms)
    ranks = np.empty_like(table.values)
    for i in range(table.values.shape[0]):
        # descending: rank of -value ascending
        ranks[i] = rank_average(-table.values[i])
    return ranks.mean(axis=0)


# -- incomplete gamma / chi-square -------------------------------------

_GAMMA_MAX_ITER = 500
_GAMMA_TINY = 1e-300


def _gamma_p_series(a, x):
    """Lower regularized incomplete gamma by power series (x < a+1)."""
    term = 1.0 / a
    total = term
    for n in range(1, _GAMMA_MAX_ITER):
        term *= x / (a + n)
        total += term
        if abs(term) < abs(total) * 1e-16:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_q_contfrac(a, x):
    """Upper regularized incomplete gamma by Lentz continued fraction
    (x >= a+1)."""
    b = x + 1.0 - a
    c = 1.0 / _GAMMA_TINY
    d = 1.0 / b
    h = d
    for i in range(1, _GAMMA_MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _GAMMA_TINY:
            d = _GAMMA_TINY
        c = b + an / c
        if abs(c) < _GAMMA_TINY:
            c = _GAMMA_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def gamma_q(a, x) -> float:
    """Regularized upper incomplete gamma Q(a, x), series/CF split at a+1."""
    if a <= 0:
        raise ValueError("a must be > 0")
    if x < 0:
        raise ValueError("x must be >= 0")
    if x == 0.0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gamma_p_series(a, x)
    return _gamma_q_contfrac(a, x)


def chi2_sf(x, df) -> float:
    """Upper-tail probability of the chi-square distribution."""
    if df < 1:
        raise ValueError("df must be >= 1")
    return gamma_q(0.5 * df, 0.5 * x)


def _normal_cdf(z) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


# -- tests ---------------------------------------------------------------


def friedman_test(table: ResultsTable):
    """Friedman chi-square over per-dataset average ranks.

    chi2 = 12n/(k(k+1)) * (sum_j Rbar_j^2 - k(k+1)^2/4), p from the
    chi-square distribution with k-1 degrees of freedom.
    """
    n = len(table.datasets)
    k = len(table.algorithms)
    if n < 2 or k < 3:
        raise ValueError("Friedman test needs >= 2 datasets and >= 3 algorithms")
    rbar = mean_ranks(table)
    stat = 12.0 * n / (k * (k + 1)) * (np.sum(rbar ** 2) - k * (k + 1) ** 2 / 4.0)
    stat = max(stat, 0.0)  # guard tiny negative rounding on identical columns
    return float(stat), chi2_sf(stat, k - 1)


def _signed_rank_statistic(a, b):
    """(W, doubled ranks, tie counts, m) after dropping zero differences."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("samples must be 1-D and equal length")
    d = a - b
    d = d[d != 0.0]
    m = d.shape[0]
    if m == 0:
        raise ValueError("all differences are zero")
    ranks = rank_average(np.abs(d))
    w_plus = ranks[d > 0].sum()
    w_minus = ranks[d < 0].sum()
    w = min(w_plus, w_minus)
    ranks2 = np.rint(2.0 * ranks).astype(np.int64)
    _, counts = np.unique(np.abs(d), return_counts=True)
    return w, ranks2, counts, m


def _wilcoxon_exact_p(w, ranks2, m) -> float:
    """P(min(W+, W-) <= w) over all 2^m equally likely sign assignments.

    Counts the doubled-rank sum distribution by dynamic programming; the
    counts are exact int64 (m <= 20 keeps them below 2^20).
    """
    total2 = int(ranks2.sum())
    counts = np.zeros(total2 + 1, dtype=np.int64)
    counts[0] = 1
    for r in ranks2:
        counts[r:] = counts[r:] + counts[:total2 + 1 - r]
    w2 = int(round(2.0 * w))
    favourable = 0
    for s in range(total2 + 1):
        if min(s, total2 - s) <= w2:
            favourable += int(counts[s])
    return favourable / float(2 ** m)


def wilcoxon_signed_rank(a, b):
    """Two-sided Wilcoxon signed-rank test of paired samples.

    Zero differences are dropped; absolute differences are ranked with
    average-rank ties; W = min(W+, W-).  For m <= 20 the p-value is the
    exact probability of a statistic at most W over all sign assignments;
    beyond that, a normal approximation with tie and continuity correction.
    """
    w, ranks2, tie_counts, m = _signed_rank_statistic(a, b)
    if m <= WILCOXON_EXACT_LIMIT:
        return float(w), _wilcoxon_exact_p(w, ranks2, m)
    mean = m * (m + 1) / 4.0
    var = m * (m + 1) * (2 * m + 1) / 24.0
    var -= float(np.sum(tie_counts ** 3 - tie_counts)) / 48.0
    z = (w - mean + 0.5) / math.sqrt(var)
    return float(w), min(1.0, 2.0 * _normal_cdf(z))


def holm_correction(pvalues, alpha=0.05):
    """Bonferroni-Holm step-down adjustment.

    Returns (adjusted p-values, reject flags) in the input order; adjusted
    values are monotone over the sorted order and never below the raw p.
    """
    p = np.asarray(pvalues, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("pvalues must be a nonempty 1-D vector")
    if np.any(p < 0) or np.any(p > 1) or not np.all(np.isfinite(p)):
        raise ValueError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    adjusted = np.empty(m, dtype=np.float64)
    running = 0.0
    for i, idx in enumerate(order):
        running = max(running, min(1.0, (m - i) * p[idx]))
        adjusted[idx] = running
    return adjusted, adjusted <= alpha


def repetition_stats(values):
    """(mean, sample standard deviation) of repeated measurements."""
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        raise ValueError("need at least two values")
    return float(v.mean()), float(v.std(ddof=1))


@dataclass
class ComparisonReport:
    algorithms: List[str]
    mean_ranks: np.ndarray
    friedman_statistic: float
    friedman_p: float
    pairwise_p: np.ndarray
    holm_adjusted: np.ndarray
    not_significantly_different: list
    alpha: float


def compare_algorithms(table: ResultsTable, alpha=0.05) -> ComparisonReport:
    """Mean ranks, Friedman omnibus, and Holm-corrected pairwise Wilcoxon.

    The correction family is all k(k-1)/2 algorithm pairs; identical
    columns (all differences zero) count as p = 1.  Pairs whose adjusted p
    exceeds alpha are reported as not significantly different.
    """
    k = len(table.algorithms)
    stat, p_omni = friedman_test(table)
    rbar = mean_ranks(table)
    pairs = [(i, j) for i in range(k) for j in range(i + 1, k)]
    raw = np.full((k, k), np.nan)
    for i, j in pairs:
        try:
            _, pv = wilcoxon_signed_rank(table.values[:, i], table.values[:, j])
        except ValueError:
            pv = 1.0  # identical performance on every dataset
        raw[i, j] = raw[j, i] = pv
    flat = np.array([raw[i, j] for i, j in pairs])
    adj_flat, reject = holm_correction(flat, alpha)
    adjusted = np.full((k, k), np.nan)
    nsd = []
    for idx, (i, j) in enumerate(pairs):
        adjusted[i, j] = adjusted[j, i] = adj_flat[idx]
        if not reject[idx]:
            nsd.append((table.algorithms[i], table.algorithms[j]))
    return ComparisonReport(list(table.algorithms), rbar, stat, p_omni, raw,
                            adjusted, nsd, alpha)

"""Internal and external clustering validity measures.

Internal: silhouette coefficient over a precomputed dissimilarity matrix
(singleton items score 0).  External: adjusted Rand index, adjusted mutual
information with the exact hypergeometric expected-MI term, and pairwise
precision / recall with their geometric mean.  Chance-adjusted scores are not
clamped; values below zero mean worse-than-chance agreement.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from fractions import Fraction

import numpy as np

from .errors import UndefinedSilhouette


def _as_dense_labels(labels) -> np.ndarray:
    arr = np.asarray(labels)
    _, inv = np.unique(arr, return_inverse=True)
    return inv.astype(np.int64)


def contingency(u, v) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Contingency counts n_ij plus row and column sums for two labelings."""
    u = _as_dense_labels(u)
    v = _as_dense_labels(v)
    if len(u) != len(v):
        raise ValueError(f"partitions disagree on item count: {len(u)} vs {len(v)}")
    r = int(u.max()) + 1 if len(u) else 0
    c = int(v.max()) + 1 if len(v) else 0
    table = np.zeros((r, c), dtype=np.int64)
    np.add.at(table, (u, v), 1)
    return table, table.sum(axis=1), table.sum(axis=0)


def _same_up_to_relabeling(u, v) -> bool:
    table, a, b = contingency(u, v)
    return bool(np.count_nonzero(table) == len(a) == len(b))


def silhouette(d: np.ndarray, labels) -> float:
    """Mean silhouette of a partition against a precomputed dissimilarity matrix.

    a(i) averages distances within the item's own cluster (excluding itself),
    b(i) is the smallest mean distance into any other cluster; items in
    singleton clusters contribute 0.  Raises :class:`UndefinedSilhouette` for
    partitions with fewer than two clusters or with only singleton clusters.
    """
    d = np.asarray(d, dtype=np.float64)
    labels = _as_dense_labels(labels)
    n = len(labels)
    if d.shape != (n, n):
        raise ValueError("dissimilarity matrix and labels disagree on item count")
    k = int(labels.max()) + 1 if n else 0
    if k < 2:
        raise UndefinedSilhouette("need at least two clusters")
    counts = np.bincount(labels, minlength=k)
    if counts.max() < 2:
        raise UndefinedSilhouette("every cluster is a singleton")

    onehot = np.zeros((n, k), dtype=np.float64)
    onehot[np.arange(n), labels] = 1.0
    sums = d @ onehot  # (n, k) total distance from item i into cluster k

    own = counts[labels]
    a = np.zeros(n)
    multi = own > 1
    a[multi] = sums[np.arange(n), labels][multi] / (own[multi] - 1)

    other = sums / np.maximum(counts, 1)[None, :]
    other[np.arange(n), labels] = np.inf
    b = other.min(axis=1)

    denom = np.maximum(a, b)
    s = np.zeros(n)
    ok = multi & (denom > 0)
    s[ok] = (b[ok] - a[ok]) / denom[ok]
    return float(s.mean())


def ari(u, v) -> float:
    """Hubert-Arabie adjusted Rand index (exact rational arithmetic inside)."""
    table, a, b = contingency(u, v)
    if _same_up_to_relabeling(u, v):
        return 1.0
    n = int(a.sum())
    index = sum(math.comb(int(x), 2) for x in table.ravel())
    sa = sum(math.comb(int(x), 2) for x in a)
    sb = sum(math.comb(int(x), 2) for x in b)
    total = math.comb(n, 2)
    if total == 0:
        return 0.0
    expected = Fraction(sa * sb, total)
    denom = Fraction(sa + sb, 2) - expected
    if denom == 0:
        return 0.0
    return float((index - expected) / denom)


def _entropy(counts: np.ndarray, n: int) -> float:
    p = counts[counts > 0] / n
    return float(-(p * np.log(p)).sum())


def mutual_information(u, v) -> float:
    table, a, b = contingency(u, v)
    n = int(a.sum())
    mi = 0.0
    for i, j in zip(*np.nonzero(table)):
        nij = int(table[i, j])
        mi += (nij / n) * math.log(n * nij / (int(a[i]) * int(b[j])))
    return mi


def expected_mutual_information(a: np.ndarray, b: np.ndarray, n: int) -> float:
    """E[MI] under the permutation (hypergeometric) model, exact summation."""
    lg = math.lgamma
    emi = 0.0
    for ai in (int(x) for x in a):
        for bj in (int(x) for x in b):
            lo = max(1, ai + bj - n)
            hi = min(ai, bj)
            for nij in range(lo, hi + 1):
                log_p = (
                    lg(ai + 1) + lg(bj + 1) + lg(n - ai + 1) + lg(n - bj + 1)
                    - lg(n + 1) - lg(nij + 1) - lg(ai - nij + 1)
                    - lg(bj - nij + 1) - lg(n - ai - bj + nij + 1)
                )
                emi += (nij / n) * math.log(n * nij / (ai * bj)) * math.exp(log_p)
    return emi


def ami(u, v) -> float:
    """Adjusted mutual information, arithmetic-mean normalization."""
    table, a, b = contingency(u, v)
    if _same_up_to_relabeling(u, v):
        return 1.0
    n = int(a.sum())
    mi = mutual_information(u, v)
    emi = expected_mutual_information(a, b, n)
    denom = 0.5 * (_entropy(a, n) + _entropy(b, n)) - emi
    if abs(denom) <= 1e-15:
        return 0.0
    return (mi - emi) / denom


def pairwise_pr_fmi(u_true, v_pred) -> tuple[float, float, float]:
    """Pairwise precision, recall, and their geometric mean over all item pairs.

    A side with zero co-clustered pairs scores 1.0 when the other side also
    has none (nothing to miss), else 0.0.
    """
    table, a, b = contingency(u_true, v_pred)
    tp = sum(math.comb(int(x), 2) for x in table.ravel())
    true_pairs = sum(math.comb(int(x), 2) for x in a)
    pred_pairs = sum(math.comb(int(x), 2) for x in b)

    def ratio(num, den, other_den):
        if den == 0:
            return 1.0 if other_den == 0 else 0.0
        return num / den

    precision = ratio(tp, pred_pairs, true_pairs)
    recall = ratio(tp, true_pairs, pred_pairs)
    return precision, recall, math.sqrt(precision * recall)


@dataclass(frozen=True)
class MetricsReport:
    ami: float
    ari: float
    fmi: float
    precision: float
    recall: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        return cls(**json.loads(text))


def evaluate(u_true, v_pred) -> MetricsReport:
    precision, recall, fmi = pairwise_pr_fmi(u_true, v_pred)
    return MetricsReport(
        ami=ami(u_true, v_pred),
        ari=ari(u_true, v_pred),
        fmi=fmi,
        precision=precision,
        recall=recall,
    )

"""Shared fixtures and independent oracles.

The oracles here deliberately avoid the library's own code paths: external
metrics are recomputed by explicit pair enumeration, expected mutual
information by permutation enumeration / Monte-Carlo, so the implementations
under test are checked against something they do not share arithmetic with.
"""

import itertools
import math
from pathlib import Path

import numpy as np
import pytest

from diestudy.synth import SynthSpec, generate_corpus


# ---------------------------------------------------------------------------
# Pair-counting oracle (explicit O(n^2) enumeration)
# ---------------------------------------------------------------------------

def pair_confusion(u, v):
    """(tp, fp, fn, tn) over all item pairs; u is reference, v is prediction."""
    u = list(u)
    v = list(v)
    tp = fp = fn = tn = 0
    for i, j in itertools.combinations(range(len(u)), 2):
        same_u = u[i] == u[j]
        same_v = v[i] == v[j]
        if same_u and same_v:
            tp += 1
        elif not same_u and same_v:
            fp += 1
        elif same_u and not same_v:
            fn += 1
        else:
            tn += 1
    return tp, fp, fn, tn


def ari_oracle(u, v):
    """Adjusted Rand via the pair-confusion form (Hubert-Arabie)."""
    tp, fp, fn, tn = pair_confusion(u, v)
    num = 2.0 * (tp * tn - fn * fp)
    den = (tp + fn) * (fn + tn) + (tp + fp) * (fp + tn)
    if den == 0:
        return 1.0 if fp == 0 and fn == 0 else 0.0
    return num / den


def pr_fmi_oracle(u_true, v_pred):
    tp, fp, fn, tn = pair_confusion(u_true, v_pred)
    pred_pairs = tp + fp
    true_pairs = tp + fn

    def ratio(num, den, other):
        if den == 0:
            return 1.0 if other == 0 else 0.0
        return num / den

    p = ratio(tp, pred_pairs, true_pairs)
    r = ratio(tp, true_pairs, pred_pairs)
    return p, r, math.sqrt(p * r)


# ---------------------------------------------------------------------------
# Mutual-information oracles
# ---------------------------------------------------------------------------

def mi_oracle(u, v):
    """MI from the joint label distribution, natural log."""
    u = list(u)
    v = list(v)
    n = len(u)
    joint = {}
    pu = {}
    pv = {}
    for a, b in zip(u, v):
        joint[(a, b)] = joint.get((a, b), 0) + 1
        pu[a] = pu.get(a, 0) + 1
        pv[b] = pv.get(b, 0) + 1
    mi = 0.0
    for (a, b), c in joint.items():
        mi += (c / n) * math.log((c / n) / ((pu[a] / n) * (pv[b] / n)))
    return mi


def emi_enumeration_oracle(u, v):
    """Exact E[MI] by averaging MI over every permutation of v's items."""
    v = list(v)
    total = 0.0
    count = 0
    for perm in itertools.permutations(v):
        total += mi_oracle(u, perm)
        count += 1
    return total / count


def emi_monte_carlo(u, v, n_samples, seed):
    """(estimate, standard error) of E[MI] from random permutations of v."""
    rng = np.random.default_rng(seed)
    v = np.asarray(list(v))
    vals = np.empty(n_samples)
    for s in range(n_samples):
        vals[s] = mi_oracle(u, rng.permutation(v))
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_samples))


def ami_oracle_exact(u, v):
    """AMI assembled from independently computed MI, E[MI], and entropies."""
    u_list, v_list = list(u), list(v)
    n = len(u_list)

    def entropy(labels):
        h = 0.0
        for c in {x: labels.count(x) for x in labels}.values():
            h -= (c / n) * math.log(c / n)
        return h

    table = {}
    for a, b in zip(u_list, v_list):
        table[(a, b)] = table.get((a, b), 0) + 1
    if len(table) == len(set(u_list)) == len(set(v_list)):
        return 1.0
    mi = mi_oracle(u_list, v_list)
    emi = emi_enumeration_oracle(u_list, v_list)
    denom = 0.5 * (entropy(u_list) + entropy(v_list)) - emi
    if abs(denom) <= 1e-15:
        return 0.0
    return (mi - emi) / denom


def random_partition_pair(n, rng):
    u = rng.integers(0, rng.integers(1, n + 1), n)
    v = rng.integers(0, rng.integers(1, n + 1), n)
    return u, v


# ---------------------------------------------------------------------------
# Shared synthetic corpora
# ---------------------------------------------------------------------------

@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """12 coins over 4 dies (one singleton), small images: fast unit-test corpus."""
    out = tmp_path_factory.mktemp("smallcorpus")
    spec = SynthSpec(n_dies=4, die_sizes=(4, 4, 3, 1), image_size=192, seed=11)
    corpus, gt = generate_corpus(spec, out)
    return corpus, gt, out


@pytest.fixture(scope="session")
def texture_pair():
    """Two views of one synthetic die plus one unrelated die pattern."""
    from diestudy.imops import warp_homography
    from diestudy.synth import _small_homography, die_pattern

    base = die_pattern(224, np.random.default_rng(3))
    h = _small_homography(224, 3.0, np.random.default_rng(4))
    warped = warp_homography(base, h, fill=28)
    other = die_pattern(224, np.random.default_rng(99))
    return base, warped, other

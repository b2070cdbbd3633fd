"""Robust inlier filtering of candidate correspondences.

A RANSAC loop scores each minimal-sample homography by the sum over
correspondences of a noise-scale-marginalized inlier weight (sigma-consensus
with a 2-DoF chi-square residual model), so no per-pair residual threshold is
ever tuned.  The best model is polished by iteratively reweighted least
squares under the same weights.  Empty inlier sets are an expected outcome
(most coin pairs share no die) and are reported, not raised.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from . import homography as hg

RESIDUAL_DOF = 2  # point transfer error


def quantile_multiplier(quantile: float) -> float:
    """k with P(chi2_2 <= k^2) = quantile; k*sigma_max is the inlier cutoff radius."""
    return math.sqrt(-2.0 * math.log(1.0 - quantile))


@dataclass(frozen=True)
class FilterConfig:
    sigma_max: float = 10.0
    confidence: float = 0.99
    max_iterations: int = 5000
    quantile: float = 0.99
    polish_rounds: int = 20
    weight_tol: float = 1e-6

    def __post_init__(self):
        if self.sigma_max <= 0:
            raise ValueError("sigma_max must be positive")
        if not (0.0 < self.confidence < 1.0) or not (0.0 < self.quantile < 1.0):
            raise ValueError("confidence and quantile must lie in (0, 1)")

    @property
    def k(self) -> float:
        return quantile_multiplier(self.quantile)

    def hash(self) -> str:
        payload = json.dumps(
            {
                "sigma_max": self.sigma_max,
                "confidence": self.confidence,
                "max_iterations": self.max_iterations,
                "quantile": self.quantile,
                "polish_rounds": self.polish_rounds,
                "weight_tol": self.weight_tol,
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass
class InlierReport:
    homography: np.ndarray | None
    inlier_mask: np.ndarray
    inlier_count: int
    iterations_used: int
    status: str  # "ok" | "not_enough_matches" | "no_model"

    @classmethod
    def empty(cls, n: int, status: str) -> "InlierReport":
        return cls(None, np.zeros(n, dtype=bool), 0, 0, status)


def marginal_weights(sq_err: np.ndarray, sigma_max: float, k: float) -> np.ndarray:
    """Inlier weight of each residual, marginalized over the unknown noise scale.

    With 2-DoF residuals the scale-conditional density integrates in closed
    form to a difference of upper incomplete gamma terms:

        w(r) = sqrt(pi/2)/sigma_max * (erfc(r / (sqrt(2) sigma_max)) - erfc(k / sqrt(2)))

    clipped to zero at and beyond the cutoff radius r = k * sigma_max.  The
    weight is nonincreasing in r and strictly positive below the cutoff.
    """
    r = np.sqrt(np.minimum(sq_err, np.finfo(np.float64).max))
    base = math.sqrt(math.pi / 2.0) / sigma_max
    tail = math.erfc(k / math.sqrt(2.0))
    w = base * (erfc(r / (math.sqrt(2.0) * sigma_max)) - tail)
    return np.maximum(w, 0.0)


def _needed_iterations(inlier_ratio: float, confidence: float, cap: int) -> int:
    if inlier_ratio <= 0.0:
        return cap
    p_good = inlier_ratio ** 4
    if p_good >= 1.0:
        return 1
    denom = math.log1p(-p_good)
    if denom >= 0.0:
        return cap
    return min(cap, max(1, int(math.ceil(math.log(1.0 - confidence) / denom))))


def _batch_size(n: int) -> int:
    # fixed per candidate count so results never depend on the host machine
    return int(np.clip(2_000_000 // max(n, 1), 32, 512))


def magsac_filter(corrs: np.ndarray, config: FilterConfig = FilterConfig(), seed: int = 0) -> InlierReport:
    """Filter (n, 4) candidate correspondences down to homography inliers.

    Fewer than 4 candidates, or no fittable sample, yield an empty mask with
    a status flag; downstream treats that as similarity zero.
    """
    corrs = np.asarray(corrs, dtype=np.float64).reshape(-1, 4)
    n = len(corrs)
    if n < 4:
        return InlierReport.empty(n, "not_enough_matches")

    rng = np.random.default_rng(seed)
    sigma_max = config.sigma_max
    k = config.k
    cutoff_sq = (k * sigma_max) ** 2

    best_score = -np.inf
    best_h = None
    best_ratio = 0.0
    needed = config.max_iterations
    done = 0
    bsz = _batch_size(n)

    while done < min(needed, config.max_iterations):
        b = min(bsz, config.max_iterations - done)
        # b*n uniform draws per batch keeps the stream independent of outcomes
        samples = np.argpartition(rng.random((b, n)), 3, axis=1)[:, :4]
        done += b
        src4 = corrs[samples][:, :, :2]
        dst4 = corrs[samples][:, :, 2:]
        good = hg.sample_degeneracy_mask(src4, dst4)
        if not good.any():
            continue
        h_all, ok = hg.fit_homographies_batch(src4[good], dst4[good])
        h_valid = h_all[ok]
        if len(h_valid) == 0:
            continue
        errs = hg.transfer_errors_batch(h_valid, corrs)
        scores = marginal_weights(errs, sigma_max, k).sum(axis=1)
        top = int(np.argmax(scores))
        if scores[top] > best_score:
            best_score = scores[top]
            best_h = h_valid[top]
            inl = int((errs[top] <= cutoff_sq).sum())
            best_ratio = inl / n
            needed = _needed_iterations(best_ratio, config.confidence, config.max_iterations)

    if best_h is None:
        return InlierReport.empty(n, "no_model")

    best_h = _polish(best_h, corrs, config, best_score)
    final_err = hg.symmetric_transfer_error(best_h, corrs)
    mask = final_err <= cutoff_sq
    return InlierReport(best_h, mask, int(mask.sum()), done, "ok")


def _polish(h: np.ndarray, corrs: np.ndarray, config: FilterConfig, score: float) -> np.ndarray:
    """Reweighted least-squares refinement; reverts if the marginal score drops."""
    sigma_max, k = config.sigma_max, config.k
    best_h, best_score = h, score
    weights = marginal_weights(hg.symmetric_transfer_error(h, corrs), sigma_max, k)
    try:
        refiner = hg.WeightedRefiner(corrs)
    except hg.Degenerate:
        return best_h
    for _ in range(config.polish_rounds):
        if np.count_nonzero(weights) < 4:
            break
        try:
            cur = refiner.fit(weights)
        except hg.Degenerate:
            break
        new_weights = marginal_weights(hg.symmetric_transfer_error(cur, corrs), sigma_max, k)
        new_score = float(new_weights.sum())
        if new_score > best_score:
            best_score = new_score
            best_h = cur
        delta = float(np.max(np.abs(new_weights - weights)))
        weights = new_weights
        if delta < config.weight_tol:
            break
    return best_h

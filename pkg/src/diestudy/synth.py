"""Deterministic synthetic corpora and planted-homography correspondence sets.

Every generated artifact ships its ground truth (die labels, true model, true
inlier mask), so tests never estimate an oracle from the system under test.
Die patterns are high-texture procedural stamps (relief shading, dots, bars,
arc segments) so the corner detector finds hundreds of keypoints per coin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Coin, Corpus, GroundTruth, MatchRecord, write_ground_truth, write_manifest
from .homography import fit_homography_dlt, projective_apply
from .imops import save_grayscale, warp_homography

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class SynthSpec:
    n_dies: int = 6
    coins_per_die: float = 4.0               # mean size of sampled non-singleton dies
    die_sizes: tuple[int, ...] | None = None  # explicit sizes override the sampler
    singleton_fraction: float = 0.0
    image_size: int = 256
    warp_magnitude: float = 3.0               # pixels of translation, scaled rotation/projective
    noise_sigma: float = 4.0                  # additive intensity noise
    wear_fraction: float = 0.15               # occlusion-patch budget per coin
    seed: int = 0

    def __post_init__(self):
        if self.n_dies < 1 or self.image_size < 64:
            raise ValueError("need at least one die and a 64px canvas")
        for frac in (self.singleton_fraction, self.wear_fraction):
            if not 0.0 <= frac <= 1.0:
                raise ValueError("fractions must lie in [0, 1]")
        if self.die_sizes is not None and len(self.die_sizes) != self.n_dies:
            raise ValueError("die_sizes must have n_dies entries")


def _resolve_die_sizes(spec: SynthSpec, rng: np.random.Generator) -> list[int]:
    if spec.die_sizes is not None:
        if any(s < 1 for s in spec.die_sizes):
            raise ValueError("every die needs at least one coin")
        return list(spec.die_sizes)
    n_singleton = int(round(spec.n_dies * spec.singleton_fraction))
    sizes = [1] * n_singleton
    for _ in range(spec.n_dies - n_singleton):
        sizes.append(1 + int(rng.poisson(max(spec.coins_per_die - 1.0, 0.0))))
    return sizes


def _upsample(grid: np.ndarray, size: int) -> np.ndarray:
    g = grid.shape[0]
    coords = np.linspace(0.0, g - 1.0, size)
    lo = np.floor(coords).astype(np.int64)
    hi = np.minimum(lo + 1, g - 1)
    f = coords - lo
    rows = grid[lo][:, lo] * (1 - f)[None, :] + grid[lo][:, hi] * f[None, :]
    rows_hi = grid[hi][:, lo] * (1 - f)[None, :] + grid[hi][:, hi] * f[None, :]
    return rows * (1 - f)[:, None] + rows_hi * f[:, None]


def die_pattern(size: int, rng: np.random.Generator) -> np.ndarray:
    """One die's stamp: a textured disc with deterministic random relief and glyphs."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    cx = cy = size / 2.0
    radius = size * 0.47
    img = np.full((size, size), 95.0)
    img += _upsample(rng.normal(0.0, 26.0, (9, 9)), size)

    for _ in range(48):
        ang = rng.uniform(0.0, TWO_PI)
        rad = radius * math.sqrt(rng.uniform(0.0, 0.85))
        px = cx + rad * math.cos(ang)
        py = cy + rad * math.sin(ang)
        val = (1.0 if rng.random() < 0.5 else -1.0) * rng.uniform(45.0, 95.0)
        dx = xx - px
        dy = yy - py
        kind = rng.integers(0, 3)
        if kind == 0:  # dot
            r = rng.uniform(2.0, 7.0)
            mask = dx * dx + dy * dy < r * r
        elif kind == 1:  # bar
            th = rng.uniform(0.0, math.pi)
            ux, uy = math.cos(th), math.sin(th)
            long = rng.uniform(8.0, 0.12 * size)
            wide = rng.uniform(2.0, 5.0)
            mask = (np.abs(dx * ux + dy * uy) < long / 2) & (np.abs(-dx * uy + dy * ux) < wide / 2)
        else:  # arc segment
            r0 = rng.uniform(6.0, radius * 0.75)
            thick = rng.uniform(2.0, 5.0)
            a0 = rng.uniform(0.0, TWO_PI)
            span = rng.uniform(0.6, 2.2)
            d = np.hypot(dx, dy)
            theta = np.mod(np.arctan2(dy, dx) - a0, TWO_PI)
            mask = (np.abs(d - r0) < thick) & (theta < span)
        img[mask] += val

    rr = np.hypot(xx - cx, yy - cy)
    img[np.abs(rr - radius) < 2.5] -= 55.0
    outside = rr > radius + 2.5
    img[outside] = 28.0
    return np.clip(img, 0.0, 255.0).astype(np.uint8)


def _small_homography(size: int, magnitude: float, rng: np.random.Generator) -> np.ndarray:
    c = size / 2.0
    rel = magnitude / 3.0
    theta = rng.normal(0.0, 0.02) * rel
    scale = 1.0 + rng.normal(0.0, 0.01) * rel
    tx, ty = rng.normal(0.0, magnitude, 2)
    p1, p2 = rng.normal(0.0, 1.2e-5, 2) * rel
    t_fwd = np.array([[1.0, 0.0, c + tx], [0.0, 1.0, c + ty], [0.0, 0.0, 1.0]])
    rot = np.array(
        [
            [scale * math.cos(theta), -scale * math.sin(theta), 0.0],
            [scale * math.sin(theta), scale * math.cos(theta), 0.0],
            [0.0, 0.0, 1.0],
        ]
    )
    proj = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [p1, p2, 1.0]])
    t_back = np.array([[1.0, 0.0, -c], [0.0, 1.0, -c], [0.0, 0.0, 1.0]])
    return t_fwd @ rot @ proj @ t_back


def _apply_wear(img: np.ndarray, wear_fraction: float, rng: np.random.Generator) -> np.ndarray:
    n_patches = int(round(wear_fraction * 12))
    if n_patches == 0:
        return img
    size = img.shape[0]
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    out = img.astype(np.float64)
    for _ in range(n_patches):
        px, py = rng.uniform(size * 0.15, size * 0.85, 2)
        ax = rng.uniform(size * 0.02, size * 0.07)
        ay = rng.uniform(size * 0.02, size * 0.07)
        th = rng.uniform(0.0, math.pi)
        dx = xx - px
        dy = yy - py
        u = dx * math.cos(th) + dy * math.sin(th)
        v = -dx * math.sin(th) + dy * math.cos(th)
        mask = (u / ax) ** 2 + (v / ay) ** 2 < 1.0
        out[mask] = rng.uniform(70.0, 160.0)
    return np.clip(out, 0.0, 255.0).astype(np.uint8)


def generate_corpus(spec: SynthSpec, out_dir) -> tuple[Corpus, GroundTruth]:
    """Write images + manifest.csv + ground_truth.csv under ``out_dir``.

    Bit-identical per seed; the standard CLI runs on the output unchanged.
    """
    out_dir = Path(out_dir)
    img_dir = out_dir / "images"
    img_dir.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng([spec.seed, 0xD1E])
    sizes = _resolve_die_sizes(spec, rng)
    patterns = [die_pattern(spec.image_size, np.random.default_rng([spec.seed, 17, d])) for d in range(spec.n_dies)]

    assignments = [(d, c) for d, n in enumerate(sizes) for c in range(n)]
    order = rng.permutation(len(assignments))

    coins: list[Coin] = []
    labels: dict[str, str] = {}
    for pos, idx in enumerate(order):
        die_idx, copy_idx = assignments[idx]
        coin_id = f"c{pos:04d}"
        coin_rng = np.random.default_rng([spec.seed, 29, die_idx, copy_idx])
        h = _small_homography(spec.image_size, spec.warp_magnitude, coin_rng)
        img = warp_homography(patterns[die_idx], h, fill=28)
        img = _apply_wear(img, spec.wear_fraction, coin_rng)
        if spec.noise_sigma > 0:
            noisy = img.astype(np.float64) + coin_rng.normal(0.0, spec.noise_sigma, img.shape)
            img = np.clip(noisy, 0.0, 255.0).astype(np.uint8)
        path = img_dir / f"{coin_id}.png"
        save_grayscale(img, path)
        coins.append(Coin(coin_id, path))
        labels[coin_id] = f"d{die_idx:03d}"

    corpus = Corpus(name=out_dir.name or "synthetic", coins=coins)
    gt = GroundTruth(labels)
    write_manifest(corpus, out_dir / "manifest.csv")
    write_ground_truth(gt, out_dir / "ground_truth.csv", ids=corpus.ids)
    return corpus, gt


# ---------------------------------------------------------------------------
# Planted correspondences (oracle for the robust filter)
# ---------------------------------------------------------------------------

def plant_correspondences(
    n_inliers: int,
    n_outliers: int,
    noise_sigma: float,
    frame: int = 512,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Correspondences from a known homography plus uniform outliers.

    Returns (coords (n,4), true homography, true inlier mask); rows are
    shuffled so inliers and outliers interleave.  Requires n_inliers >= 4.
    """
    if n_inliers < 4:
        raise ValueError("need at least 4 inliers to determine a homography")
    rng = np.random.default_rng(seed)
    margin = 0.1 * frame
    corners = np.array(
        [[margin, margin], [frame - margin, margin], [frame - margin, frame - margin], [margin, frame - margin]]
    )
    h_true = None
    for _ in range(32):
        jitter = rng.uniform(-0.08 * frame, 0.08 * frame, (4, 2))
        try:
            cand = fit_homography_dlt(corners, corners + jitter)
        except Exception:
            continue
        sv = np.linalg.svd(cand, compute_uv=False)
        if sv[0] / sv[-1] < 1e6:
            h_true = cand
            break
    if h_true is None:  # pragma: no cover - 32 draws of mild jitter always succeed
        raise RuntimeError("could not draw a well-conditioned homography")

    src = rng.uniform(margin, frame - margin, (n_inliers, 2))
    dst = projective_apply(h_true, src)
    if noise_sigma > 0:
        dst = dst + rng.normal(0.0, noise_sigma, dst.shape)
    inl = np.column_stack([src, dst])
    out = rng.uniform(0.0, frame, (n_outliers, 4))
    coords = np.vstack([inl, out])
    mask = np.concatenate([np.ones(n_inliers, bool), np.zeros(n_outliers, bool)])
    perm = rng.permutation(len(coords))
    return coords[perm], h_true, mask[perm]


def inject_spurious_matches(
    records: dict[tuple[str, str], MatchRecord],
    gt: GroundTruth,
    fraction: float,
    count_range: tuple[int, int],
    frame: int,
    seed: int = 0,
) -> dict[tuple[str, str], MatchRecord]:
    """Append geometry-free random correspondences to a fraction of cross-die pairs.

    Models background/edge mismatches: they inflate raw match counts but carry
    no common homography, so robust filtering should discard them.
    """
    rng = np.random.default_rng(seed)
    out = dict(records)
    cross = [p for p in sorted(records) if gt.labels[p[0]] != gt.labels[p[1]]]
    chosen = rng.random(len(cross)) < fraction
    lo, hi = count_range
    for pair, hit in zip(cross, chosen):
        if not hit:
            continue
        rec = records[pair]
        extra = rng.uniform(0.0, frame, (int(rng.integers(lo, hi + 1)), 4))
        out[pair] = MatchRecord(rec.a, rec.b, np.vstack([rec.correspondences, extra]), rec.filtered)
    return out

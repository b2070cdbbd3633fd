"""Built-in keypoint detector, binary descriptor, and pairwise matcher.

Corner detection is a segment test on a 16-pixel circle with non-max
suppression; each keypoint gets an intensity-centroid orientation and a
256-bit oriented binary test descriptor over a 4-level image pyramid.
Matching is mutual-nearest-neighbor under Hamming distance with an optional
ratio test.  The whole module is deterministic: no randomness anywhere.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .imops import integral_image, resize_bilinear

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class MatcherConfig:
    top_k: int = 5000
    fast_threshold: int = 20
    n_levels: int = 4
    scale_factor: float = 1.25
    ratio: float | None = 0.9  # None disables the ratio test; mutual NN always applies

    def __post_init__(self):
        if self.top_k < 1:
            raise ValueError("top_k must be positive")
        if self.ratio is not None and not (0.0 < self.ratio <= 1.0):
            raise ValueError("ratio must lie in (0, 1]")
        if self.n_levels < 1 or self.scale_factor < 1.0:
            raise ValueError("invalid pyramid settings")

    def hash(self) -> str:
        payload = json.dumps(
            {
                "top_k": self.top_k,
                "fast_threshold": self.fast_threshold,
                "n_levels": self.n_levels,
                "scale_factor": self.scale_factor,
                "ratio": self.ratio,
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass
class KeypointSet:
    xs: np.ndarray           # (k,) float64, level-0 pixels
    ys: np.ndarray
    responses: np.ndarray    # (k,) float64, corner score
    orientations: np.ndarray  # (k,) float64 radians
    descriptors: np.ndarray  # (k, 32) uint8
    top_k: int

    def __len__(self) -> int:
        return len(self.xs)

    @classmethod
    def empty(cls, top_k: int) -> "KeypointSet":
        z = np.zeros(0, dtype=np.float64)
        return cls(z, z.copy(), z.copy(), z.copy(), np.zeros((0, kernels.DESC_BYTES), dtype=np.uint8), top_k)


@dataclass
class Correspondences:
    idx_a: np.ndarray  # (n,) int64 indices into set A
    idx_b: np.ndarray
    dist: np.ndarray   # (n,) int32 Hamming bits

    def __len__(self) -> int:
        return len(self.idx_a)

    @classmethod
    def empty(cls) -> "Correspondences":
        return cls(np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0, np.int32))


def _detect_level(img: np.ndarray, threshold: int):
    """Keypoints at one pyramid level: (ys, xs, scores) inside the safe margin."""
    score = kernels.fast_score_map(img, threshold)
    keep = kernels.nms_mask(score)
    ys, xs = np.nonzero(keep)
    h, w = img.shape
    m = kernels.KP_MARGIN
    ok = (ys >= m) & (ys <= h - m - 1) & (xs >= m) & (xs <= w - m - 1)
    ys, xs = ys[ok].astype(np.int64), xs[ok].astype(np.int64)
    return ys, xs, score[ys, xs].astype(np.int64)


def detect_and_describe(image: np.ndarray, config: MatcherConfig = MatcherConfig()) -> KeypointSet:
    """Detect up to ``top_k`` keypoints and describe them.

    Selection is a prefix of the response-sorted candidate list (ties broken
    by level, then row, then column), so raising ``top_k`` only ever appends
    keypoints.  Images too small for the descriptor patch yield an empty set.
    """
    image = np.ascontiguousarray(image, dtype=np.uint8)
    per_level = []
    h0, w0 = image.shape
    for level in range(config.n_levels):
        s = config.scale_factor ** level
        h = int(round(h0 / s))
        w = int(round(w0 / s))
        if h < 2 * kernels.KP_MARGIN + 2 or w < 2 * kernels.KP_MARGIN + 2:
            continue
        img = image if level == 0 else resize_bilinear(image, h, w)
        ys, xs, scores = _detect_level(img, config.fast_threshold)
        if len(ys) == 0:
            continue
        per_level.append((level, img, ys, xs, scores))

    if not per_level:
        return KeypointSet.empty(config.top_k)

    levels = np.concatenate([np.full(len(e[2]), e[0], dtype=np.int64) for e in per_level])
    ys_all = np.concatenate([e[2] for e in per_level])
    xs_all = np.concatenate([e[3] for e in per_level])
    scores_all = np.concatenate([e[4] for e in per_level])

    order = np.lexsort((xs_all, ys_all, levels, -scores_all))
    order = order[: config.top_k]

    out_x = np.empty(len(order), dtype=np.float64)
    out_y = np.empty(len(order), dtype=np.float64)
    out_resp = scores_all[order].astype(np.float64)
    out_ori = np.empty(len(order), dtype=np.float64)
    out_desc = np.empty((len(order), kernels.DESC_BYTES), dtype=np.uint8)

    sel_level = levels[order]
    offsets = np.concatenate([[0], np.cumsum([len(e[2]) for e in per_level])])
    for li, (level, img, ys, xs, _) in enumerate(per_level):
        rows = np.nonzero(sel_level == level)[0]
        if len(rows) == 0:
            continue
        local = order[rows] - offsets[li]
        lys = ys[local]
        lxs = xs[local]
        bins = kernels.orientation_bins(img, lys, lxs)
        desc = kernels.brief_describe(integral_image(img), lys, lxs, bins)
        h, w = img.shape
        out_x[rows] = (lxs + 0.5) * (w0 / w) - 0.5
        out_y[rows] = (lys + 0.5) * (h0 / h) - 0.5
        out_ori[rows] = bins * (TWO_PI / kernels.N_ANGLE_BINS)
        out_desc[rows] = desc

    return KeypointSet(out_x, out_y, out_resp, out_ori, out_desc, config.top_k)


def _as_words(desc: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(desc).view(np.uint64).reshape(desc.shape[0], kernels.DESC_BYTES // 8)


def match_pair(a: KeypointSet, b: KeypointSet, ratio: float | None = 0.9) -> Correspondences:
    """Mutual nearest neighbors under Hamming distance, with optional ratio test.

    The unordered match set is symmetric: swapping the arguments mirrors the
    index pairs but never changes which keypoints are matched.
    """
    if len(a) == 0 or len(b) == 0:
        return Correspondences.empty()
    da = _as_words(a.descriptors)
    db = _as_words(b.descriptors)
    nn_ab, d1_ab, d2_ab = kernels.hamming_best2(da, db)
    nn_ba, d1_ba, d2_ba = kernels.hamming_best2(db, da)

    ia = np.arange(len(a), dtype=np.int64)
    jb = nn_ab
    mutual = nn_ba[jb] == ia
    if ratio is not None:
        mutual &= d1_ab <= ratio * d2_ab
        mutual &= d1_ba[jb] <= ratio * d2_ba[jb]
    ia = ia[mutual]
    jb = jb[mutual]
    return Correspondences(ia, jb, d1_ab[mutual])


def correspondence_coords(a: KeypointSet, b: KeypointSet, corr: Correspondences) -> np.ndarray:
    """Stack matched keypoint coordinates as an (n, 4) xa, ya, xb, yb array."""
    return np.column_stack(
        [a.xs[corr.idx_a], a.ys[corr.idx_a], b.xs[corr.idx_b], b.ys[corr.idx_b]]
    ).reshape(-1, 4)


# ---------------------------------------------------------------------------
# Keypoint dump format (debugging / exporter parity)
# ---------------------------------------------------------------------------

def keypoints_to_json(coin_id: str, kps: KeypointSet) -> str:
    obj = {
        "coin": coin_id,
        "kps": [
            [float(x), float(y), float(r), float(o)]
            for x, y, r, o in zip(kps.xs, kps.ys, kps.responses, kps.orientations)
        ],
        "desc_hex": [bytes(row).hex() for row in kps.descriptors],
    }
    return json.dumps(obj)


def keypoints_from_json(line: str) -> tuple[str, KeypointSet]:
    obj = json.loads(line)
    arr = np.asarray(obj["kps"], dtype=np.float64).reshape(-1, 4)
    desc = np.frombuffer(
        b"".join(bytes.fromhex(h) for h in obj["desc_hex"]), dtype=np.uint8
    ).reshape(-1, kernels.DESC_BYTES)
    return obj["coin"], KeypointSet(
        arr[:, 0].copy(), arr[:, 1].copy(), arr[:, 2].copy(), arr[:, 3].copy(), desc.copy(), top_k=max(len(arr), 1)
    )


def write_keypoint_file(path, items) -> None:
    with open(Path(path), "w") as fh:
        for coin_id, kps in items:
            fh.write(keypoints_to_json(coin_id, kps))
            fh.write("\n")


def read_keypoint_file(path) -> list[tuple[str, KeypointSet]]:
    out = []
    with open(Path(path)) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(keypoints_from_json(line))
    return out

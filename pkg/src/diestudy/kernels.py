"""Hot inner loops of the keypoint matcher, in two interchangeable backends.

Each kernel has a numba ``@njit`` variant and a vectorized numpy variant.
All arithmetic is integer (scores, moments, box sums, Hamming distances), so
the two backends return bit-identical arrays; ``DIESTUDY_NUMBA=0`` switches
to the numpy path without changing any result.  ``KERNELS`` exposes every
compiled variant so the benchmark can time both on one process.
"""

import numpy as np

from .accel import NUMBA_ENABLED

# 16-point Bresenham circle of radius 3, in clockwise angular order (dy, dx).
FAST_OFFSETS = np.array(
    [
        (-3, 0), (-3, 1), (-2, 2), (-1, 3), (0, 3), (1, 3), (2, 2), (3, 1),
        (3, 0), (3, -1), (2, -2), (1, -3), (0, -3), (-1, -3), (-2, -2), (-3, -1),
    ],
    dtype=np.int64,
)
FAST_ARC = 9  # minimum contiguous arc length for a corner

PATCH_RADIUS = 15        # intensity-centroid disc
PATTERN_RADIUS = 13      # binary test points stay inside this disc
BOX = 2                  # 5x5 box smoothing half-width for the binary tests
KP_MARGIN = 17           # keypoints need this border at their pyramid level
N_ANGLE_BINS = 30
N_TESTS = 256
DESC_BYTES = N_TESTS // 8


def _disc_offsets(radius: int) -> np.ndarray:
    dy, dx = np.mgrid[-radius : radius + 1, -radius : radius + 1]
    keep = dy * dy + dx * dx <= radius * radius
    return np.stack([dy[keep], dx[keep]], axis=1).astype(np.int64)


DISC_OFFSETS = _disc_offsets(PATCH_RADIUS)

_angles = np.arange(N_ANGLE_BINS, dtype=np.float64) * (2.0 * np.pi / N_ANGLE_BINS)
ANGLE_COS = np.cos(_angles)
ANGLE_SIN = np.sin(_angles)


def _make_test_pattern() -> np.ndarray:
    """Fixed 256-pair binary test pattern, Gaussian-spread inside the patch disc."""
    rng = np.random.default_rng(0x5EED_B17)
    pts = rng.normal(0.0, PATTERN_RADIUS / 2.0, size=(N_TESTS, 2, 2))
    norm = np.linalg.norm(pts, axis=2, keepdims=True)
    over = norm > PATTERN_RADIUS
    pts = np.where(over, pts * (PATTERN_RADIUS / np.maximum(norm, 1e-9)), pts)
    return pts  # (256, 2, 2) float (y, x) per endpoint


def _make_rotated_tables() -> np.ndarray:
    """Per-orientation-bin integer test coordinates, (bins, 256, 4) as y1,x1,y2,x2."""
    pattern = _make_test_pattern()
    tables = np.zeros((N_ANGLE_BINS, N_TESTS, 4), dtype=np.int64)
    for b in range(N_ANGLE_BINS):
        c, s = ANGLE_COS[b], ANGLE_SIN[b]
        for t in range(N_TESTS):
            for e in range(2):
                y, x = pattern[t, e]
                rx = int(np.floor(x * c - y * s + 0.5))
                ry = int(np.floor(x * s + y * c + 0.5))
                tables[b, t, 2 * e] = ry
                tables[b, t, 2 * e + 1] = rx
    return tables


BRIEF_TABLES = _make_rotated_tables()


# ---------------------------------------------------------------------------
# numpy backend
# ---------------------------------------------------------------------------

def _fast_score_map_numpy(img: np.ndarray, threshold: int) -> np.ndarray:
    h, w = img.shape
    out = np.zeros((h, w), dtype=np.int32)
    if h < 7 or w < 7:
        return out
    ci = img.astype(np.int32)
    center = ci[3 : h - 3, 3 : w - 3]
    diffs = np.empty((16, h - 6, w - 6), dtype=np.int32)
    for k, (dy, dx) in enumerate(FAST_OFFSETS):
        diffs[k] = ci[3 + dy : h - 3 + dy, 3 + dx : w - 3 + dx] - center
    bright = diffs > threshold
    dark = diffs < -threshold

    def has_arc(mask):
        acc = mask.copy()
        for s in range(1, FAST_ARC):
            acc &= np.roll(mask, -s, axis=0)
        return acc.any(axis=0)

    bscore = np.where(bright, diffs - threshold, 0).sum(axis=0, dtype=np.int32)
    dscore = np.where(dark, -diffs - threshold, 0).sum(axis=0, dtype=np.int32)
    bscore = np.where(has_arc(bright), bscore, 0)
    dscore = np.where(has_arc(dark), dscore, 0)
    out[3 : h - 3, 3 : w - 3] = np.maximum(bscore, dscore)
    return out


def _nms_mask_numpy(score: np.ndarray) -> np.ndarray:
    h, w = score.shape
    pad = np.full((h + 2, w + 2), -1, dtype=score.dtype)
    pad[1 : h + 1, 1 : w + 1] = score
    keep = score > 0
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            nb = pad[1 + dy : h + 1 + dy, 1 + dx : w + 1 + dx]
            if dy < 0 or (dy == 0 and dx < 0):
                keep &= score > nb  # strict against raster-earlier neighbors
            else:
                keep &= score >= nb
    return keep


def _orientation_bins_numpy(img: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    if len(ys) == 0:
        return np.zeros(0, dtype=np.int64)
    py = ys[:, None] + DISC_OFFSETS[:, 0][None, :]
    px = xs[:, None] + DISC_OFFSETS[:, 1][None, :]
    vals = img[py, px].astype(np.int64)
    m10 = (vals * DISC_OFFSETS[:, 1][None, :]).sum(axis=1)
    m01 = (vals * DISC_OFFSETS[:, 0][None, :]).sum(axis=1)
    proj = m10[:, None] * ANGLE_COS[None, :] + m01[:, None] * ANGLE_SIN[None, :]
    return np.argmax(proj, axis=1).astype(np.int64)


def _box5(ii: np.ndarray, y: np.ndarray, x: np.ndarray) -> np.ndarray:
    return ii[y + 3, x + 3] - ii[y - 2, x + 3] - ii[y + 3, x - 2] + ii[y - 2, x - 2]


def _brief_describe_numpy(ii: np.ndarray, ys: np.ndarray, xs: np.ndarray, bins: np.ndarray) -> np.ndarray:
    if len(ys) == 0:
        return np.zeros((0, DESC_BYTES), dtype=np.uint8)
    tab = BRIEF_TABLES[bins]  # (K, 256, 4)
    y1 = ys[:, None] + tab[:, :, 0]
    x1 = xs[:, None] + tab[:, :, 1]
    y2 = ys[:, None] + tab[:, :, 2]
    x2 = xs[:, None] + tab[:, :, 3]
    bits = _box5(ii, y1, x1) < _box5(ii, y2, x2)
    return np.packbits(bits, axis=1)


def _hamming_best2_numpy(da: np.ndarray, db: np.ndarray):
    ka, kb = da.shape[0], db.shape[0]
    idx = np.full(ka, -1, dtype=np.int64)
    d1 = np.full(ka, 1 << 30, dtype=np.int32)
    d2 = np.full(ka, 1 << 30, dtype=np.int32)
    if ka == 0 or kb == 0:
        return idx, d1, d2
    block = max(1, 4_000_000 // kb)
    for s in range(0, ka, block):
        chunk = da[s : s + block]
        x = chunk[:, None, :] ^ db[None, :, :]
        d = np.bitwise_count(x).sum(axis=2, dtype=np.int32)
        rows = np.arange(d.shape[0])
        best = np.argmin(d, axis=1)
        idx[s : s + block] = best
        d1[s : s + block] = d[rows, best]
        d[rows, best] = 1 << 30
        d2[s : s + block] = d.min(axis=1)
    return idx, d1, d2


_NUMPY_KERNELS = {
    "fast_score_map": _fast_score_map_numpy,
    "nms_mask": _nms_mask_numpy,
    "orientation_bins": _orientation_bins_numpy,
    "brief_describe": _brief_describe_numpy,
    "hamming_best2": _hamming_best2_numpy,
}

KERNELS = {"numpy": _NUMPY_KERNELS}


# ---------------------------------------------------------------------------
# numba backend (registered whenever numba imports, selected via accel flag)
# ---------------------------------------------------------------------------

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via DIESTUDY_NUMBA=0 instead
    _HAVE_NUMBA = False

if _HAVE_NUMBA:
    _M1 = np.uint64(0x5555555555555555)
    _M2 = np.uint64(0x3333333333333333)
    _M4 = np.uint64(0x0F0F0F0F0F0F0F0F)
    _H1 = np.uint64(0x0101010101010101)

    @njit(cache=True, nogil=True, inline="always")
    def _popcount64(v):
        v = v - ((v >> np.uint64(1)) & _M1)
        v = (v & _M2) + ((v >> np.uint64(2)) & _M2)
        v = (v + (v >> np.uint64(4))) & _M4
        return (v * _H1) >> np.uint64(56)

    @njit(cache=True, nogil=True)
    def _fast_score_map_numba(img, threshold, offs):
        h, w = img.shape
        out = np.zeros((h, w), dtype=np.int32)
        if h < 7 or w < 7:
            return out
        circ = np.empty(16, dtype=np.int32)
        for y in range(3, h - 3):
            for x in range(3, w - 3):
                c = np.int32(img[y, x])
                nb = 0
                nd = 0
                for k in range(0, 16, 4):
                    p = np.int32(img[y + offs[k, 0], x + offs[k, 1]])
                    if p - c > threshold:
                        nb += 1
                    elif c - p > threshold:
                        nd += 1
                if nb < 2 and nd < 2:
                    continue
                for k in range(16):
                    circ[k] = np.int32(img[y + offs[k, 0], x + offs[k, 1]]) - c
                bright_arc = False
                dark_arc = False
                run_b = 0
                run_d = 0
                for k in range(16 + FAST_ARC - 1):
                    d = circ[k % 16]
                    if d > threshold:
                        run_b += 1
                        if run_b >= FAST_ARC:
                            bright_arc = True
                    else:
                        run_b = 0
                    if d < -threshold:
                        run_d += 1
                        if run_d >= FAST_ARC:
                            dark_arc = True
                    else:
                        run_d = 0
                if not bright_arc and not dark_arc:
                    continue
                bs = np.int32(0)
                ds = np.int32(0)
                for k in range(16):
                    d = circ[k]
                    if d > threshold:
                        bs += d - threshold
                    elif -d > threshold:
                        ds += -d - threshold
                if not bright_arc:
                    bs = 0
                if not dark_arc:
                    ds = 0
                out[y, x] = max(bs, ds)
        return out

    @njit(cache=True, nogil=True)
    def _nms_mask_numba(score):
        h, w = score.shape
        keep = np.zeros((h, w), dtype=np.bool_)
        for y in range(h):
            for x in range(w):
                s = score[y, x]
                if s <= 0:
                    continue
                ok = True
                for dy in range(-1, 2):
                    for dx in range(-1, 2):
                        if dy == 0 and dx == 0:
                            continue
                        yy = y + dy
                        xx = x + dx
                        nb = np.int32(-1)
                        if 0 <= yy < h and 0 <= xx < w:
                            nb = score[yy, xx]
                        if dy < 0 or (dy == 0 and dx < 0):
                            if not s > nb:
                                ok = False
                        else:
                            if not s >= nb:
                                ok = False
                    if not ok:
                        break
                keep[y, x] = ok
        return keep

    @njit(cache=True, nogil=True)
    def _orientation_bins_numba(img, ys, xs, disc, cos_t, sin_t):
        k = ys.shape[0]
        bins = np.zeros(k, dtype=np.int64)
        nd = disc.shape[0]
        for i in range(k):
            m10 = np.int64(0)
            m01 = np.int64(0)
            for d in range(nd):
                v = np.int64(img[ys[i] + disc[d, 0], xs[i] + disc[d, 1]])
                m10 += v * disc[d, 1]
                m01 += v * disc[d, 0]
            best = m10 * cos_t[0] + m01 * sin_t[0]
            arg = 0
            for b in range(1, cos_t.shape[0]):
                p = m10 * cos_t[b] + m01 * sin_t[b]
                if p > best:
                    best = p
                    arg = b
            bins[i] = arg
        return bins

    @njit(cache=True, nogil=True)
    def _brief_describe_numba(ii, ys, xs, bins, tables):
        k = ys.shape[0]
        out = np.zeros((k, DESC_BYTES), dtype=np.uint8)
        for i in range(k):
            tab = tables[bins[i]]
            y = ys[i]
            x = xs[i]
            for t in range(N_TESTS):
                y1 = y + tab[t, 0]
                x1 = x + tab[t, 1]
                y2 = y + tab[t, 2]
                x2 = x + tab[t, 3]
                s1 = ii[y1 + 3, x1 + 3] - ii[y1 - 2, x1 + 3] - ii[y1 + 3, x1 - 2] + ii[y1 - 2, x1 - 2]
                s2 = ii[y2 + 3, x2 + 3] - ii[y2 - 2, x2 + 3] - ii[y2 + 3, x2 - 2] + ii[y2 - 2, x2 - 2]
                if s1 < s2:
                    out[i, t >> 3] |= np.uint8(1 << (7 - (t & 7)))
        return out

    @njit(cache=True, nogil=True)
    def _hamming_best2_numba(da, db):
        ka = da.shape[0]
        kb = db.shape[0]
        idx = np.full(ka, -1, dtype=np.int64)
        d1 = np.full(ka, 1 << 30, dtype=np.int32)
        d2 = np.full(ka, 1 << 30, dtype=np.int32)
        for i in range(ka):
            a0 = da[i, 0]
            a1 = da[i, 1]
            a2 = da[i, 2]
            a3 = da[i, 3]
            best = np.int32(1 << 30)
            second = np.int32(1 << 30)
            bj = np.int64(-1)
            for j in range(kb):
                d = np.int32(
                    _popcount64(a0 ^ db[j, 0])
                    + _popcount64(a1 ^ db[j, 1])
                    + _popcount64(a2 ^ db[j, 2])
                    + _popcount64(a3 ^ db[j, 3])
                )
                if d < best:
                    second = best
                    best = d
                    bj = j
                elif d < second:
                    second = d
            idx[i] = bj
            d1[i] = best
            d2[i] = second
        return idx, d1, d2

    KERNELS["numba"] = {
        "fast_score_map": lambda img, threshold: _fast_score_map_numba(img, threshold, FAST_OFFSETS),
        "nms_mask": _nms_mask_numba,
        "orientation_bins": lambda img, ys, xs: _orientation_bins_numba(
            img, ys, xs, DISC_OFFSETS, ANGLE_COS, ANGLE_SIN
        ),
        "brief_describe": lambda ii, ys, xs, bins: _brief_describe_numba(ii, ys, xs, bins, BRIEF_TABLES),
        "hamming_best2": _hamming_best2_numba,
    }


_active = KERNELS["numba" if (NUMBA_ENABLED and "numba" in KERNELS) else "numpy"]

fast_score_map = _active["fast_score_map"]
nms_mask = _active["nms_mask"]
orientation_bins = _active["orientation_bins"]
brief_describe = _active["brief_describe"]
hamming_best2 = _active["hamming_best2"]

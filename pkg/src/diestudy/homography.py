"""Plane-projective fitting primitives for the robust match filter.

``fit_homography_dlt`` is the (optionally weighted) normalized direct linear
transform; batched variants fit one homography per minimal sample so the
consensus loop stays vectorized.  Residuals are symmetric transfer errors in
squared pixels.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import Degenerate

CONDITION_BOUND = 1e12
_RANK_TOL = 1e-9
_W_EPS = 1e-12


def normalize_points(pts: np.ndarray):
    """Hartley normalization: centroid to origin, mean distance sqrt(2)."""
    pts = np.asarray(pts, dtype=np.float64)
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    mean_dist = np.sqrt((centered ** 2).sum(axis=1)).mean()
    if mean_dist <= 0:
        raise Degenerate("all points coincide")
    s = np.sqrt(2.0) / mean_dist
    t = np.array([[s, 0.0, -s * centroid[0]], [0.0, s, -s * centroid[1]], [0.0, 0.0, 1.0]])
    return centered * s, t


def _design_matrix(src: np.ndarray, dst: np.ndarray, weights=None) -> np.ndarray:
    n = len(src)
    a = np.zeros((2 * n, 9), dtype=np.float64)
    x, y = src[:, 0], src[:, 1]
    u, v = dst[:, 0], dst[:, 1]
    a[0::2, 3] = -x
    a[0::2, 4] = -y
    a[0::2, 5] = -1.0
    a[0::2, 6] = v * x
    a[0::2, 7] = v * y
    a[0::2, 8] = v
    a[1::2, 0] = x
    a[1::2, 1] = y
    a[1::2, 2] = 1.0
    a[1::2, 6] = -u * x
    a[1::2, 7] = -u * y
    a[1::2, 8] = -u
    if weights is not None:
        w = np.sqrt(np.asarray(weights, dtype=np.float64))
        a *= np.repeat(w, 2)[:, None]
    return a


def _finalize(h: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(h)):
        raise Degenerate("non-finite homography")
    if abs(h[2, 2]) > _W_EPS:
        h = h / h[2, 2]
    sv = np.linalg.svd(h, compute_uv=False)
    if sv[-1] <= 0 or sv[0] / sv[-1] > CONDITION_BOUND:
        raise Degenerate("homography is not invertible within the condition bound")
    return h


def fit_homography_dlt(src: np.ndarray, dst: np.ndarray, weights=None) -> np.ndarray:
    """Least-squares homography mapping ``src`` points onto ``dst``.

    Raises :class:`Degenerate` when fewer than 4 correspondences are given,
    when the design matrix is rank-deficient (e.g. 3 of 4 points collinear),
    or when the solution is not invertible within the condition bound.
    """
    src = np.asarray(src, dtype=np.float64).reshape(-1, 2)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 2)
    if len(src) != len(dst):
        raise ValueError("src and dst must pair up")
    if len(src) < 4:
        raise Degenerate(f"need at least 4 correspondences, got {len(src)}")
    src_n, t_src = normalize_points(src)
    dst_n, t_dst = normalize_points(dst)
    a = _design_matrix(src_n, dst_n, weights)
    _, s, vt = np.linalg.svd(a, full_matrices=True)
    # a determined homography needs rank 8: compare the 8th singular value
    if len(s) < 8 or s[7] <= _RANK_TOL * s[0]:
        raise Degenerate("design matrix is rank-deficient")
    h_n = vt[-1].reshape(3, 3)
    h = np.linalg.inv(t_dst) @ h_n @ t_src
    return _finalize(h)


class WeightedRefiner:
    """Reusable weighted DLT over a fixed correspondence set.

    Normalization and the unweighted design matrix are computed once, so each
    reweighted round costs one 9x9 eigendecomposition.
    """

    def __init__(self, corrs: np.ndarray):
        corrs = np.asarray(corrs, dtype=np.float64).reshape(-1, 4)
        src_n, t_src = normalize_points(corrs[:, :2])
        dst_n, t_dst = normalize_points(corrs[:, 2:])
        self._t_src = t_src
        self._t_dst_inv = np.linalg.inv(t_dst)
        self._a0 = _design_matrix(src_n, dst_n)

    def fit(self, weights: np.ndarray) -> np.ndarray:
        a = self._a0 * np.repeat(np.sqrt(weights), 2)[:, None]
        ata = a.T @ a
        w, v = np.linalg.eigh(ata)
        if w[1] <= (_RANK_TOL ** 2) * max(w[-1], 0.0):
            raise Degenerate("weighted design matrix is rank-deficient")
        h = self._t_dst_inv @ v[:, 0].reshape(3, 3) @ self._t_src
        return _finalize(h)


def projective_apply(h: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Apply ``h`` to (n, 2) points; rows mapping near infinity come back inf."""
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
    p = h @ np.column_stack([pts, np.ones(len(pts))]).T
    w = p[2]
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (p[:2] / w).T
    out[np.abs(w) < _W_EPS] = np.inf
    return out


def symmetric_transfer_error(h: np.ndarray, corrs: np.ndarray) -> np.ndarray:
    """Squared forward-plus-backward transfer error per correspondence (n, 4)."""
    corrs = np.asarray(corrs, dtype=np.float64).reshape(-1, 4)
    src = corrs[:, :2]
    dst = corrs[:, 2:]
    fwd = projective_apply(h, src) - dst
    bwd = projective_apply(np.linalg.inv(h), dst) - src
    with np.errstate(over="ignore", invalid="ignore"):
        err = (fwd ** 2).sum(axis=1) + (bwd ** 2).sum(axis=1)
    return np.where(np.isfinite(err), err, np.inf)


# ---------------------------------------------------------------------------
# Batched minimal-sample fitting for the consensus loop
# ---------------------------------------------------------------------------

_OMIT_ONE = ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2))
_TRI_I = np.array([t[0] for t in _OMIT_ONE])
_TRI_J = np.array([t[1] for t in _OMIT_ONE])
_TRI_K = np.array([t[2] for t in _OMIT_ONE])
_TRI_M = np.arange(4)


def sample_degeneracy_mask(src4: np.ndarray, dst4: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    """Accept 4-point samples whose source and destination quadrilaterals have
    non-vanishing area and are in convex position.

    Works on (b, 4, 2) stacks and returns a (b,) bool mask.  Near-collinear
    triples (relative sine below ``tol``) and points inside the triangle of
    the other three are rejected; both keep the minimal fit numerically sane.
    """

    def cross(u, v):
        return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]

    def quad_ok(q):
        pi = q[:, _TRI_I]
        pj = q[:, _TRI_J]
        pk = q[:, _TRI_K]
        pm = q[:, _TRI_M]
        u = pj - pi
        v = pk - pi
        c = cross(u, v)  # (b, 4) omit-one triangle areas (x2)
        thin = c * c <= (tol * tol) * (u ** 2).sum(axis=2) * (v ** 2).sum(axis=2)
        c1 = cross(u, pm - pi)
        c2 = cross(pk - pj, pm - pj)
        c3 = cross(pi - pk, pm - pk)
        inside = ((c1 > 0) & (c2 > 0) & (c3 > 0)) | ((c1 < 0) & (c2 < 0) & (c3 < 0))
        return ~(thin.any(axis=1) | inside.any(axis=1))

    return quad_ok(np.asarray(src4, dtype=np.float64)) & quad_ok(np.asarray(dst4, dtype=np.float64))


def _unit_square_to_quads(q: np.ndarray) -> np.ndarray:
    """Homographies mapping the unit square corners onto each (b, 4, 2) quad.

    Closed-form projective interpolation; callers must have rejected quads
    with collinear triples (the shared denominator is twice a triangle area).
    """
    x0, x1, x2, x3 = q[:, 0, 0], q[:, 1, 0], q[:, 2, 0], q[:, 3, 0]
    y0, y1, y2, y3 = q[:, 0, 1], q[:, 1, 1], q[:, 2, 1], q[:, 3, 1]
    dx1 = x1 - x2
    dy1 = y1 - y2
    dx2 = x3 - x2
    dy2 = y3 - y2
    sx = x0 - x1 + x2 - x3
    sy = y0 - y1 + y2 - y3
    den = dx1 * dy2 - dx2 * dy1
    with np.errstate(divide="ignore", invalid="ignore"):
        g = (sx * dy2 - dx2 * sy) / den
        h = (dx1 * sy - sx * dy1) / den
    out = np.empty((q.shape[0], 3, 3), dtype=np.float64)
    out[:, 0, 0] = x1 - x0 + g * x1
    out[:, 0, 1] = x3 - x0 + h * x3
    out[:, 0, 2] = x0
    out[:, 1, 0] = y1 - y0 + g * y1
    out[:, 1, 1] = y3 - y0 + h * y3
    out[:, 1, 2] = y0
    out[:, 2, 0] = g
    out[:, 2, 1] = h
    out[:, 2, 2] = 1.0
    return out


def _adjugate3(m: np.ndarray) -> np.ndarray:
    """Batched 3x3 adjugate: inverse up to scale, which projectively is the inverse."""
    a, b, c = m[:, 0, 0], m[:, 0, 1], m[:, 0, 2]
    d, e, f = m[:, 1, 0], m[:, 1, 1], m[:, 1, 2]
    g, h, i = m[:, 2, 0], m[:, 2, 1], m[:, 2, 2]
    adj = np.empty_like(m)
    adj[:, 0, 0] = e * i - f * h
    adj[:, 0, 1] = c * h - b * i
    adj[:, 0, 2] = b * f - c * e
    adj[:, 1, 0] = f * g - d * i
    adj[:, 1, 1] = a * i - c * g
    adj[:, 1, 2] = c * d - a * f
    adj[:, 2, 0] = d * h - e * g
    adj[:, 2, 1] = b * g - a * h
    adj[:, 2, 2] = a * e - b * d
    return adj


def _det3(m: np.ndarray) -> np.ndarray:
    return (
        m[:, 0, 0] * (m[:, 1, 1] * m[:, 2, 2] - m[:, 1, 2] * m[:, 2, 1])
        - m[:, 0, 1] * (m[:, 1, 0] * m[:, 2, 2] - m[:, 1, 2] * m[:, 2, 0])
        + m[:, 0, 2] * (m[:, 1, 0] * m[:, 2, 1] - m[:, 1, 1] * m[:, 2, 0])
    )


def fit_homographies_batch(src4: np.ndarray, dst4: np.ndarray):
    """Interpolating homographies for a (b, 4, 2) stack of minimal samples.

    Exact 4-point fit via unit-square quad mappings (no linear algebra calls):
    H = Q(dst) @ adj(Q(src)).  Returns (h, ok); rows whose quads are
    degenerate, non-finite, or ill-conditioned are marked invalid.
    """
    b = src4.shape[0]
    if b == 0:
        return np.zeros((0, 3, 3), dtype=np.float64), np.zeros(0, dtype=bool)
    q_src = _unit_square_to_quads(np.asarray(src4, dtype=np.float64))
    q_dst = _unit_square_to_quads(np.asarray(dst4, dtype=np.float64))
    h = q_dst @ _adjugate3(q_src)

    scale = h[:, 2, 2]
    scale = np.where(np.abs(scale) > _W_EPS, scale, 1.0)
    h = h / scale[:, None, None]
    finite = np.isfinite(h).all(axis=(1, 2))
    h = np.where(finite[:, None, None], h, np.eye(3))
    # determinant of the Frobenius-normalized matrix bounds the 2-norm
    # condition number: cond <= sqrt(27) / |det(H / ||H||_F)|
    frob = np.sqrt((h ** 2).sum(axis=(1, 2)))
    det_n = np.abs(_det3(h)) / np.maximum(frob, _W_EPS) ** 3
    ok = finite & (det_n > math.sqrt(27.0) / CONDITION_BOUND)
    return h, ok


def transfer_errors_batch(h: np.ndarray, corrs: np.ndarray) -> np.ndarray:
    """Symmetric transfer errors for a (b, 3, 3) homography stack -> (b, n)."""
    corrs = np.asarray(corrs, dtype=np.float64).reshape(-1, 4)
    src = np.column_stack([corrs[:, :2], np.ones(len(corrs))])
    dst = np.column_stack([corrs[:, 2:], np.ones(len(corrs))])
    hinv = np.linalg.inv(h)

    def half(hs, pts_h, target):
        p = np.matmul(hs, pts_h.T)  # (b, 3, n)
        w = p[:, 2, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            ex = p[:, 0, :] / w - target[None, :, 0]
            ey = p[:, 1, :] / w - target[None, :, 1]
        err = ex * ex + ey * ey
        err[np.abs(w) < _W_EPS] = np.inf
        return err

    with np.errstate(over="ignore", invalid="ignore"):
        e = half(h, src, corrs[:, 2:]) + half(hinv, dst, corrs[:, :2])
    return np.where(np.isfinite(e), e, np.inf)

"""Small grayscale image operations shared by the matcher and the synthetic generator.

Everything here is plain numpy on uint8 buffers; both acceleration backends
reuse these helpers so pyramids and warps are identical bit for bit.
"""

from pathlib import Path

import numpy as np
from PIL import Image


def load_grayscale(path) -> np.ndarray:
    """Decode an image file to a 2-D uint8 luminance buffer."""
    with Image.open(Path(path)) as im:
        return np.asarray(im.convert("L"), dtype=np.uint8)


def save_grayscale(img: np.ndarray, path) -> None:
    Image.fromarray(np.asarray(img, dtype=np.uint8), mode="L").save(Path(path))


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with half-pixel centers, rounded back to uint8."""
    h, w = img.shape
    if out_h <= 0 or out_w <= 0:
        return np.zeros((max(out_h, 0), max(out_w, 0)), dtype=np.uint8)
    sy = h / out_h
    sx = w / out_w
    ys = (np.arange(out_h, dtype=np.float64) + 0.5) * sy - 0.5
    xs = (np.arange(out_w, dtype=np.float64) + 0.5) * sx - 0.5
    ys = np.clip(ys, 0.0, h - 1.0)
    xs = np.clip(xs, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    img = img.astype(np.float64)
    top = img[y0][:, x0] * (1 - fx) + img[y0][:, x1] * fx
    bot = img[y1][:, x0] * (1 - fx) + img[y1][:, x1] * fx
    out = top * (1 - fy) + bot * fy
    return np.floor(out + 0.5).clip(0, 255).astype(np.uint8)


def warp_homography(img: np.ndarray, h_mat: np.ndarray, out_shape=None, fill: int = 0) -> np.ndarray:
    """Warp ``img`` by the 3x3 homography ``h_mat`` (output pixel -> source via inverse map)."""
    h, w = img.shape
    if out_shape is None:
        out_shape = (h, w)
    oh, ow = out_shape
    hinv = np.linalg.inv(np.asarray(h_mat, dtype=np.float64))
    yy, xx = np.mgrid[0:oh, 0:ow]
    ones = np.ones_like(xx, dtype=np.float64)
    pts = np.stack([xx.astype(np.float64), yy.astype(np.float64), ones])
    src = hinv @ pts.reshape(3, -1)
    with np.errstate(divide="ignore", invalid="ignore"):
        sx = src[0] / src[2]
        sy = src[1] / src[2]
    valid = np.isfinite(sx) & np.isfinite(sy)
    valid &= (sx >= 0) & (sx <= w - 1) & (sy >= 0) & (sy <= h - 1)
    sx = np.where(valid, sx, 0.0)
    sy = np.where(valid, sy, 0.0)
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = sx - x0
    fy = sy - y0
    img_f = img.astype(np.float64)
    val = (
        img_f[y0, x0] * (1 - fx) * (1 - fy)
        + img_f[y0, x1] * fx * (1 - fy)
        + img_f[y1, x0] * (1 - fx) * fy
        + img_f[y1, x1] * fx * fy
    )
    out = np.floor(val + 0.5)
    out[~valid] = fill
    return out.clip(0, 255).astype(np.uint8).reshape(oh, ow)


def integral_image(img: np.ndarray) -> np.ndarray:
    """Summed-area table with a leading zero row/column, int64."""
    ii = np.zeros((img.shape[0] + 1, img.shape[1] + 1), dtype=np.int64)
    np.cumsum(np.cumsum(img, axis=0, dtype=np.int64), axis=1, out=ii[1:, 1:])
    return ii

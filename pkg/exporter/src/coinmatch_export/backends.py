"""Matching backends.

``xfeat`` (default) runs the pretrained accelerated-features model through
torch.hub and needs torch plus downloadable weights.  ``ncc`` is a
dependency-free deterministic fallback: grid keypoints on textured spots,
patch descriptors, normalized cross-correlation with mutual nearest
neighbors.  Both return raw candidate matches; robust filtering stays in the
consuming pipeline so ablations compare like for like.
"""

from __future__ import annotations

import numpy as np
from PIL import Image


class NccBackend:
    """Grid keypoints + normalized patch correlation, mutual nearest neighbor."""

    name = "ncc"

    def __init__(self, top_k: int = 5000, stride: int = 8, patch: int = 13, min_sim: float = 0.6):
        self.top_k = top_k
        self.stride = stride
        self.patch = patch
        self.min_sim = min_sim

    def features(self, image: Image.Image):
        img = np.asarray(image.convert("L"), dtype=np.float64)
        h, w = img.shape
        r = self.patch // 2
        ys = np.arange(r, h - r, self.stride)
        xs = np.arange(r, w - r, self.stride)
        if len(ys) == 0 or len(xs) == 0:
            return np.zeros((0, 2)), np.zeros((0, self.patch * self.patch), dtype=np.float32)
        gy, gx = np.meshgrid(ys, xs, indexing="ij")
        pts = np.column_stack([gx.ravel(), gy.ravel()])
        offs = np.arange(-r, r + 1)
        # gather all patches at once: (n, patch, patch)
        patches = img[pts[:, 1][:, None, None] + offs[None, :, None], pts[:, 0][:, None, None] + offs[None, None, :]]
        flat = patches.reshape(len(pts), -1)
        flat = flat - flat.mean(axis=1, keepdims=True)
        norm = np.linalg.norm(flat, axis=1)
        textured = norm > 1e-3
        pts, flat, norm = pts[textured], flat[textured], norm[textured]
        order = np.argsort(-norm, kind="stable")[: self.top_k]
        pts, flat, norm = pts[order], flat[order], norm[order]
        desc = (flat / norm[:, None]).astype(np.float32)
        return pts.astype(np.float64), desc

    def match(self, fa, fb) -> np.ndarray:
        pa, da = fa
        pb, db = fb
        if len(pa) == 0 or len(pb) == 0:
            return np.zeros((0, 4))
        sim = da @ db.T
        nn_ab = np.argmax(sim, axis=1)
        nn_ba = np.argmax(sim, axis=0)
        ia = np.arange(len(pa))
        keep = (nn_ba[nn_ab] == ia) & (sim[ia, nn_ab] >= self.min_sim)
        ia = ia[keep]
        jb = nn_ab[keep]
        return np.column_stack([pa[ia], pb[jb]]).astype(np.float64)


class XFeatBackend:
    """Pretrained accelerated-features matcher via torch.hub (no retraining)."""

    name = "xfeat"
    HUB_REPO = "verlab/accelerated_features"

    def __init__(self, top_k: int = 5000, device: str = "cpu", min_cossim: float = -1.0):
        self.top_k = top_k
        self.device = device
        self.min_cossim = min_cossim
        try:
            import torch

            self._torch = torch
            self._model = torch.hub.load(self.HUB_REPO, "XFeat", pretrained=True, top_k=top_k)
            if hasattr(self._model, "to"):
                self._model = self._model.to(device)
        except Exception as exc:  # torch missing, no network, bad weights ...
            raise RuntimeError(
                "could not load the pretrained xfeat model via torch.hub "
                f"({exc}); install torch with network access or use --backend ncc"
            ) from exc

    def _to_tensor(self, image: Image.Image):
        arr = np.asarray(image.convert("RGB"), dtype=np.float32) / 255.0
        t = self._torch.tensor(arr).permute(2, 0, 1)[None]
        return t.to(self.device)

    def features(self, image: Image.Image):
        out = self._model.detectAndCompute(self._to_tensor(image), top_k=self.top_k)[0]
        return out["keypoints"], out["descriptors"]

    def match(self, fa, fb) -> np.ndarray:
        kp_a, desc_a = fa
        kp_b, desc_b = fb
        idx0, idx1 = self._model.match(desc_a, desc_b, min_cossim=self.min_cossim)
        pts_a = kp_a[idx0].cpu().numpy()
        pts_b = kp_b[idx1].cpu().numpy()
        return np.column_stack([pts_a, pts_b]).astype(np.float64)


BACKENDS = {"ncc": NccBackend, "xfeat": XFeatBackend}


def make_backend(name: str, top_k: int, device: str = "cpu"):
    if name not in BACKENDS:
        raise ValueError(f"unknown backend {name!r} (choose from {sorted(BACKENDS)})")
    if name == "xfeat":
        return XFeatBackend(top_k=top_k, device=device)
    return NccBackend(top_k=top_k)

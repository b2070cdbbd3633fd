"""Toy corpora built with PIL/numpy only; no pipeline imports in fixtures."""

import csv

import numpy as np
import pytest
from PIL import Image


def texture(seed, size=160):
    """Deterministic high-texture grayscale test image."""
    rng = np.random.default_rng(seed)
    img = np.full((size, size), 120.0)
    yy, xx = np.mgrid[0:size, 0:size]
    for _ in range(45):
        cy, cx = rng.uniform(10, size - 10, 2)
        r = rng.uniform(2.0, 9.0)
        val = rng.uniform(40.0, 110.0) * (1 if rng.random() < 0.5 else -1)
        img[(yy - cy) ** 2 + (xx - cx) ** 2 < r * r] += val
    return Image.fromarray(np.clip(img, 0, 255).astype(np.uint8), mode="L")


def shifted(image, dx, dy):
    return image.transform(image.size, Image.AFFINE, (1, 0, -dx, 0, 1, -dy), resample=Image.BILINEAR)


def write_corpus(root, images):
    root.mkdir(parents=True, exist_ok=True)
    rows = []
    for coin_id, img in images:
        path = root / f"{coin_id}.png"
        img.save(path)
        rows.append((coin_id, path.name))
    with open(root / "manifest.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["coin_id", "image_path"])
        writer.writerows(rows)
    return root / "manifest.csv"


@pytest.fixture(scope="session")
def toy_corpus(tmp_path_factory):
    """5 coins, two groups: three shifted views of one stamp, two of another."""
    root = tmp_path_factory.mktemp("toy")
    a = texture(1)
    b = texture(2)
    manifest = write_corpus(
        root,
        [
            ("a0", a),
            ("a1", shifted(a, 2.0, -1.0)),
            ("a2", shifted(a, -1.5, 2.5)),
            ("b0", b),
            ("b1", shifted(b, 1.0, 1.5)),
        ],
    )
    groups = {"a0": "A", "a1": "A", "a2": "A", "b0": "B", "b1": "B"}
    return manifest, groups

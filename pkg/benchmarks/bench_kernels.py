#!/usr/bin/env python3
"""Benchmark the matcher hot kernels: numba JIT vs pure-numpy fallback.

Both backends are bit-identical (verified here on every run); this script
only measures speed. Example:

    python benchmarks/bench_kernels.py --size 384 --top-k 1200 --repeat 5
"""

import argparse
import time

import numpy as np

from diestudy import kernels
from diestudy.imops import integral_image
from diestudy.synth import die_pattern


def timeit(fn, repeat):
    fn()  # warmup (includes JIT compilation for the numba backend)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--size", type=int, default=384, help="synthetic image side length")
    parser.add_argument("--top-k", type=int, default=1200, help="keypoints per side for matching")
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    if "numba" not in kernels.KERNELS:
        print("numba is not importable; only the numpy backend can be timed")

    img = die_pattern(args.size, np.random.default_rng(args.seed))
    score = kernels.KERNELS["numpy"]["fast_score_map"](img, 20)
    mask = kernels.KERNELS["numpy"]["nms_mask"](score)
    ys, xs = np.nonzero(mask)
    m = kernels.KP_MARGIN
    keep = (ys >= m) & (ys < img.shape[0] - m) & (xs >= m) & (xs < img.shape[1] - m)
    ys = ys[keep].astype(np.int64)[: args.top_k]
    xs = xs[keep].astype(np.int64)[: args.top_k]
    bins = kernels.KERNELS["numpy"]["orientation_bins"](img, ys, xs)
    ii = integral_image(img)
    rng = np.random.default_rng(args.seed + 1)
    da = rng.integers(0, 1 << 63, (args.top_k, 4)).astype(np.uint64)
    db = rng.integers(0, 1 << 63, (args.top_k, 4)).astype(np.uint64)

    cases = {
        "fast_score_map": lambda k: k["fast_score_map"](img, 20),
        "nms_mask": lambda k: k["nms_mask"](score),
        "orientation_bins": lambda k: k["orientation_bins"](img, ys, xs),
        "brief_describe": lambda k: k["brief_describe"](ii, ys, xs, bins),
        "hamming_best2": lambda k: k["hamming_best2"](da, db),
    }

    print(f"image {args.size}x{args.size}, {len(ys)} keypoints, best of {args.repeat}")
    header = f"{'kernel':<18}{'numpy':>12}"
    if "numba" in kernels.KERNELS:
        header += f"{'numba':>12}{'speedup':>10}"
    print(header)
    for name, call in cases.items():
        t_np, out_np = timeit(lambda: call(kernels.KERNELS["numpy"]), args.repeat)
        line = f"{name:<18}{t_np * 1e3:>10.2f}ms"
        if "numba" in kernels.KERNELS:
            t_nb, out_nb = timeit(lambda: call(kernels.KERNELS["numba"]), args.repeat)
            for a, b in zip(np.atleast_1d(out_np), np.atleast_1d(out_nb)):
                if not np.array_equal(a, b):
                    raise AssertionError(f"backend outputs differ for {name}")
            line += f"{t_nb * 1e3:>10.2f}ms{t_np / t_nb:>9.1f}x"
        print(line)


if __name__ == "__main__":
    main()

"""All-pairs matching orchestration: similarity and dissimilarity matrices.

m(i, j) is the robustly filtered match count between coins i and j (raw
mutual-NN count when filtering is off).  Pairs run in parallel with per-pair
seeds derived from coin ids, so the matrix is identical regardless of worker
count or completion order; completed pairs are checkpointed to the cache so
interrupted O(N^2) runs resume.
"""

from __future__ import annotations

import hashlib
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .corpus import Corpus, MatchRecord, PairCache, canonical_pair
from .errors import MissingPairs, TooSmall
from .imops import load_grayscale
from .magsac import FilterConfig, magsac_filter
from .matcher import KeypointSet, MatcherConfig, correspondence_coords, detect_and_describe, match_pair


@dataclass
class SimilarityMatrix:
    ids: list[str]
    m: np.ndarray  # (n, n) int64, symmetric, zero diagonal

    def __post_init__(self):
        self.m = np.asarray(self.m, dtype=np.int64)
        n = len(self.ids)
        if self.m.shape != (n, n):
            raise ValueError("matrix shape does not match id count")
        if not np.array_equal(self.m, self.m.T):
            raise ValueError("similarity matrix must be symmetric")
        if np.any(np.diag(self.m) != 0):
            raise ValueError("similarity diagonal must be zero")
        if np.any(self.m < 0):
            raise ValueError("similarity entries must be nonnegative")

    @property
    def n(self) -> int:
        return len(self.ids)

    def max_offdiag(self) -> int:
        if self.n < 2:
            return 0
        off = ~np.eye(self.n, dtype=bool)
        return int(self.m[off].max())


@dataclass
class DissimilarityMatrix:
    ids: list[str]
    d: np.ndarray  # (n, n) float64, symmetric, zero diagonal


def to_dissimilarity(sim: SimilarityMatrix) -> DissimilarityMatrix:
    """d(i, j) = max_offdiag(m) - m(i, j) off the diagonal, 0 on it."""
    if sim.n < 2:
        raise TooSmall("dissimilarity needs at least 2 coins")
    d = (sim.max_offdiag() - sim.m).astype(np.float64)
    np.fill_diagonal(d, 0.0)
    return DissimilarityMatrix(list(sim.ids), d)


def pair_seed(seed: int, a: str, b: str) -> int:
    """Stable per-pair RNG seed; independent of scheduling and worker count."""
    a, b = canonical_pair(a, b)
    digest = hashlib.blake2b(f"{seed}|{a}|{b}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def _record_hash(coords: np.ndarray) -> str:
    return hashlib.blake2b(np.ascontiguousarray(coords, dtype=np.float64).tobytes(), digest_size=8).hexdigest()


@dataclass
class BuildStats:
    pairs_computed: int = 0
    pairs_cached: int = 0
    elapsed_s: float = 0.0


def build_similarity(
    corpus: Corpus,
    *,
    records: dict[tuple[str, str], MatchRecord] | None = None,
    filter_on: bool = True,
    matcher_config: MatcherConfig = MatcherConfig(),
    filter_config: FilterConfig = FilterConfig(),
    seed: int = 0,
    workers: int = 1,
    cache: PairCache | None = None,
    keypoints: dict[str, KeypointSet] | None = None,
) -> tuple[SimilarityMatrix, BuildStats]:
    """Compute the full pairwise match-count matrix for a corpus.

    ``records`` switches the match source from the built-in matcher to
    pre-exported match files; every unordered pair must then be present.
    """
    t0 = time.monotonic()
    ids = corpus.ids
    n = len(ids)
    m = np.zeros((n, n), dtype=np.int64)
    stats = BuildStats()
    filter_hash = f"{filter_config.hash()}:{seed}" if filter_on else "nofilter"

    all_pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]

    if records is None:
        unreadable = [c.coin_id for c in corpus.coins if not c.readable]
        if unreadable:
            bad = set(unreadable)
            raise MissingPairs(
                [canonical_pair(a, b) for i, a in enumerate(ids) for b in ids[i + 1 :] if a in bad or b in bad]
            )
        source_hash = "builtin:" + matcher_config.hash()
        if keypoints is None:
            keypoints = {}

        def get_keypoints(coin):
            kp = keypoints.get(coin.coin_id)
            if kp is None:
                kp = detect_and_describe(load_grayscale(coin.image_path), matcher_config)
                keypoints[coin.coin_id] = kp
            return kp

        # detect once per coin before pair matching starts
        need = [
            c
            for i, c in enumerate(corpus.coins)
            if any(
                cache is None
                or cache.get(ids[i], other, source_hash, filter_hash) is None
                for other in ids
                if other != ids[i]
            )
        ]
        if workers > 1 and len(need) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                list(pool.map(get_keypoints, need))
        else:
            for c in need:
                get_keypoints(c)

        def candidates(i, j):
            a = get_keypoints(corpus.coins[i])
            b = get_keypoints(corpus.coins[j])
            return correspondence_coords(a, b, match_pair(a, b, matcher_config.ratio)), source_hash

    else:
        missing = [p for p in corpus.pairs() if p not in records]
        if missing:
            raise MissingPairs(missing)

        def candidates(i, j):
            a, b = canonical_pair(ids[i], ids[j])
            rec = records[(a, b)]
            coords = rec.oriented(a, b)
            return coords, "file:" + _record_hash(coords)

    def run_pair(pair):
        i, j = pair
        a, b = canonical_pair(ids[i], ids[j])
        if records is None and cache is not None:
            hit = cache.get(a, b, source_hash, filter_hash)
            if hit is not None:
                return i, j, hit, True
        coords, src_hash = candidates(i, j)
        if cache is not None:
            hit = cache.get(a, b, src_hash, filter_hash)
            if hit is not None:
                return i, j, hit, True
        if filter_on:
            report = magsac_filter(coords, filter_config, seed=pair_seed(seed, a, b))
            count = report.inlier_count
        else:
            count = len(coords)
        if cache is not None:
            cache.put(a, b, src_hash, filter_hash, count)
        return i, j, count, False

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_pair, all_pairs))
    else:
        results = [run_pair(p) for p in all_pairs]

    for i, j, count, cached in results:
        m[i, j] = m[j, i] = count
        if cached:
            stats.pairs_cached += 1
        else:
            stats.pairs_computed += 1

    stats.elapsed_s = time.monotonic() - t0
    return SimilarityMatrix(list(ids), m), stats


# ---------------------------------------------------------------------------
# Matrix CSV round trip
# ---------------------------------------------------------------------------

def write_matrix_csv(sim: SimilarityMatrix, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([""] + sim.ids)
        for i, coin_id in enumerate(sim.ids):
            writer.writerow([coin_id] + [int(v) for v in sim.m[i]])


def read_matrix_csv(path) -> SimilarityMatrix:
    import csv

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        ids = header[1:]
        rows = []
        row_ids = []
        for parts in reader:
            if not parts:
                continue
            row_ids.append(parts[0])
            rows.append([int(v) for v in parts[1:]])
    if row_ids != ids:
        raise ValueError("matrix CSV row ids do not match column ids")
    return SimilarityMatrix(ids, np.asarray(rows, dtype=np.int64))

"""Corpus data model and file I/O: manifests, die labels, match files, pair cache.

File formats (all round-trip stable):
  manifest       CSV ``coin_id,image_path``; row order defines matrix order
  ground truth   CSV ``coin_id,die_id``
  match files    NDJSON ``{"a":…,"b":…,"filtered":…,"matches":[[xa,ya,xb,yb],…]}``
  pair cache     NDJSON, append-only, one line per computed pair
"""

from __future__ import annotations

import csv
import json
import logging
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    CorpusError,
    DuplicateId,
    EmptyCorpus,
    MalformedRecord,
    MissingLabel,
    SelfPair,
    UnknownCoin,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Coin:
    coin_id: str
    image_path: Path
    readable: bool = True


@dataclass
class Corpus:
    name: str
    coins: list[Coin]

    def __post_init__(self):
        if not self.coins:
            raise EmptyCorpus("corpus has no coins")
        seen = set()
        for c in self.coins:
            if not c.coin_id:
                raise CorpusError("empty coin id")
            if c.coin_id in seen:
                raise DuplicateId(c.coin_id)
            seen.add(c.coin_id)

    def __len__(self) -> int:
        return len(self.coins)

    @property
    def ids(self) -> list[str]:
        return [c.coin_id for c in self.coins]

    def index_of(self, coin_id: str) -> int:
        try:
            return self.ids.index(coin_id)
        except ValueError:
            raise UnknownCoin(coin_id) from None

    def pairs(self):
        """All unordered coin-id pairs in canonical (lexicographic) order."""
        ids = self.ids
        n = len(ids)
        for i in range(n):
            for j in range(i + 1, n):
                yield canonical_pair(ids[i], ids[j])


def canonical_pair(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a <= b else (b, a)


def load_manifest(path) -> Corpus:
    """Read a ``coin_id,image_path`` CSV; row order is preserved as matrix order.

    Unreadable image paths are not fatal: the coin is kept and flagged, so
    match-file-driven runs still work without images on disk.
    """
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"manifest not found: {path}")
    coins = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "coin_id" not in reader.fieldnames:
            raise CorpusError(f"manifest {path} missing 'coin_id' header")
        for row in reader:
            coin_id = (row.get("coin_id") or "").strip()
            if not coin_id:
                raise CorpusError(f"manifest {path} has a row with empty coin_id")
            raw = (row.get("image_path") or "").strip()
            img = Path(raw)
            if raw and not img.is_absolute():
                img = path.parent / img
            readable = bool(raw) and img.exists()
            if not readable:
                logger.warning("coin %s: image %s is not readable; coin flagged", coin_id, img)
            coins.append(Coin(coin_id, img, readable=readable))
    return Corpus(name=path.stem, coins=coins)


def write_manifest(corpus: Corpus, path) -> None:
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["coin_id", "image_path"])
        for c in corpus.coins:
            writer.writerow([c.coin_id, str(c.image_path)])


@dataclass
class GroundTruth:
    labels: dict[str, str]

    @property
    def n_dies(self) -> int:
        return len(set(self.labels.values()))

    def as_indices(self, ids: list[str]) -> np.ndarray:
        """Dense integer labels in first-occurrence order over ``ids``."""
        mapping: dict[str, int] = {}
        out = np.empty(len(ids), dtype=np.int64)
        for i, coin_id in enumerate(ids):
            die = self.labels[coin_id]
            out[i] = mapping.setdefault(die, len(mapping))
        return out


def load_ground_truth(path, corpus: Corpus) -> GroundTruth:
    """Read ``coin_id,die_id`` CSV, total over the corpus; unknown coins are ignored."""
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"ground truth not found: {path}")
    known = set(corpus.ids)
    labels: dict[str, str] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "coin_id" not in reader.fieldnames or "die_id" not in reader.fieldnames:
            raise CorpusError(f"ground truth {path} needs 'coin_id,die_id' header")
        for row in reader:
            coin_id = (row.get("coin_id") or "").strip()
            die_id = (row.get("die_id") or "").strip()
            if coin_id not in known:
                continue  # label for unknown coin: warning-level, ignored
            if not die_id:
                raise MissingLabel(coin_id)
            labels[coin_id] = die_id
    for coin_id in corpus.ids:
        if coin_id not in labels:
            raise MissingLabel(coin_id)
    return GroundTruth(labels)


def write_ground_truth(gt: GroundTruth, path, ids=None) -> None:
    order = ids if ids is not None else sorted(gt.labels)
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["coin_id", "die_id"])
        for coin_id in order:
            writer.writerow([coin_id, gt.labels[coin_id]])


# ---------------------------------------------------------------------------
# Match files
# ---------------------------------------------------------------------------

@dataclass
class MatchRecord:
    a: str
    b: str
    correspondences: np.ndarray  # (n, 4) float64: xa, ya, xb, yb
    filtered: bool = False

    def __post_init__(self):
        if self.a == self.b:
            raise SelfPair(self.a)
        arr = np.asarray(self.correspondences, dtype=np.float64)
        if arr.size == 0:
            arr = arr.reshape(0, 4)
        if arr.ndim != 2 or arr.shape[1] != 4:
            raise MalformedRecord(f"correspondences for ({self.a},{self.b}) must be (n,4)")
        if not np.all(np.isfinite(arr)):
            raise MalformedRecord(f"non-finite coordinates for pair ({self.a},{self.b})")
        self.correspondences = arr

    @property
    def pair(self) -> tuple[str, str]:
        return canonical_pair(self.a, self.b)

    def oriented(self, a: str, b: str) -> np.ndarray:
        """Correspondence array with columns ordered for (a, b)."""
        if (a, b) == (self.a, self.b):
            return self.correspondences
        if (a, b) == (self.b, self.a):
            return self.correspondences[:, [2, 3, 0, 1]]
        raise UnknownCoin(a if a not in (self.a, self.b) else b)

    def __eq__(self, other):
        return (
            isinstance(other, MatchRecord)
            and self.a == other.a
            and self.b == other.b
            and self.filtered == other.filtered
            and self.correspondences.shape == other.correspondences.shape
            and np.array_equal(self.correspondences, other.correspondences)
        )


def write_match_file(records, path) -> None:
    with open(Path(path), "w") as fh:
        for rec in records:
            fh.write(
                json.dumps(
                    {
                        "a": rec.a,
                        "b": rec.b,
                        "filtered": rec.filtered,
                        "matches": [[float(v) for v in row] for row in rec.correspondences],
                    }
                )
            )
            fh.write("\n")


def read_match_file(path, corpus: Corpus | None = None) -> list[MatchRecord]:
    path = Path(path)
    known = set(corpus.ids) if corpus is not None else None
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                rec = MatchRecord(
                    a=obj["a"],
                    b=obj["b"],
                    correspondences=np.asarray(obj["matches"], dtype=np.float64).reshape(-1, 4),
                    filtered=bool(obj["filtered"]),
                )
            except SelfPair:
                raise
            except (KeyError, ValueError, TypeError) as exc:
                raise MalformedRecord(f"{path}:{lineno}: {exc}") from exc
            if known is not None:
                if rec.a not in known:
                    raise UnknownCoin(rec.a)
                if rec.b not in known:
                    raise UnknownCoin(rec.b)
            records.append(rec)
    return records


def read_match_dir(path, corpus: Corpus | None = None) -> dict[tuple[str, str], MatchRecord]:
    """Read every ``*.ndjson`` file under ``path`` into a canonical-pair map."""
    path = Path(path)
    out: dict[tuple[str, str], MatchRecord] = {}
    for f in sorted(path.glob("*.ndjson")):
        for rec in read_match_file(f, corpus):
            out[rec.pair] = rec
    return out


# ---------------------------------------------------------------------------
# Pairwise result cache
# ---------------------------------------------------------------------------

class PairCache:
    """Append-only per-pair match-count cache.

    Keys are (pair, match-source hash, filter-config hash), so re-clustering
    at a different threshold or re-running with an unchanged config never
    recomputes a pair; changing any result-affecting knob changes the key.
    Writes go through one lock, satisfying the single-writer rule.
    """

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.path = self.directory / "pairs.ndjson"
        self._lock = threading.Lock()
        self._entries: dict[tuple[str, str, str, str], int] = {}
        if self.path.exists():
            with open(self.path) as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    obj = json.loads(line)
                    self._entries[(obj["a"], obj["b"], obj["src"], obj["flt"])] = int(obj["count"])

    def get(self, a: str, b: str, source_hash: str, filter_hash: str):
        a, b = canonical_pair(a, b)
        return self._entries.get((a, b, source_hash, filter_hash))

    def put(self, a: str, b: str, source_hash: str, filter_hash: str, count: int) -> None:
        a, b = canonical_pair(a, b)
        key = (a, b, source_hash, filter_hash)
        with self._lock:
            if key in self._entries:
                return
            self._entries[key] = int(count)
            with open(self.path, "a") as fh:
                fh.write(json.dumps({"a": a, "b": b, "src": source_hash, "flt": filter_hash, "count": int(count)}))
                fh.write("\n")

    def __len__(self) -> int:
        return len(self._entries)

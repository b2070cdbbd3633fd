"""Threshold-swept graph clustering with silhouette-based model selection.

A graph connects coins whose match count reaches a threshold tau; label
propagation (or plain connected components) partitions it.  Sweeping tau over
every attained match count and keeping the partition with the highest
silhouette picks the threshold without ground truth.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import NoValidPartition, UndefinedSilhouette
from .metrics import ami, ari, pairwise_pr_fmi, silhouette
from .simmatrix import DissimilarityMatrix, SimilarityMatrix, to_dissimilarity

logger = logging.getLogger(__name__)

ALGORITHMS = ("label_propagation", "connected")


@dataclass
class DieGraph:
    n: int
    tau: int
    indptr: np.ndarray
    indices: np.ndarray

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v] : self.indptr[v + 1]]

    @property
    def n_edges(self) -> int:
        return len(self.indices) // 2


def build_graph(sim: SimilarityMatrix, tau: int) -> DieGraph:
    """Edge (i, j) iff m(i, j) >= tau; no self loops."""
    if tau < 1:
        raise ValueError("tau must be a positive integer")
    adj = sim.m >= tau
    np.fill_diagonal(adj, False)
    indptr = np.zeros(sim.n + 1, dtype=np.int64)
    np.cumsum(adj.sum(axis=1), out=indptr[1:])
    _, indices = np.nonzero(adj)
    return DieGraph(sim.n, int(tau), indptr, indices.astype(np.int64))


def canonicalize_labels(labels) -> np.ndarray:
    """Dense labels renumbered by first occurrence."""
    labels = np.asarray(labels)
    mapping: dict = {}
    out = np.empty(len(labels), dtype=np.int64)
    for i, lab in enumerate(labels.tolist()):
        out[i] = mapping.setdefault(lab, len(mapping))
    return out


def n_clusters(labels: np.ndarray) -> int:
    return int(labels.max()) + 1 if len(labels) else 0


def label_propagation(g: DieGraph, seed=0, max_sweeps: int = 100, initial_labels=None) -> np.ndarray:
    """Asynchronous label propagation, canonical output labels.

    Per sweep, nodes are visited in a seeded random permutation and adopt the
    most frequent label among their neighbors; a node whose current label is
    already maximal keeps it, otherwise ties break by a seeded uniform choice.
    Stops when a full sweep changes nothing (or after ``max_sweeps``, logged).
    """
    rng = np.random.default_rng(seed)
    if initial_labels is None:
        labels = np.arange(g.n, dtype=np.int64)
    else:
        labels = canonicalize_labels(initial_labels)
        if len(labels) != g.n:
            raise ValueError("initial labels must cover every node")
    converged = False
    for _ in range(max_sweeps):
        changed = False
        for v in rng.permutation(g.n):
            nb = g.neighbors(v)
            if nb.size == 0:
                continue
            counts = np.bincount(labels[nb])
            top = counts.max()
            cur = labels[v]
            if cur < len(counts) and counts[cur] == top:
                continue
            cands = np.nonzero(counts == top)[0]
            new = cands[0] if len(cands) == 1 else cands[rng.integers(len(cands))]
            labels[v] = new
            changed = True
        if not changed:
            converged = True
            break
    if not converged:
        logger.warning("label propagation hit the %d-sweep guard; returning last partition", max_sweeps)
    return canonicalize_labels(labels)


def connected_components(g: DieGraph) -> np.ndarray:
    """Connected components, labeled by first node occurrence; deterministic."""
    labels = np.full(g.n, -1, dtype=np.int64)
    nxt = 0
    for start in range(g.n):
        if labels[start] != -1:
            continue
        stack = [start]
        labels[start] = nxt
        while stack:
            v = stack.pop()
            for u in g.neighbors(v):
                if labels[u] == -1:
                    labels[u] = nxt
                    stack.append(u)
        nxt += 1
    return labels


def _cluster(g: DieGraph, algorithm: str, seed) -> np.ndarray:
    if algorithm == "label_propagation":
        return label_propagation(g, seed=seed)
    if algorithm == "connected":
        return connected_components(g)
    raise ValueError(f"unknown clustering algorithm {algorithm!r} (pick from {ALGORITHMS})")


@dataclass
class SweepRow:
    tau: int
    labels: np.ndarray
    silhouette: float  # nan when undefined
    n_clusters: int
    valid: bool
    ami: float | None = None
    ari: float | None = None
    fmi: float | None = None


@dataclass
class SweepResult:
    rows: list[SweepRow]
    tau_star: int
    best_labels: np.ndarray

    @property
    def best_row(self) -> SweepRow:
        return next(r for r in self.rows if r.tau == self.tau_star)


def sweep_thresholds(
    sim: SimilarityMatrix,
    dis: DissimilarityMatrix | None = None,
    algorithm: str = "label_propagation",
    seed: int = 0,
    gt_labels=None,
    workers: int = 1,
) -> SweepResult:
    """Cluster at every attained positive match count and pick the best threshold.

    Rows whose silhouette is undefined are kept for reporting but excluded
    from selection; tau_star is the smallest tau attaining the maximum
    silhouette.  Raises :class:`NoValidPartition` when nothing qualifies.
    """
    if dis is None:
        dis = to_dissimilarity(sim)
    off = ~np.eye(sim.n, dtype=bool)
    values = np.unique(sim.m[off])
    taus = [int(t) for t in values if t > 0]
    if not taus:
        raise NoValidPartition("similarity matrix has no positive off-diagonal entries")

    gt = None if gt_labels is None else np.asarray(gt_labels)

    def run(tau: int) -> SweepRow:
        g = build_graph(sim, tau)
        labels = _cluster(g, algorithm, seed=[seed, tau])
        try:
            sil = silhouette(dis.d, labels)
            valid = True
        except UndefinedSilhouette:
            sil = math.nan
            valid = False
        row = SweepRow(tau, labels, sil, n_clusters(labels), valid)
        if gt is not None:
            row.ami = ami(gt, labels)
            row.ari = ari(gt, labels)
            _, _, row.fmi = pairwise_pr_fmi(gt, labels)
        return row

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run, taus))
    else:
        rows = [run(t) for t in taus]

    valid_rows = [r for r in rows if r.valid]
    if not valid_rows:
        raise NoValidPartition("silhouette undefined at every threshold")
    best_sil = max(r.silhouette for r in valid_rows)
    tau_star = min(r.tau for r in valid_rows if r.silhouette == best_sil)
    best = next(r for r in rows if r.tau == tau_star)
    return SweepResult(rows, tau_star, best.labels)


# ---------------------------------------------------------------------------
# Sweep and partition CSV formats
# ---------------------------------------------------------------------------

def write_sweep_csv(result: SweepResult, path) -> None:
    with_gt = any(r.ami is not None for r in result.rows)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = ["tau", "silhouette", "n_clusters"]
        if with_gt:
            header += ["ami", "ari", "fmi"]
        writer.writerow(header)
        for r in result.rows:
            row = [r.tau, repr(r.silhouette), r.n_clusters]
            if with_gt:
                row += [repr(r.ami), repr(r.ari), repr(r.fmi)]
            writer.writerow(row)


def read_sweep_csv(path) -> list[dict]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            parsed = {"tau": int(row["tau"]), "silhouette": float(row["silhouette"]), "n_clusters": int(row["n_clusters"])}
            for key in ("ami", "ari", "fmi"):
                if key in row and row[key] not in (None, ""):
                    parsed[key] = float(row[key])
            out.append(parsed)
    return out


def write_partition_csv(ids, labels, path) -> None:
    labels = np.asarray(labels)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["coin_id", "cluster_id"])
        for coin_id, lab in zip(ids, labels):
            writer.writerow([coin_id, int(lab)])


def read_partition_csv(path) -> tuple[list[str], np.ndarray]:
    ids = []
    labels = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            ids.append(row["coin_id"])
            labels.append(int(row["cluster_id"]))
    return ids, np.asarray(labels, dtype=np.int64)

"""End-to-end pipeline: match -> filter -> matrix -> sweep -> partition -> report."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .clustering import (
    SweepResult,
    sweep_thresholds,
    write_partition_csv,
    write_sweep_csv,
)
from .corpus import Corpus, GroundTruth, PairCache, read_match_dir
from .magsac import FilterConfig
from .matcher import MatcherConfig
from .metrics import MetricsReport, evaluate
from .simmatrix import BuildStats, SimilarityMatrix, build_similarity, to_dissimilarity, write_matrix_csv

CACHE_ENV = "DIESTUDY_CACHE_DIR"


@dataclass
class PipelineConfig:
    source: str = "builtin"  # "builtin" or a directory of NDJSON match files
    top_k: int = 5000
    ratio: float | None = 0.9
    fast_threshold: int = 20
    n_levels: int = 4
    scale_factor: float = 1.25
    filter: bool = True
    sigma_max: float = 10.0
    confidence: float = 0.99
    max_iterations: int = 5000
    quantile: float = 0.99
    algorithm: str = "label_propagation"
    seed: int = 0
    workers: int = 0  # 0 -> os.cpu_count()
    cache_dir: str | None = None

    def matcher_config(self) -> MatcherConfig:
        return MatcherConfig(
            top_k=self.top_k,
            fast_threshold=self.fast_threshold,
            n_levels=self.n_levels,
            scale_factor=self.scale_factor,
            ratio=self.ratio,
        )

    def filter_config(self) -> FilterConfig:
        return FilterConfig(
            sigma_max=self.sigma_max,
            confidence=self.confidence,
            max_iterations=self.max_iterations,
            quantile=self.quantile,
        )

    def effective_workers(self) -> int:
        return self.workers if self.workers > 0 else (os.cpu_count() or 1)

    def effective_cache_dir(self) -> str | None:
        return os.environ.get(CACHE_ENV) or self.cache_dir

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "PipelineConfig":
        data = json.loads(text)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        return cls.from_json(Path(path).read_text())


@dataclass
class PipelineOutputs:
    sim: SimilarityMatrix
    sweep: SweepResult
    report: MetricsReport | None
    stats: BuildStats
    files: dict[str, Path] = field(default_factory=dict)


def build_matrix(config: PipelineConfig, corpus: Corpus) -> tuple[SimilarityMatrix, BuildStats]:
    records = None
    if config.source != "builtin":
        records = read_match_dir(config.source, corpus)
    cache_dir = config.effective_cache_dir()
    cache = PairCache(cache_dir) if cache_dir else None
    return build_similarity(
        corpus,
        records=records,
        filter_on=config.filter,
        matcher_config=config.matcher_config(),
        filter_config=config.filter_config(),
        seed=config.seed,
        workers=config.effective_workers(),
        cache=cache,
    )


def run_pipeline(
    config: PipelineConfig,
    corpus: Corpus,
    ground_truth: GroundTruth | None = None,
    out_dir=None,
) -> PipelineOutputs:
    """Run the full study; optionally write matrix/sweep/partition/metrics files.

    Output bytes are fixed by (corpus, config, seed); only the timing stats in
    the sidecar vary between identical runs.
    """
    sim, stats = build_matrix(config, corpus)
    dis = to_dissimilarity(sim)
    gt_idx = ground_truth.as_indices(corpus.ids) if ground_truth is not None else None
    sweep = sweep_thresholds(
        sim,
        dis,
        algorithm=config.algorithm,
        seed=config.seed,
        gt_labels=gt_idx,
        workers=1,
    )
    report = evaluate(gt_idx, sweep.best_labels) if gt_idx is not None else None

    outputs = PipelineOutputs(sim, sweep, report, stats)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        matrix_path = out_dir / "matrix.csv"
        write_matrix_csv(sim, matrix_path)
        sweep_path = out_dir / "sweep.csv"
        write_sweep_csv(sweep, sweep_path)
        partition_path = out_dir / "partition.csv"
        write_partition_csv(corpus.ids, sweep.best_labels, partition_path)
        sidecar_path = out_dir / "sidecar.json"
        sidecar_path.write_text(
            json.dumps(
                {
                    "matcher_hash": config.matcher_config().hash(),
                    "filter_hash": config.filter_config().hash() if config.filter else "nofilter",
                    "seed": config.seed,
                    "tau_star": sweep.tau_star,
                    "pairs_computed": stats.pairs_computed,
                    "pairs_cached": stats.pairs_cached,
                    "elapsed_s": stats.elapsed_s,
                },
                indent=2,
            )
        )
        outputs.files = {
            "matrix": matrix_path,
            "sweep": sweep_path,
            "partition": partition_path,
            "sidecar": sidecar_path,
        }
        if report is not None:
            metrics_path = out_dir / "metrics.json"
            metrics_path.write_text(report.to_json())
            outputs.files["metrics"] = metrics_path
    return outputs

"""Command-line interface: per-stage subcommands plus a full ``run`` composition.

Every stage reads and writes the documented file formats (manifest CSV,
NDJSON match files, matrix CSV, sweep CSV, partition CSV, metrics JSON), so
external tools can interpose at any point.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import baselines as bl
from . import clustering as cl
from .corpus import (
    MatchRecord,
    load_ground_truth,
    load_manifest,
    read_match_dir,
    write_match_file,
)
from .errors import DieStudyError
from .imops import load_grayscale
from .magsac import magsac_filter
from .matcher import correspondence_coords, detect_and_describe, keypoints_to_json, match_pair
from .pipeline import PipelineConfig, run_pipeline
from .simmatrix import pair_seed, read_matrix_csv, to_dissimilarity, write_matrix_csv
from .synth import SynthSpec, generate_corpus

SHARD_SIZE = 2000


def _config_from(ctx_params: dict, config_file: str | None) -> PipelineConfig:
    cfg = PipelineConfig.from_file(config_file) if config_file else PipelineConfig()
    for name in vars(cfg):
        if name in ctx_params and ctx_params[name] is not None:
            setattr(cfg, name, ctx_params[name])
    return cfg


def _common_matcher_options(fn):
    fn = click.option("--top-k", "top_k", type=int, default=None, help="Max keypoints per image [5000].")(fn)
    fn = click.option("--ratio", type=float, default=None, help="NN ratio test threshold [0.9].")(fn)
    fn = click.option("--fast-threshold", "fast_threshold", type=int, default=None, help="Corner threshold [20].")(fn)
    return fn


def _common_filter_options(fn):
    fn = click.option("--sigma-max", "sigma_max", type=float, default=None, help="Noise scale upper bound, px [10].")(fn)
    fn = click.option("--confidence", type=float, default=None, help="Consensus confidence [0.99].")(fn)
    fn = click.option("--max-iterations", "max_iterations", type=int, default=None, help="Sampling budget [5000].")(fn)
    return fn


@click.group()
def main():
    """Automatic die studies for coin corpora."""


@main.command()
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--dies", "n_dies", type=int, default=6, show_default=True)
@click.option("--coins-per-die", type=float, default=4.0, show_default=True)
@click.option("--die-sizes", type=str, default=None, help="Comma-separated explicit die sizes.")
@click.option("--singleton-fraction", type=float, default=0.0, show_default=True)
@click.option("--image-size", type=int, default=256, show_default=True)
@click.option("--warp", "warp_magnitude", type=float, default=3.0, show_default=True)
@click.option("--noise", "noise_sigma", type=float, default=4.0, show_default=True)
@click.option("--wear", "wear_fraction", type=float, default=0.15, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def synth(out_dir, n_dies, coins_per_die, die_sizes, singleton_fraction, image_size, warp_magnitude, noise_sigma, wear_fraction, seed):
    """Generate a synthetic corpus with known die labels."""
    sizes = tuple(int(s) for s in die_sizes.split(",")) if die_sizes else None
    if sizes:
        n_dies = len(sizes)
    spec = SynthSpec(
        n_dies=n_dies,
        coins_per_die=coins_per_die,
        die_sizes=sizes,
        singleton_fraction=singleton_fraction,
        image_size=image_size,
        warp_magnitude=warp_magnitude,
        noise_sigma=noise_sigma,
        wear_fraction=wear_fraction,
        seed=seed,
    )
    corpus, gt = generate_corpus(spec, out_dir)
    click.echo(f"wrote {len(corpus)} coins across {gt.n_dies} dies under {out_dir}")


@main.command()
@click.argument("manifest", type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@_common_matcher_options
@click.option("--dump-keypoints", "dump_kp", type=click.Path(), default=None, help="Also write a keypoint NDJSON dump.")
def match(manifest, out_dir, dump_kp, **params):
    """Run the built-in matcher over all pairs; write candidate match files."""
    cfg = _config_from(params, None)
    corpus = load_manifest(manifest)
    unreadable = [c.coin_id for c in corpus.coins if not c.readable]
    if unreadable:
        raise click.ClickException(f"unreadable images for coins: {', '.join(unreadable)}")
    mc = cfg.matcher_config()
    kps = {}
    for coin in corpus.coins:
        kps[coin.coin_id] = detect_and_describe(load_grayscale(coin.image_path), mc)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if dump_kp:
        with open(dump_kp, "w") as fh:
            for coin_id in corpus.ids:
                fh.write(keypoints_to_json(coin_id, kps[coin_id]) + "\n")
    shard: list[MatchRecord] = []
    shard_idx = 0
    n_records = 0
    for a, b in corpus.pairs():
        coords = correspondence_coords(kps[a], kps[b], match_pair(kps[a], kps[b], mc.ratio))
        shard.append(MatchRecord(a, b, coords, filtered=False))
        n_records += 1
        if len(shard) >= SHARD_SIZE:
            write_match_file(shard, out / f"matches_{shard_idx:05d}.ndjson")
            shard, shard_idx = [], shard_idx + 1
    if shard:
        write_match_file(shard, out / f"matches_{shard_idx:05d}.ndjson")
    click.echo(f"wrote {n_records} pair records to {out}")


@main.command("filter")
@click.argument("match_dir", type=click.Path(exists=True))
@click.option("--manifest", type=click.Path(exists=True), default=None, help="Validate ids against this corpus.")
@click.option("--out", "out_dir", required=True, type=click.Path())
@_common_filter_options
@click.option("--seed", type=int, default=None)
def filter_cmd(match_dir, manifest, out_dir, **params):
    """Robust-filter candidate match files; emit records with filtered=true."""
    cfg = _config_from(params, None)
    corpus = load_manifest(manifest) if manifest else None
    records = read_match_dir(match_dir, corpus)
    fc = cfg.filter_config()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    shard: list[MatchRecord] = []
    shard_idx = 0
    for (a, b), rec in sorted(records.items()):
        coords = rec.oriented(a, b)
        report = magsac_filter(coords, fc, seed=pair_seed(cfg.seed, a, b))
        shard.append(MatchRecord(a, b, coords[report.inlier_mask], filtered=True))
        if len(shard) >= SHARD_SIZE:
            write_match_file(shard, out / f"filtered_{shard_idx:05d}.ndjson")
            shard, shard_idx = [], shard_idx + 1
    if shard:
        write_match_file(shard, out / f"filtered_{shard_idx:05d}.ndjson")
    click.echo(f"filtered {len(records)} pairs into {out}")


@main.command()
@click.argument("manifest", type=click.Path(exists=True))
@click.option("--source", default="builtin", show_default=True, help="'builtin' or a match-file directory.")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--filter/--no-filter", "filter", default=None)
@_common_matcher_options
@_common_filter_options
@click.option("--seed", type=int, default=None)
@click.option("--workers", type=int, default=None)
@click.option("--cache", "cache_dir", type=click.Path(), default=None)
@click.option("--config", "config_file", type=click.Path(exists=True), default=None)
def matrix(manifest, out_path, config_file, **params):
    """Build the pairwise similarity matrix CSV."""
    from .pipeline import build_matrix

    cfg = _config_from(params, config_file)
    corpus = load_manifest(manifest)
    sim, stats = build_matrix(cfg, corpus)
    write_matrix_csv(sim, out_path)
    Path(str(out_path) + ".sidecar.json").write_text(
        json.dumps(
            {
                "matcher_hash": cfg.matcher_config().hash(),
                "filter_hash": cfg.filter_config().hash() if cfg.filter else "nofilter",
                "seed": cfg.seed,
                "pairs_computed": stats.pairs_computed,
                "pairs_cached": stats.pairs_cached,
                "elapsed_s": stats.elapsed_s,
            },
            indent=2,
        )
    )
    click.echo(f"matrix {sim.n}x{sim.n}: {stats.pairs_computed} computed, {stats.pairs_cached} cached")


@main.command()
@click.argument("matrix_csv", type=click.Path(exists=True))
@click.option("--tau", type=int, required=True)
@click.option("--algorithm", type=click.Choice(cl.ALGORITHMS), default="label_propagation", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def cluster(matrix_csv, tau, algorithm, seed, out_path):
    """Cluster the similarity graph at one fixed threshold."""
    sim = read_matrix_csv(matrix_csv)
    g = cl.build_graph(sim, tau)
    if algorithm == "label_propagation":
        labels = cl.label_propagation(g, seed=[seed, tau])
    else:
        labels = cl.connected_components(g)
    cl.write_partition_csv(sim.ids, labels, out_path)
    click.echo(f"tau={tau}: {cl.n_clusters(labels)} clusters")


@main.command()
@click.argument("matrix_csv", type=click.Path(exists=True))
@click.option("--algorithm", type=click.Choice(cl.ALGORITHMS), default="label_propagation", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--ground-truth", "gt_path", type=click.Path(exists=True), default=None)
@click.option("--out", "sweep_path", required=True, type=click.Path())
@click.option("--partition-out", "partition_path", type=click.Path(), default=None)
def sweep(matrix_csv, algorithm, seed, gt_path, sweep_path, partition_path):
    """Sweep every threshold, select the best partition by silhouette."""
    sim = read_matrix_csv(matrix_csv)
    gt_labels = None
    if gt_path:
        from .corpus import Corpus, Coin

        corpus = Corpus("matrix", [Coin(i, Path("")) for i in sim.ids])
        gt_labels = load_ground_truth(gt_path, corpus).as_indices(sim.ids)
    result = cl.sweep_thresholds(sim, algorithm=algorithm, seed=seed, gt_labels=gt_labels)
    cl.write_sweep_csv(result, sweep_path)
    if partition_path:
        cl.write_partition_csv(sim.ids, result.best_labels, partition_path)
    best = result.best_row
    click.echo(f"tau*={result.tau_star} silhouette={best.silhouette:.4f} clusters={best.n_clusters}")


@main.command()
@click.argument("matrix_csv", type=click.Path(exists=True))
@click.option("--ground-truth", "gt_path", type=click.Path(exists=True), required=True)
@click.option("--linkage", type=click.Choice(bl.LINKAGES), default="average", show_default=True)
@click.option("--metric", type=click.Choice(["ami", "ari", "fmi"]), default="ami", show_default=True)
@click.option("--dendrogram-out", "dend_path", type=click.Path(), default=None)
@click.option("--partition-out", "partition_path", type=click.Path(), default=None)
def baseline(matrix_csv, gt_path, linkage, metric, dend_path, partition_path):
    """Agglomerative baseline with an oracle best cut against ground truth."""
    sim = read_matrix_csv(matrix_csv)
    from .corpus import Coin, Corpus

    corpus = Corpus("matrix", [Coin(i, Path("")) for i in sim.ids])
    gt = load_ground_truth(gt_path, corpus)
    dend = bl.agglomerative(to_dissimilarity(sim), linkage=linkage)
    labels, score = bl.oracle_best_cut(dend, gt.as_indices(sim.ids), metric=metric)
    if dend_path:
        bl.write_dendrogram_csv(dend, dend_path)
    if partition_path:
        cl.write_partition_csv(sim.ids, labels, partition_path)
    click.echo(f"oracle best cut: {metric}={score:.4f} clusters={cl.n_clusters(labels)}")


@main.command("eval")
@click.argument("partition_csv", type=click.Path(exists=True))
@click.argument("gt_csv", type=click.Path(exists=True))
@click.option("--out", "out_path", type=click.Path(), default=None)
def eval_cmd(partition_csv, gt_csv, out_path):
    """Score a partition CSV against ground-truth die labels."""
    from .corpus import Coin, Corpus
    from .metrics import evaluate

    ids, labels = cl.read_partition_csv(partition_csv)
    corpus = Corpus("partition", [Coin(i, Path("")) for i in ids])
    gt = load_ground_truth(gt_csv, corpus)
    report = evaluate(gt.as_indices(ids), labels)
    text = report.to_json()
    if out_path:
        Path(out_path).write_text(text)
    click.echo(text)


@main.command()
@click.argument("manifest", type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--source", default=None, help="'builtin' or a match-file directory.")
@click.option("--ground-truth", "gt_path", type=click.Path(exists=True), default=None)
@click.option("--filter/--no-filter", "filter", default=None)
@_common_matcher_options
@_common_filter_options
@click.option("--algorithm", type=click.Choice(cl.ALGORITHMS), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--workers", type=int, default=None)
@click.option("--cache", "cache_dir", type=click.Path(), default=None)
@click.option("--config", "config_file", type=click.Path(exists=True), default=None)
def run(manifest, out_dir, gt_path, config_file, **params):
    """Full study: match, filter, matrix, sweep, partition, metrics."""
    cfg = _config_from(params, config_file)
    corpus = load_manifest(manifest)
    gt = load_ground_truth(gt_path, corpus) if gt_path else None
    outputs = run_pipeline(cfg, corpus, gt, out_dir)
    best = outputs.sweep.best_row
    click.echo(
        f"tau*={outputs.sweep.tau_star} silhouette={best.silhouette:.4f} "
        f"clusters={best.n_clusters} pairs_computed={outputs.stats.pairs_computed}"
    )
    if outputs.report is not None:
        click.echo(outputs.report.to_json())


def entrypoint(argv=None):  # pragma: no cover - thin wrapper
    try:
        main.main(args=argv, standalone_mode=False)
    except DieStudyError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    except click.ClickException as exc:
        exc.show()
        sys.exit(exc.exit_code)
    except click.exceptions.Abort:
        sys.exit(130)


if __name__ == "__main__":  # pragma: no cover
    entrypoint()

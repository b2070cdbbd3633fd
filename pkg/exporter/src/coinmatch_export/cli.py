import sys
from pathlib import Path

import click

from .backends import BACKENDS
from .export import ExportJob, export_matches


@click.command()
@click.argument("manifest", type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path(), help="Output directory for match shards.")
@click.option("--top-k", type=int, default=5000, show_default=True, help="Max keypoints per image.")
@click.option("--resume", is_flag=True, help="Keep already-exported pairs and continue.")
@click.option("--backend", type=click.Choice(sorted(BACKENDS)), default="xfeat", show_default=True)
@click.option("--device", default="cpu", show_default=True, help="Inference device for the xfeat backend.")
@click.option("--batch-size", type=int, default=1000, show_default=True, help="Pair records per shard file.")
def main(manifest, out_dir, top_k, resume, backend, device, batch_size):
    """Export pairwise keypoint matches for a coin corpus as NDJSON match files."""
    job = ExportJob(
        manifest_path=Path(manifest),
        out_dir=Path(out_dir),
        top_k=top_k,
        device=device,
        batch_size=batch_size,
        backend=backend,
        resume=resume,
    )
    try:
        result = export_matches(job)
    except RuntimeError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    msg = f"wrote {result.written} pair records to {out_dir}"
    if result.resumed:
        msg += f" ({result.resumed} already present)"
    if result.skipped_images:
        msg += f"; skipped unreadable images: {', '.join(result.skipped_images)}"
    click.echo(msg)


if __name__ == "__main__":
    main()

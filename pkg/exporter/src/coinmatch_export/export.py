"""Pair enumeration, sharded NDJSON output, resume, and skip accounting."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from PIL import Image

from .manifest import read_manifest

SHARD_PATTERN = "matches_{:05d}.ndjson"


@dataclass
class ExportJob:
    manifest_path: Path
    out_dir: Path
    top_k: int = 5000
    device: str = "cpu"
    batch_size: int = 1000  # pair records per shard file
    backend: str = "xfeat"
    resume: bool = False

    def __post_init__(self):
        if self.top_k < 1:
            raise ValueError("top_k must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")


@dataclass
class ExportResult:
    written: int = 0
    skipped_pairs: list[tuple[str, str]] = field(default_factory=list)
    skipped_images: list[str] = field(default_factory=list)
    resumed: int = 0


def _existing_pairs(out_dir: Path) -> set[tuple[str, str]]:
    done = set()
    for shard in sorted(out_dir.glob("matches_*.ndjson")):
        with open(shard) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                done.add((obj["a"], obj["b"]))
    return done


def _record_line(a: str, b: str, matches) -> str:
    return json.dumps(
        {"a": a, "b": b, "filtered": False, "matches": [[float(v) for v in row] for row in matches]}
    )


def export_matches(job: ExportJob, backend=None, progress=None) -> ExportResult:
    """Write one unfiltered match record per unordered coin pair, sharded.

    Already-exported pairs are kept when ``job.resume`` is set; unreadable
    images skip their pairs and are listed in ``skipped.json``.  Native image
    resolutions go to ``resolutions.json``.
    """
    if backend is None:
        from .backends import make_backend

        backend = make_backend(job.backend, job.top_k, job.device)

    entries = read_manifest(job.manifest_path)
    out_dir = Path(job.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    done = _existing_pairs(out_dir) if job.resume else set()
    result = ExportResult(resumed=len(done))

    features = {}
    resolutions = {}
    for entry in entries:
        try:
            with Image.open(entry.image_path) as im:
                resolutions[entry.coin_id] = [im.width, im.height]
                features[entry.coin_id] = backend.features(im)
        except (OSError, ValueError):
            result.skipped_images.append(entry.coin_id)

    ids = [e.coin_id for e in entries]
    pairs = []
    for i in range(len(ids)):
        for j in range(i + 1, len(ids)):
            a, b = sorted((ids[i], ids[j]))
            if (a, b) in done:
                continue
            if a in features and b in features:
                pairs.append((a, b))
            else:
                result.skipped_pairs.append((a, b))

    def write_shard(idx: int, lines: list[str]) -> int:
        while (out_dir / SHARD_PATTERN.format(idx)).exists():  # never clobber kept shards
            idx += 1
        (out_dir / SHARD_PATTERN.format(idx)).write_text("\n".join(lines) + "\n")
        return idx + 1

    shard_idx = 0
    buffer: list[str] = []
    for n, (a, b) in enumerate(pairs, start=1):
        matches = backend.match(features[a], features[b])
        buffer.append(_record_line(a, b, matches))
        result.written += 1
        if len(buffer) >= job.batch_size:
            shard_idx = write_shard(shard_idx, buffer)
            buffer = []
        if progress is not None:
            progress(n, len(pairs))
    if buffer:
        write_shard(shard_idx, buffer)

    (out_dir / "resolutions.json").write_text(json.dumps(resolutions, sort_keys=True, indent=2))
    if result.skipped_images or result.skipped_pairs:
        (out_dir / "skipped.json").write_text(
            json.dumps(
                {
                    "images": sorted(result.skipped_images),
                    "pairs": sorted(list(p) for p in result.skipped_pairs),
                },
                indent=2,
            )
        )
    return result

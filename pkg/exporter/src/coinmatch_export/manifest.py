"""Manifest reading (the exporter's only contract with the pipeline's inputs)."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class Entry:
    coin_id: str
    image_path: Path


def read_manifest(path) -> list[Entry]:
    """Parse a ``coin_id,image_path`` CSV; relative paths resolve against it."""
    path = Path(path)
    entries: list[Entry] = []
    seen: set[str] = set()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "coin_id" not in reader.fieldnames:
            raise ValueError(f"{path}: expected a 'coin_id,image_path' header")
        for row in reader:
            coin_id = (row.get("coin_id") or "").strip()
            raw = (row.get("image_path") or "").strip()
            if not coin_id:
                raise ValueError(f"{path}: row with empty coin_id")
            if coin_id in seen:
                raise ValueError(f"{path}: duplicate coin_id {coin_id!r}")
            seen.add(coin_id)
            img = Path(raw)
            if raw and not img.is_absolute():
                img = path.parent / img
            entries.append(Entry(coin_id, img))
    if not entries:
        raise ValueError(f"{path}: manifest is empty")
    return entries

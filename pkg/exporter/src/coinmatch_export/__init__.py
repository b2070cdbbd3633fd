"""Pairwise match exporter for coin corpora.

Reads a ``coin_id,image_path`` manifest, matches every unordered image pair
with a pluggable backend, and writes NDJSON match files that the die-study
pipeline ingests unchanged via its ``--source`` option.
"""

__version__ = "0.1.0"

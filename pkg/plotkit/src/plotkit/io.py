"""Readers for the documented msacl-lab file formats.

plotkit never imports the training library; everything arrives through
the on-disk schemas (training-log CSV, grid matrices, trajectory
episodes), so any figure can be rebuilt from a run directory alone.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

GRID_SCHEMA = "msacl-grid-1"
TRAJ_SCHEMA = "msacl-traj-1"


def read_training_log(path) -> dict:
    """Training CSV as {column: float array}; missing loss entries are nan."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: empty training log")
    if "env_steps" not in rows[0]:
        raise ValueError(f"{path}: not a training log (no env_steps column)")
    return {c: np.array([float(r[c]) for r in rows]) for c in rows[0]}


def _comment_header(lines, schema: str, path) -> tuple[dict, int]:
    """Parse the leading '# key: value' block; returns (meta, body start)."""
    if not lines or lines[0].strip() != f"# {schema}":
        raise ValueError(f"{path}: missing {schema} header")
    meta = {}
    k = 1
    while k < len(lines) and lines[k].startswith("#"):
        body = lines[k][1:].strip()
        if ":" in body:
            key, val = body.split(":", 1)
            meta[key.strip()] = val.strip()
        k += 1
    return meta, k


def read_grid(path) -> tuple[np.ndarray, dict]:
    """Value matrix plus its axes metadata."""
    lines = Path(path).read_text().splitlines()
    meta, k = _comment_header(lines, GRID_SCHEMA, path)
    rows = [np.fromstring(line, sep=",") for line in lines[k:] if line]
    if not rows or any(len(r) != len(rows[0]) for r in rows):
        raise ValueError(f"{path}: empty or ragged grid body")
    return np.asarray(rows), meta


def read_trajectory(path) -> tuple[dict, dict]:
    """One recorded episode as ({column: array}, metadata)."""
    lines = Path(path).read_text().splitlines()
    meta, k = _comment_header(lines, TRAJ_SCHEMA, path)
    if k >= len(lines):
        raise ValueError(f"{path}: trajectory file has no column header")
    names = lines[k].split(",")
    body = [line.split(",") for line in lines[k + 1:] if line]
    if not body or any(len(r) != len(names) for r in body):
        raise ValueError(f"{path}: empty or ragged trajectory body")
    data = np.asarray(body, dtype=np.float64)
    return {name: data[:, i] for i, name in enumerate(names)}, meta

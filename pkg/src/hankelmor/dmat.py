"""Plain-text DMAT matrix files and their JSON sidecars.

A DMAT file is::

    dmat <rows> <cols>
    <row 0: cols whitespace-separated values, 17 significant digits>
    ...

Row-major, LF line endings.  Seventeen significant digits make the
write/read round trip exact for every finite double.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ArtifactIOError, MissingArtifact


def format_dmat(M) -> str:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2:
        raise ValueError("DMAT holds 2-D matrices only")
    rows, cols = M.shape
    lines = [f"dmat {rows} {cols}"]
    for row in M:
        lines.append(" ".join(format(float(v), ".17g") for v in row))
    return "\n".join(lines) + "\n"


def parse_dmat(text: str) -> np.ndarray:
    lines = text.split("\n")
    header = lines[0].split()
    if len(header) != 3 or header[0] != "dmat":
        raise ArtifactIOError(f"not a DMAT header: {lines[0]!r}")
    try:
        rows, cols = int(header[1]), int(header[2])
    except ValueError as exc:
        raise ArtifactIOError(f"bad DMAT dimensions: {lines[0]!r}") from exc
    body = lines[1:1 + rows]
    if len(body) < rows:
        raise ArtifactIOError(f"DMAT declares {rows} rows, found {len(body)}")
    M = np.empty((rows, cols))
    for i, line in enumerate(body):
        vals = line.split()
        if len(vals) != cols:
            raise ArtifactIOError(
                f"DMAT row {i} has {len(vals)} entries, expected {cols}")
        M[i] = [float(v) for v in vals]
    return M


def write_dmat(path, M) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as f:
        f.write(format_dmat(M))
    return path


def read_dmat(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise MissingArtifact(f"missing DMAT file: {path}")
    return parse_dmat(path.read_text())


def write_sidecar(path, meta: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def read_sidecar(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise MissingArtifact(f"missing sidecar: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ArtifactIOError(f"malformed sidecar {path}: {exc}") from exc

"""Deterministic writers for CSV, binary PGM and text sidecars."""
from __future__ import annotations

import csv
import hashlib
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def fmt(value) -> str:
    """Stable text form: integers as-is, floats round-trip exact, NaN/None blank."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "" if math.isnan(value) else repr(float(value))
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def write_matrix_csv(path: Path, matrix: np.ndarray) -> Path:
    """One row per layer, one column per site, no header."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in np.asarray(matrix):
            w.writerow([fmt(v) for v in row])
    return path


def read_matrix_csv(path: Path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)


def write_pgm(path: Path, matrix: np.ndarray, lo: float | None = None,
              hi: float | None = None) -> Path:
    """8-bit binary PGM, linear grey scale from `lo` (black) to `hi` (white)."""
    m = np.asarray(matrix, dtype=float)
    lo = float(np.nanmin(m)) if lo is None else lo
    hi = float(np.nanmax(m)) if hi is None else hi
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    img = np.clip(np.rint((np.nan_to_num(m, nan=lo) - lo) * scale), 0, 255).astype(np.uint8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
    return path


def read_pgm(path: Path) -> np.ndarray:
    data = Path(path).read_bytes()
    magic, dims, maxval, rest = data.split(b"\n", 3)
    if magic != b"P5":
        raise ValueError(f"{path} is not a binary PGM")
    width, height = map(int, dims.split())
    return np.frombuffer(rest, dtype=np.uint8, count=width * height).reshape(height, width)


def write_sidecar(path: Path, meta: dict) -> Path:
    path = Path(path)
    path.write_text("".join(f"{k}: {v}\n" for k, v in meta.items()))
    return path


def sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()

"""Matrix Market ``array real general`` reader/writer for dense matrices."""
from __future__ import annotations

import io
import os
from pathlib import Path

import numpy as np
import scipy.io

from .matcore import as_matrix

HEADER = "%%MatrixMarket matrix array real general"


def write_mtx(path, m) -> None:
    """Write ``m`` with 17 significant digits, atomically."""
    a = as_matrix(m)
    buf = io.BytesIO()
    scipy.io.mmwrite(buf, a, precision=17, symmetry="general")
    atomic_write_bytes(path, buf.getvalue())


def read_mtx(path) -> np.ndarray:
    with open(path, "rb") as fh:
        first = fh.readline().decode("ascii", "replace").strip()
    if first.lower() != HEADER.lower():
        raise ValueError(f"{path}: expected header {HEADER!r}, got {first!r}")
    return as_matrix(scipy.io.mmread(str(path)))


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))

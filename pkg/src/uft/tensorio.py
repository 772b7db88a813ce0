"""Binary tensor files, CSV feature import and ``key: value`` sidecars.

Tensor layout (all little-endian)::

    b"UFT1" | uint32 rank | rank x uint32 dims | float32 data (row-major)
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from .errors import TensorFormatError

MAGIC = b"UFT1"


def write_tensor(path, array) -> None:
    arr = np.asarray(array, dtype="<f4")
    header = MAGIC + struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(arr.tobytes(order="C"))


def read_tensor(path) -> np.ndarray:
    """Read a tensor file; returns float64."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise TensorFormatError(f"{path}: bad magic {blob[:4]!r}")
    if len(blob) < 8:
        raise TensorFormatError(f"{path}: truncated header")
    (rank,) = struct.unpack_from("<I", blob, 4)
    off = 8 + 4 * rank
    if len(blob) < off:
        raise TensorFormatError(f"{path}: truncated header")
    shape = struct.unpack_from(f"<{rank}I", blob, 8)
    count = int(np.prod(shape, dtype=np.int64))
    if len(blob) - off != 4 * count:
        raise TensorFormatError(
            f"{path}: expected {4 * count} data bytes for shape {shape}, found {len(blob) - off}"
        )
    data = np.frombuffer(blob, dtype="<f4", count=count, offset=off)
    return data.reshape(shape).astype(np.float64)


def read_csv_features(path) -> np.ndarray:
    """One feature vector per line, comma separated."""
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                rows.append([float(tok) for tok in line.split(",")])
            except ValueError as exc:
                raise TensorFormatError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise TensorFormatError(f"{path}: no feature rows")
    if len({len(r) for r in rows}) != 1:
        raise TensorFormatError(f"{path}: rows have differing lengths")
    return np.asarray(rows, dtype=np.float64)


def read_features(path) -> np.ndarray:
    """Load an n x d feature matrix from a tensor file or a ``.csv``."""
    if str(path).lower().endswith(".csv"):
        return read_csv_features(path)
    arr = read_tensor(path)
    if arr.ndim == 1:
        arr = arr[None, :]
    elif arr.ndim == 3:
        arr = arr.reshape(-1, arr.shape[-1])
    elif arr.ndim != 2:
        raise TensorFormatError(f"{path}: expected a 2-D feature tensor, got rank {arr.ndim}")
    return arr


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (list, tuple, np.ndarray)):
        return " ".join(_format_value(v) for v in np.asarray(value).tolist())
    return str(value)


def write_sidecar(path, items: dict) -> None:
    """Write ``key: value`` lines in insertion order."""
    text = "".join(f"{k}: {_format_value(v)}\n" for k, v in items.items())
    Path(path).write_text(text)


def format_sidecar(items: dict) -> str:
    return "".join(f"{k}: {_format_value(v)}\n" for k, v in items.items())


def read_sidecar(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        key, sep, value = line.partition(":")
        if not sep:
            raise TensorFormatError(f"{path}: malformed line {line!r}")
        out[key.strip()] = value.strip()
    return out


def write_pyramid(directory, levels, base_h: int, base_w: int) -> Path:
    """Write each level as ``level_<k>.uft`` plus a ``pyramid.txt`` manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {"levels": len(levels), "base_h": base_h, "base_w": base_w}
    for k, level in enumerate(levels):
        name = f"level_{k}.uft"
        write_tensor(directory / name, level)
        manifest[f"level_{k}"] = f"{name} " + "x".join(str(s) for s in np.shape(level))
    manifest_path = directory / "pyramid.txt"
    write_sidecar(manifest_path, manifest)
    return manifest_path


def read_pyramid(manifest_path):
    """Inverse of :func:`write_pyramid`; returns ``(levels, base_h, base_w)``.

    Accepts the manifest itself or the directory holding ``pyramid.txt``.
    """
    manifest_path = Path(manifest_path)
    if manifest_path.is_dir():
        manifest_path = manifest_path / "pyramid.txt"
    meta = read_sidecar(manifest_path)
    try:
        count = int(meta["levels"])
        base_h, base_w = int(meta["base_h"]), int(meta["base_w"])
    except KeyError as exc:
        raise TensorFormatError(f"{manifest_path}: missing key {exc}") from None
    levels = []
    for k in range(count):
        name, _, shape = meta[f"level_{k}"].partition(" ")
        arr = read_tensor(os.path.join(manifest_path.parent, name))
        expected = tuple(int(s) for s in shape.split("x")) if shape else arr.shape
        if arr.shape != expected:
            raise TensorFormatError(f"{name}: shape {arr.shape} != manifest {expected}")
        levels.append(arr)
    return levels, base_h, base_w

"""Stream and output file formats.

Two interchangeable encodings, chosen by extension:
  .f32  raw little-endian IEEE-754 binary32, channel-interleaved per time
        step (t0c0 t0c1 ... t1c0 ...); reading needs the channel count
  .csv  one row per time step, one column per channel

Window outputs use the same encodings with one record per emitted output
(a record is the output tensor flattened time-major).
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .graph import ValidationError


def _format_of(path: Path) -> str:
    ext = path.suffix.lower()
    if ext == ".f32":
        return "f32"
    if ext == ".csv":
        return "csv"
    raise ValidationError(f"unknown stream format {ext!r} (use .f32 or .csv)")


def read_stream(path: Union[str, Path], channels: Optional[int] = None) -> np.ndarray:
    """Read a stream file into a (channels, time) float32 array."""
    path = Path(path)
    fmt = _format_of(path)
    if fmt == "f32":
        if channels is None:
            raise ValidationError(".f32 streams need an explicit channel count")
        flat = np.fromfile(path, dtype="<f4")
        if flat.size % channels != 0:
            raise ValidationError(
                f"{path}: {flat.size} values do not divide into {channels} channels")
        return np.ascontiguousarray(flat.reshape(-1, channels).T)
    rows = np.loadtxt(path, delimiter=",", dtype=np.float32, ndmin=2)
    if channels is not None and rows.shape[1] != channels:
        raise ValidationError(
            f"{path}: {rows.shape[1]} columns but the model expects {channels} channels")
    return np.ascontiguousarray(rows.T)


def write_stream(path: Union[str, Path], stream: np.ndarray) -> None:
    """Write a (channels, time) array as a stream file."""
    path = Path(path)
    fmt = _format_of(path)
    rows = np.asarray(stream, dtype=np.float32).T  # (time, channels)
    if fmt == "f32":
        rows.astype("<f4").tofile(path)
    else:
        np.savetxt(path, rows, delimiter=",", fmt="%.9g")


def write_records(path: Union[str, Path], records: Sequence[np.ndarray]) -> None:
    """Write per-window outputs: one record per output, flattened time-major."""
    path = Path(path)
    fmt = _format_of(path)
    flat = [np.asarray(r, dtype=np.float32).T.reshape(-1) for r in records]
    if fmt == "f32":
        np.concatenate(flat).astype("<f4").tofile(path)
    else:
        with path.open("w", encoding="utf-8") as fh:
            for rec in flat:
                fh.write(",".join(f"{v:.9g}" for v in rec) + "\n")

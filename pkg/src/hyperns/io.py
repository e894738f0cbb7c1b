"""Trace CSV and binary checkpoint persistence.

Checkpoint layout (all little-endian)::

    offset  size  field
    0       8     magic b"HNAVCKPT"
    8       4     version (u32), currently 1
    12      4     d (u32)
    16      4     n (u32)
    20      8     period (f64)
    28      8     t (f64)
    36      8     step_count (u64)
    44      ...   d * n**d complex coefficients, (re, im) f64 pairs,
                  component-major then C order over the lattice in FFT
                  index order, cell-mean normalization
"""

from __future__ import annotations

import csv
import os
import struct
from pathlib import Path
from typing import Union

import numpy as np

from .diagnostics import COLUMNS, EnergyTrace
from .dynamics import SolverState
from .spectral import SpectralField, make_lattice

__all__ = [
    "CHECKPOINT_MAGIC",
    "CHECKPOINT_VERSION",
    "HEADER",
    "CheckpointError",
    "TraceFormatError",
    "write_trace",
    "read_trace",
    "write_checkpoint",
    "read_checkpoint",
    "checkpoint_payload_size",
]

PathLike = Union[str, os.PathLike]

CHECKPOINT_MAGIC = b"HNAVCKPT"
CHECKPOINT_VERSION = 1
HEADER = struct.Struct("<8sIIIddQ")


class TraceFormatError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


def write_trace(trace: EnergyTrace, path: PathLike) -> None:
    """CSV with the fixed column header; floats written as shortest round-trip repr."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(COLUMNS)
        for row in trace.data:
            writer.writerow([repr(float(x)) for x in row])


def read_trace(path: PathLike) -> EnergyTrace:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != COLUMNS:
            raise TraceFormatError(f"{path}: malformed header {header!r}; expected {COLUMNS}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(COLUMNS):
                raise TraceFormatError(
                    f"{path}:{lineno}: row has {len(row)} fields, expected {len(COLUMNS)}"
                )
            try:
                rows.append([float(x) for x in row])
            except ValueError as exc:
                raise TraceFormatError(f"{path}:{lineno}: {exc}") from None
    return EnergyTrace.from_rows(rows)


def checkpoint_payload_size(d: int, n: int) -> int:
    return d * n**d * 16


def write_checkpoint(state: SolverState, path: PathLike) -> None:
    lat = state.u.lattice
    header = HEADER.pack(
        CHECKPOINT_MAGIC,
        CHECKPOINT_VERSION,
        lat.d,
        lat.n,
        float(lat.period),
        float(state.t),
        int(state.step_count),
    )
    payload = np.ascontiguousarray(state.u.coeffs, dtype="<c16").tobytes(order="C")
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(payload)
    os.replace(tmp, path)


def read_checkpoint(path: PathLike) -> SolverState:
    raw = Path(path).read_bytes()
    if len(raw) < 8 or raw[:8] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: magic mismatch, not a checkpoint file")
    if len(raw) < HEADER.size:
        raise CheckpointError(f"{path}: truncated payload (header incomplete)")
    _, version, d, n, period, t, step_count = HEADER.unpack_from(raw)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: checkpoint version {version} unsupported")
    try:
        lattice = make_lattice(d, n, period)
    except ValueError as exc:
        raise CheckpointError(f"{path}: invalid lattice in header: {exc}") from None
    expected = checkpoint_payload_size(d, n)
    body = raw[HEADER.size :]
    if len(body) < expected:
        raise CheckpointError(
            f"{path}: truncated payload ({len(body)} of {expected} bytes)"
        )
    if len(body) > expected:
        raise CheckpointError(f"{path}: {len(body) - expected} trailing bytes after payload")
    coeffs = np.frombuffer(body, dtype="<c16").reshape((d,) + lattice.shape)
    u = SpectralField(lattice, coeffs, False)
    norm = u.norm()
    flag = u.divergence_error() <= 1e-10 * norm if norm > 0 else True
    return SolverState(t, u.replace(u.coeffs, divergence_free=flag), step_count)

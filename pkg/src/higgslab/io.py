"""Checkpoint files and JSON-lines diagnostics.

Checkpoint layout (all little-endian)::

    b"YMHF"                      magic
    u32 version                  currently 1
    u32 n, u32 rank              complex dimension and bundle rank
    u32 grid[2n]                 grid sizes
    f64 sides[2n]                side lengths
    f64 t                        flow time
    complex128 A[2n, *grid, r, r]      interleaved (re, im), row-major
    complex128 theta[n, *grid, r, r]
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .bundle import Connection, HiggsField
from .flow import DiagnosticsRecord, HiggsState
from .geometry import TorusGeometry

MAGIC = b"YMHF"
VERSION = 1
_C16 = np.dtype("<c16")


class CheckpointError(ValueError):
    pass


def write_checkpoint(path, state: HiggsState) -> Path:
    geom = state.geometry
    r = state.A.rank
    head = MAGIC + struct.pack("<III", VERSION, geom.complex_dim, r)
    head += struct.pack(f"<{geom.dim}I", *geom.grid)
    head += struct.pack(f"<{geom.dim}d", *geom.sides)
    head += struct.pack("<d", float(state.t))
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(head)
        fh.write(np.ascontiguousarray(state.A.coeffs, dtype=_C16).tobytes())
        fh.write(np.ascontiguousarray(state.theta.comps, dtype=_C16).tobytes())
    tmp.replace(path)  # never leave a half-written checkpoint behind
    return path


def read_checkpoint(path) -> HiggsState:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {data[:4]!r}")
    try:
        version, n, r = struct.unpack_from("<III", data, 4)
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported version {version}")
        if n not in (1, 2):
            raise CheckpointError(f"{path}: bad complex dimension {n}")
        off = 16
        grid = struct.unpack_from(f"<{2 * n}I", data, off)
        off += 8 * n
        sides = struct.unpack_from(f"<{2 * n}d", data, off)
        off += 16 * n
        (t,) = struct.unpack_from("<d", data, off)
        off += 8
    except struct.error as exc:
        raise CheckpointError(f"{path}: truncated header") from exc
    geom = TorusGeometry(n, sides, grid)
    a_shape = (2 * n, *grid, r, r)
    t_shape = (n, *grid, r, r)
    na, nt = int(np.prod(a_shape)), int(np.prod(t_shape))
    if len(data) != off + 16 * (na + nt):
        raise CheckpointError(f"{path}: expected {off + 16 * (na + nt)} bytes, found {len(data)}")
    A = np.frombuffer(data, _C16, na, off).reshape(a_shape).astype(complex)
    th = np.frombuffer(data, _C16, nt, off + 16 * na).reshape(t_shape).astype(complex)
    return HiggsState(Connection(geom, A), HiggsField(geom, th), t)


class DiagnosticsWriter:
    """Append-only JSON-lines sink for :class:`DiagnosticsRecord`."""

    def __init__(self, path, every: int = 1, append: bool = False):
        self.path = Path(path)
        self.every = max(int(every), 1)
        self.count = 0
        self.last = None
        self._fh = open(self.path, "a" if append else "w", encoding="utf-8")

    def __call__(self, rec: DiagnosticsRecord):
        if self.count % self.every == 0:
            self._write(rec)
        else:
            self.last = rec
        self.count += 1

    def _write(self, rec):
        self._fh.write(rec.to_json() + "\n")
        self._fh.flush()
        self.last = None

    def close(self):
        # the final record is always kept
        if self.last is not None:
            self._write(self.last)
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_diagnostics(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]

"""Binary field snapshots, JSON sidecars and atomic file output.

Snapshot layout (little-endian): a 64-byte header packing magic ``KSSF``,
version, dim, n (u32 each), L and time (f64) and a kind byte (0 physical,
1 spectral), zero padded; then row-major f64 samples, with complex data
stored as interleaved real/imaginary pairs.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import struct
import subprocess
import tempfile
from pathlib import Path

import numpy as np

from .spectral_core import FrequencyGrid, PhysicalField, SpectralField, make_grid

__all__ = [
    "MAGIC",
    "VERSION",
    "write_snapshot",
    "read_snapshot",
    "atomic_write_text",
    "atomic_write_bytes",
    "dump_json",
    "config_hash",
    "revision",
    "rows_to_csv",
]

MAGIC = b"KSSF"
VERSION = 1
HEADER_SIZE = 64
_HEADER = struct.Struct("<4sIIIddB")
KIND_PHYSICAL = 0
KIND_SPECTRAL = 1


def atomic_write_bytes(path, data: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str):
    atomic_write_bytes(path, text.encode("utf-8"))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if x != x or x in (float("inf"), float("-inf")):
            return str(x)
        return x
    return obj


def dump_json(obj) -> str:
    """Deterministic JSON: sorted keys, non-finite floats as strings."""
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(_jsonable(cfg), sort_keys=True).encode()).hexdigest()


def revision() -> str:
    """Short VCS revision of the source tree, or the package version."""
    from . import __version__

    try:
        out = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return f"v{__version__}"


def rows_to_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return v


def _encode(field, t: float) -> tuple[bytes, dict]:
    g = field.grid
    if isinstance(field, SpectralField):
        kind = KIND_SPECTRAL
        data = np.ascontiguousarray(field.coeffs, dtype="<c16").view("<f8")
    elif isinstance(field, PhysicalField):
        kind = KIND_PHYSICAL
        data = np.ascontiguousarray(field.values, dtype="<f8")
    else:
        raise TypeError("expected a PhysicalField or SpectralField")
    if field_shape(field) != g.shape:
        raise ValueError("snapshots hold a single field without batch axes")
    head = _HEADER.pack(MAGIC, VERSION, g.dim, g.n, float(g.L), float(t), kind)
    head = head.ljust(HEADER_SIZE, b"\0")
    meta = {
        "magic": MAGIC.decode(),
        "version": VERSION,
        "dim": g.dim,
        "n": g.n,
        "L": float(g.L),
        "time": float(t),
        "kind": "spectral" if kind == KIND_SPECTRAL else "physical",
    }
    return head + data.tobytes(), meta


def field_shape(field):
    arr = field.coeffs if isinstance(field, SpectralField) else field.values
    return arr.shape


def write_snapshot(path, field, t: float = 0.0, provenance: dict | None = None):
    """Write ``field`` and a ``.json`` sidecar next to it."""
    blob, meta = _encode(field, t)
    meta.update(provenance or {})
    path = Path(path)
    atomic_write_bytes(path, blob)
    atomic_write_text(path.with_suffix(path.suffix + ".json"), dump_json(meta))


def read_snapshot(path) -> tuple[PhysicalField | SpectralField, float]:
    raw = Path(path).read_bytes()
    if len(raw) < HEADER_SIZE:
        raise ValueError(f"{path}: truncated header")
    magic, version, dim, n, L, t, kind = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    grid: FrequencyGrid = make_grid(dim, n, L)
    body = np.frombuffer(raw, dtype="<f8", offset=HEADER_SIZE)
    count = grid.size * (2 if kind == KIND_SPECTRAL else 1)
    if body.size != count:
        raise ValueError(f"{path}: expected {count} values, found {body.size}")
    if kind == KIND_SPECTRAL:
        return SpectralField(grid, body.view("<c16").reshape(grid.shape).astype(complex)), t
    if kind == KIND_PHYSICAL:
        return PhysicalField(grid, body.reshape(grid.shape).astype(float)), t
    raise ValueError(f"{path}: unknown kind byte {kind}")

"""FHST binary field files, deterministic JSON and CSV emitters."""

from __future__ import annotations

import csv
import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"FHST"
VERSION = 1


class FormatError(ValueError):
    pass


@dataclass(frozen=True)
class FhstData:
    """Samples on an x-grid, optionally stacked over a leading y-axis."""

    T: float
    m: float
    s: float
    samples: np.ndarray
    y_nodes: np.ndarray | None = None

    @property
    def grid_sizes(self) -> tuple[int, ...]:
        return self.samples.shape[1:] if self.y_nodes is not None else self.samples.shape


def _header(N: int, grid_sizes, T: float, m: float, s: float) -> bytes:
    return (MAGIC + struct.pack("<II", VERSION, N)
            + struct.pack(f"<{N}Q", *grid_sizes) + struct.pack("<3d", T, m, s))


def write_fhst(path, samples, T: float, m: float, s: float, y_nodes=None) -> Path:
    """Write real samples (row-major, little-endian f64).

    With ``y_nodes`` the array has shape ``(len(y_nodes),) + grid`` and a
    y-axis block (u64 count, f64 nodes) follows the T, m, s fields.
    """
    if np.iscomplexobj(samples):
        raise FormatError("FHST stores real samples only")
    samples = np.asarray(samples, dtype=np.float64)
    if y_nodes is None:
        grid = samples.shape
    else:
        y_nodes = np.asarray(y_nodes, dtype=np.float64).ravel()
        if samples.shape[0] != y_nodes.size:
            raise FormatError(f"{y_nodes.size} y nodes but leading axis {samples.shape[0]}")
        grid = samples.shape[1:]
    payload = _header(len(grid), grid, T, m, s)
    if y_nodes is not None:
        payload += struct.pack("<Q", y_nodes.size) + y_nodes.astype("<f8").tobytes()
    payload += np.ascontiguousarray(samples, dtype="<f8").tobytes()
    path = Path(path)
    path.write_bytes(payload)
    return path


def read_fhst(path) -> FhstData:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}")
    version, N = struct.unpack_from("<II", raw, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    off = 12
    grid = struct.unpack_from(f"<{N}Q", raw, off)
    off += 8 * N
    T, m, s = struct.unpack_from("<3d", raw, off)
    off += 24
    count = math.prod(grid)
    remaining = len(raw) - off
    y_nodes = None
    if remaining == 8 * count:
        samples = np.frombuffer(raw, dtype="<f8", count=count, offset=off).reshape(grid)
    else:
        # a y-axis block is present: u64 ny, ny nodes, ny * count samples
        if remaining < 8:
            raise FormatError(f"{path}: truncated")
        (ny,) = struct.unpack_from("<Q", raw, off)
        off += 8
        if len(raw) - off != 8 * ny * (1 + count):
            raise FormatError(f"{path}: length does not match header")
        y_nodes = np.frombuffer(raw, dtype="<f8", count=ny, offset=off).astype(np.float64)
        off += 8 * ny
        samples = np.frombuffer(raw, dtype="<f8", count=ny * count, offset=off).reshape((ny,) + grid)
    return FhstData(T, m, s, samples.astype(np.float64), y_nodes)


# --- JSON ------------------------------------------------------------------

def _normalize(obj):
    """Replace floats with fixed 17-digit tokens so output is byte-stable."""
    if isinstance(obj, dict):
        return {str(k): _normalize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_normalize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _normalize(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x) or math.isinf(x):
            return str(x)
        return _Float(x)
    if isinstance(obj, Path):
        return str(obj)
    return obj


class _Float(float):
    def __repr__(self):
        return format(float(self), ".17g")


class _Encoder(json.JSONEncoder):
    def iterencode(self, o, _one_shot=False):
        # the C encoder ignores float subclasses' repr; force the Python path
        return json.encoder._make_iterencode(
            {}, self.default, json.encoder.encode_basestring_ascii, self.indent,
            lambda f: repr(f) if isinstance(f, _Float) else float.__repr__(f),
            self.key_separator, self.item_separator, self.sort_keys, self.skipkeys, _one_shot,
        )(o, 0)


def dumps(obj) -> str:
    return json.dumps(_normalize(obj), cls=_Encoder, indent=2, sort_keys=True) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(dumps(obj), encoding="utf-8")
    return path


# --- CSV -------------------------------------------------------------------

def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format(v, ".17g") if isinstance(v, float) else v for v in row])
    return path


def spectrum_rows(table):
    for e in table.entries:
        yield [e.index_range[0], e.index_range[1], e.k_squared, e.multiplicity, float(e.mu), float(e.lam)]


SPECTRUM_HEADER = ["first_index", "last_index", "k_squared", "multiplicity", "mu", "lambda"]


def profile_rows(samples: np.ndarray, coords):
    """One row per grid point: coordinates then value."""
    mesh = np.meshgrid(*coords, indexing="ij")
    flat = [g.ravel() for g in mesh] + [np.asarray(samples).ravel()]
    for row in zip(*flat):
        yield [float(v) for v in row]

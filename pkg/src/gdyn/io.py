"""File formats.

FieldGrid
    ``<stem>.csv`` with header ``re,im,value,stderr`` and one row per cell
    (real axis outer, imaginary axis inner), plus ``<stem>.json`` holding the
    window, shape and metadata. Floats are written with ``repr`` so a
    write/read cycle is bit exact; missing values are ``nan``.

Snapshots
    CSV with header ``step,time,index,re,im``.

Binary matrices
    ``b"GDYN"``, one version byte, ``uint32`` N (little endian), then ``N*N``
    complex128 values (little endian, row major).

Manifest
    JSON written atomically once a run has finished, with the SHA-256 of
    every emitted file.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .observables import FieldGrid

MAGIC = b"GDYN"
BINARY_VERSION = 1
_HEADER = struct.Struct("<4sBI")
GRID_COLUMNS = ("re", "im", "value", "stderr")
SNAPSHOT_COLUMNS = ("step", "time", "index", "re", "im")


def _f(x) -> str:
    return repr(float(x))


def write_atomic(path, data: bytes | str) -> Path:
    """Write through a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    raw = data.encode() if isinstance(data, str) else data
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(raw)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


# --------------------------------------------------------------------------- FieldGrid


def field_grid_csv(grid: FieldGrid) -> str:
    vals = np.asarray(grid.values)
    if np.iscomplexobj(vals):
        if np.any(vals.imag != 0):
            raise ValidationError("FieldGrid CSV stores real values only")
        vals = vals.real
    centers = grid.centers()
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(GRID_COLUMNS)
    for i in range(grid.nx):
        for j in range(grid.ny):
            c = centers[i, j]
            wr.writerow((_f(c.real), _f(c.imag), _f(vals[i, j]), _f(grid.stderr[i, j])))
    return buf.getvalue()


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def field_grid_sidecar(grid: FieldGrid) -> str:
    doc = {"window": list(grid.window), "nx": grid.nx, "ny": grid.ny, "meta": _json_safe(grid.meta)}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def write_field_grid(grid: FieldGrid, stem) -> tuple[Path, Path]:
    stem = Path(stem)
    csv_path = write_atomic(stem.with_suffix(".csv"), field_grid_csv(grid))
    json_path = write_atomic(stem.with_suffix(".json"), field_grid_sidecar(grid))
    return csv_path, json_path


def read_field_grid(stem) -> FieldGrid:
    stem = Path(stem)
    doc = json.loads(stem.with_suffix(".json").read_text())
    nx, ny = int(doc["nx"]), int(doc["ny"])
    with open(stem.with_suffix(".csv"), newline="") as fh:
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != GRID_COLUMNS:
        raise ValidationError(f"unexpected header {rows[0]}")
    body = rows[1:]
    if len(body) != nx * ny:
        raise ValidationError(f"expected {nx * ny} rows, found {len(body)}")
    arr = np.array([[float(v) for v in r] for r in body]).reshape(nx, ny, 4)
    return FieldGrid(tuple(doc["window"]), nx, ny, arr[..., 2], arr[..., 3], doc.get("meta", {}))


# --------------------------------------------------------------------------- snapshots


def snapshots_csv(snapshots) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(SNAPSHOT_COLUMNS)
    for snap in snapshots:
        for idx, lam in enumerate(np.asarray(snap.lambdas)):
            wr.writerow((int(snap.step), _f(snap.time), idx, _f(lam.real), _f(lam.imag)))
    return buf.getvalue()


def read_snapshots_csv(path) -> list[tuple[int, float, np.ndarray]]:
    """``(step, time, lambdas)`` per snapshot, in file order."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != SNAPSHOT_COLUMNS:
        raise ValidationError(f"unexpected header {rows[0]}")
    out: list[tuple[int, float, list]] = []
    for r in rows[1:]:
        step, time = int(r[0]), float(r[1])
        if not out or out[-1][0] != step:
            out.append((step, time, []))
        out[-1][2].append(complex(float(r[3]), float(r[4])))
    return [(s, t, np.array(v, dtype=np.complex128)) for s, t, v in out]


# --------------------------------------------------------------------------- binary matrices


def matrix_bytes(x) -> bytes:
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise ValidationError("binary dumps hold square matrices")
    return _HEADER.pack(MAGIC, BINARY_VERSION, x.shape[0]) + np.ascontiguousarray(x, dtype="<c16").tobytes()


def matrix_from_bytes(raw: bytes) -> np.ndarray:
    if len(raw) < _HEADER.size:
        raise ValidationError("truncated matrix dump")
    magic, version, n = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValidationError("not a GDYN matrix dump")
    if version != BINARY_VERSION:
        raise ValidationError(f"unsupported dump version {version}")
    body = raw[_HEADER.size:]
    if len(body) != 16 * n * n:
        raise ValidationError(f"dump body has {len(body)} bytes, expected {16 * n * n}")
    return np.frombuffer(body, dtype="<c16").reshape(n, n).astype(np.complex128)


def write_matrix(path, x) -> Path:
    return write_atomic(path, matrix_bytes(x))


def read_matrix(path) -> np.ndarray:
    return matrix_from_bytes(Path(path).read_bytes())


# --------------------------------------------------------------------------- manifest


def write_manifest(path, *, argv, config: dict, seed, version: str, started: str, finished: str,
                   outputs, root=None) -> Path:
    """Record the run and the hash of every output; paths are stored relative to ``root``."""
    root = Path(root) if root is not None else Path(path).parent
    files = []
    for p in sorted({Path(o) for o in outputs}):
        rel = os.path.relpath(p, root)
        files.append({"path": rel, "sha256": sha256_file(p), "bytes": p.stat().st_size})
    doc = {
        "argv": list(argv),
        "config": _json_safe(config),
        "seed": seed,
        "version": version,
        "started": started,
        "finished": finished,
        "outputs": files,
    }
    return write_atomic(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def verify_manifest(path) -> list[str]:
    """Paths whose current hash differs from the recorded one."""
    path = Path(path)
    doc = json.loads(path.read_text())
    bad = []
    for entry in doc["outputs"]:
        p = path.parent / entry["path"]
        if not p.exists() or sha256_file(p) != entry["sha256"]:
            bad.append(entry["path"])
    return bad

"""On-disk formats: trajectory CSV/binary and header+payload blobs.

Binary trajectory layout (little-endian)::

    b"KCTRAJ01" | N: u32 | rows: u64 | dt: f64 | rows*N f64, row-major

Blob layout used for dictionaries and models::

    magic (8 bytes) | header length: u32 | UTF-8 JSON header | f64 payload
"""

from __future__ import annotations

import csv
import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .dynamics import Trajectory
from .errors import ContractViolation

TRAJ_MAGIC = b"KCTRAJ01"
_TRAJ_HEAD = struct.Struct("<8sIQd")


def write_trajectory_csv(path, traj: Trajectory):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"w{i}" for i in range(traj.dim)])
        for t, row in zip(traj.times, traj.states):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in row])
    return path


def read_trajectory_csv(path, dt=None) -> Trajectory:
    """Read the CSV format.

    ``dt`` is inferred from the time column unless given; pass it explicitly
    when a bit-exact step size matters.
    """
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if not header or header[0] != "t" or any(h != f"w{i}" for i, h in enumerate(header[1:])):
        raise ContractViolation(f"{path}: unexpected trajectory header {header[:4]}...")
    data = np.array(body, dtype=float)
    if data.shape[0] < 1:
        raise ContractViolation(f"{path}: no rows")
    times = data[:, 0]
    if dt is None:
        dt = float((times[-1] - times[0]) / (len(times) - 1)) if len(times) > 1 else 1.0
    return Trajectory(data[:, 1:], dt, float(times[0]))


def write_trajectory_bin(path, traj: Trajectory):
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(_TRAJ_HEAD.pack(TRAJ_MAGIC, traj.dim, len(traj), traj.dt))
        fh.write(np.ascontiguousarray(traj.states, dtype="<f8").tobytes())
    return path


def read_trajectory_bin(path, t0=0.0) -> Trajectory:
    """Read the binary format. ``t0`` is not stored and must be supplied."""
    raw = Path(path).read_bytes()
    magic, n, rows, dt = _TRAJ_HEAD.unpack_from(raw)
    if magic != TRAJ_MAGIC:
        raise ContractViolation(f"{path}: bad magic {magic!r}")
    payload = np.frombuffer(raw, dtype="<f8", offset=_TRAJ_HEAD.size)
    if payload.size != n * rows:
        raise ContractViolation(f"{path}: expected {n * rows} values, found {payload.size}")
    return Trajectory(payload.reshape(rows, n).astype(float), dt, t0)


def array_digest(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(a, dtype="<f8")
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()


def write_blob(path, magic: bytes, header: dict, arrays):
    """Write a JSON header followed by the concatenated f64 arrays.

    Array shapes are recorded in the header under ``"_shapes"``.
    """
    if len(magic) != 8:
        raise ValueError("magic must be 8 bytes")
    header = dict(header, _shapes=[list(np.shape(a)) for a in arrays])
    text = json.dumps(header, sort_keys=True).encode()
    with Path(path).open("wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<I", len(text)))
        fh.write(text)
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def read_blob(path, magic: bytes):
    raw = Path(path).read_bytes()
    if raw[:8] != magic:
        raise ContractViolation(f"{path}: bad magic {raw[:8]!r}, expected {magic!r}")
    (n,) = struct.unpack_from("<I", raw, 8)
    header = json.loads(raw[12:12 + n])
    offset = 12 + n
    arrays = []
    for shape in header.pop("_shapes"):
        count = int(np.prod(shape, dtype=np.int64))
        arrays.append(np.frombuffer(raw, dtype="<f8", count=count, offset=offset).reshape(shape).astype(float))
        offset += 8 * count
    return header, arrays

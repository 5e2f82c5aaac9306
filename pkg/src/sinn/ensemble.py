"""Trajectory ensembles and their on-disk formats.

Binary container layout (little endian)::

    b"SINE" | u32 version | u64 batch | u64 time | u64 dim | f64 dt | f64 data[batch*time*dim]

Data is stored row-major (batch, time, dim).

CSV layout: a ``# sinn-ensemble dt=... batch=... time=... dim=...`` comment
line, a column header, then one row per time step with the ``dim`` columns of
trajectory 0 first, then trajectory 1, and so on.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, NumericError, ParameterError, ShapeError

ENSEMBLE_MAGIC = b"SINE"
ENSEMBLE_VERSION = 1
_HEADER = struct.Struct("<4sIQQQd")


@dataclass
class Ensemble:
    """A ``batch x time x dim`` array of trajectories sampled every ``dt``."""

    data: np.ndarray
    dt: float

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3 or min(data.shape) < 1:
            raise ShapeError(f"ensemble data must be batch x time x dim, got shape {data.shape}")
        if not self.dt > 0:
            raise ParameterError(f"dt must be > 0, got {self.dt}")
        if not np.isfinite(data).all():
            raise NumericError("ensemble contains non-finite values")
        self.data = data
        self.dt = float(self.dt)

    @property
    def batch(self) -> int:
        return self.data.shape[0]

    @property
    def time(self) -> int:
        return self.data.shape[1]

    @property
    def dim(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def component(self, k: int) -> "Ensemble":
        return Ensemble(self.data[:, :, k : k + 1], self.dt)

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.data).all())

    def __eq__(self, other) -> bool:
        if not isinstance(other, Ensemble):
            return NotImplemented
        return self.dt == other.dt and np.array_equal(self.data, other.data)


def save_ensemble(e: Ensemble, path) -> None:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        path.write_text(ensemble_to_csv(e))
        return
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(ENSEMBLE_MAGIC, ENSEMBLE_VERSION, e.batch, e.time, e.dim, e.dt))
        fh.write(np.ascontiguousarray(e.data, dtype="<f8").tobytes())


def load_ensemble(path) -> Ensemble:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return ensemble_from_csv(path.read_text())
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: file too short for an ensemble header")
    magic, version, b, t, d, dt = _HEADER.unpack_from(raw)
    if magic != ENSEMBLE_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {ENSEMBLE_MAGIC!r}")
    if version != ENSEMBLE_VERSION:
        raise FormatError(f"{path}: unsupported ensemble version {version}")
    n = b * t * d
    body = raw[_HEADER.size :]
    if len(body) != 8 * n:
        raise FormatError(f"{path}: expected {n} values, found {len(body) // 8}")
    data = np.frombuffer(body, dtype="<f8").astype(np.float64).reshape(b, t, d)
    return Ensemble(data, dt)


def ensemble_to_csv(e: Ensemble) -> str:
    buf = io.StringIO()
    buf.write(f"# sinn-ensemble dt={e.dt!r} batch={e.batch} time={e.time} dim={e.dim}\n")
    cols = [f"x{i}_{k}" for i in range(e.batch) for k in range(e.dim)]
    buf.write(",".join(cols) + "\n")
    table = e.data.transpose(1, 0, 2).reshape(e.time, e.batch * e.dim)
    np.savetxt(buf, table, delimiter=",", fmt="%.17g")
    return buf.getvalue()


def ensemble_from_csv(text: str) -> Ensemble:
    lines = text.splitlines()
    if len(lines) < 3 or not lines[0].startswith("# sinn-ensemble"):
        raise FormatError("not a sinn ensemble CSV (missing header)")
    try:
        meta = dict(tok.split("=", 1) for tok in lines[0].split()[2:])
        dt = float(meta["dt"])
        b, t, d = int(meta["batch"]), int(meta["time"]), int(meta["dim"])
    except (KeyError, ValueError) as exc:
        raise FormatError(f"malformed ensemble CSV header: {lines[0]!r}") from exc
    table = np.loadtxt(io.StringIO("\n".join(lines[2:])), delimiter=",", ndmin=2)
    if table.shape != (t, b * d):
        raise FormatError(f"CSV body has shape {table.shape}, header says {(t, b * d)}")
    return Ensemble(table.reshape(t, b, d).transpose(1, 0, 2).copy(), dt)

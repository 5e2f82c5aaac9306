"""The SINN generator: stacked LSTM layers plus a linear readout, fed i.i.d. noise.

Only the input is random; the network itself is a deterministic map from a
noise sequence to an output sequence.  Parameters are plain numpy arrays kept
in a name-ordered dict, e.g. ``lstm0.W_f`` ... ``lstm1.b_c`` and
``readout.W_m``.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .ensemble import Ensemble
from .errors import FormatError, NumericError, ParameterError, ShapeError
from .noise import NoiseSpec, sample_noise, trajectory_rng

__all__ = [
    "SinnConfig",
    "SinnParams",
    "GATES",
    "init_params",
    "lstm_forward",
    "readout",
    "forward",
    "sinn_generate",
    "save_checkpoint",
    "load_checkpoint",
    "Checkpoint",
    "vanilla_rnn_step",
]

GATES = ("f", "i", "o", "c")
CHECKPOINT_MAGIC = b"SINN"
CHECKPOINT_VERSION = 1
_NOISE_KINDS = {"gaussian": 0, "uniform": 1, "exponential": 2}


@dataclass(frozen=True)
class SinnConfig:
    num_layers: int = 2
    hidden_size: int = 5
    input_dim: int = 1
    output_dim: int = 1
    dropout_prob: float = 0.0

    def __post_init__(self):
        for name in ("num_layers", "hidden_size", "input_dim", "output_dim"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ParameterError(f"{name} must be an integer >= 1, got {v!r}")
        if not 0.0 <= self.dropout_prob < 1.0:
            raise ParameterError(f"dropout_prob must be in [0, 1), got {self.dropout_prob}")

    def in_width(self, layer: int) -> int:
        return self.input_dim if layer == 0 else self.hidden_size

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        H = self.hidden_size
        shapes = {}
        for l in range(self.num_layers):
            for g in GATES:
                shapes[f"lstm{l}.W_{g}"] = (H, self.in_width(l))
            for g in GATES:
                shapes[f"lstm{l}.U_{g}"] = (H, H)
            for g in GATES:
                shapes[f"lstm{l}.b_{g}"] = (H,)
        shapes["readout.W_m"] = (self.output_dim, H)
        return shapes


class SinnParams(dict):
    """Name -> array mapping in the canonical order of ``SinnConfig.param_shapes``."""

    @classmethod
    def zeros(cls, config: SinnConfig) -> "SinnParams":
        return cls({k: np.zeros(s) for k, s in config.param_shapes().items()})

    def copy(self) -> "SinnParams":
        return SinnParams({k: v.copy() for k, v in self.items()})

    def check(self, config: SinnConfig):
        shapes = config.param_shapes()
        if list(self) != list(shapes):
            raise ShapeError(f"parameter names {list(self)} do not match config")
        for k, s in shapes.items():
            if self[k].shape != s:
                raise ShapeError(f"{k} has shape {self[k].shape}, expected {s}")
            if not np.isfinite(self[k]).all():
                raise NumericError(f"{k} has non-finite entries")

    def map(self, fn) -> "SinnParams":
        return SinnParams({k: fn(v) for k, v in self.items()})

    def equals(self, other: "SinnParams") -> bool:
        return list(self) == list(other) and all(np.array_equal(self[k], other[k]) for k in self)


def init_params(config: SinnConfig, seed: int) -> SinnParams:
    """Uniform(-1/sqrt(H), 1/sqrt(H)) weights; forget-gate bias 1, other biases 0."""
    rng = trajectory_rng(seed, 0)
    bound = 1.0 / math.sqrt(config.hidden_size)
    params = SinnParams()
    for name, shape in config.param_shapes().items():
        if ".b_" in name:
            params[name] = np.full(shape, 1.0 if name.endswith("b_f") else 0.0)
        else:
            params[name] = rng.uniform(-bound, bound, shape)
    return params


def _stacked(p, layer: int):
    """Gate-stacked ``W`` (4H x in), ``U`` (4H x H), ``b`` (4H) for one layer."""
    pre = f"lstm{layer}."
    parts = [[p[pre + f"{kind}_{g}"] for g in GATES] for kind in ("W", "U", "b")]
    if any(isinstance(x, ad.Var) for x in parts[0]):
        return tuple(ad.concat(xs, axis=0) for xs in parts)
    return tuple(np.concatenate(xs, axis=0) for xs in parts)


def lstm_layer_composed(u, W, U, b):
    """Same layer as :func:`autodiff.lstm_layer`, built from elementary primitives.

    Used as an independent check of the fused adjoint; much slower.
    """
    H = ad.value_of(U).shape[1]
    T = ad.value_of(u).shape[1]
    h = c = None
    hs = []
    Wt, Ut = ad.transpose(W), ad.transpose(U)
    for t in range(T):
        z = ad.add(ad.matmul(ad.getitem(u, (slice(None), t)), Wt), b)
        if h is not None:
            z = ad.add(z, ad.matmul(h, Ut))
        f = ad.sigmoid(ad.getitem(z, (slice(None), slice(0, H))))
        i = ad.sigmoid(ad.getitem(z, (slice(None), slice(H, 2 * H))))
        o = ad.sigmoid(ad.getitem(z, (slice(None), slice(2 * H, 3 * H))))
        g = ad.tanh(ad.getitem(z, (slice(None), slice(3 * H, 4 * H))))
        c = ad.mul(i, g) if c is None else ad.add(ad.mul(f, c), ad.mul(i, g))
        h = ad.mul(o, ad.tanh(c))
        hs.append(h)
    return ad.stack(hs, axis=1)


def lstm_forward(params, config: SinnConfig, inputs, dropout_on: bool = False, rng=None, fused: bool = True):
    """Hidden sequence (batch x time x hidden) of the last LSTM layer.

    ``params`` values may be arrays or tape :class:`Var` objects; with Vars
    every operation is recorded.  ``inputs`` is an Ensemble or a
    batch x time x input_dim array.  Dropout masks inter-layer activations
    (including the final hidden sequence before readout) when ``dropout_on``.
    """
    u = inputs.data if isinstance(inputs, Ensemble) else inputs
    uv = ad.value_of(u)
    if uv.ndim != 3 or uv.shape[2] != config.input_dim:
        raise ShapeError(f"input must be batch x time x {config.input_dim}, got {uv.shape}")
    layer = ad.lstm_layer if fused else lstm_layer_composed
    p = config.dropout_prob
    if dropout_on and p > 0 and rng is None:
        raise ParameterError("dropout needs an rng")
    h = u
    for l in range(config.num_layers):
        W, U, b = _stacked(params, l)
        h = layer(h, W, U, b)
        if dropout_on and p > 0:
            mask = (rng.random(ad.value_of(h).shape) >= p) / (1.0 - p)
            h = ad.mul(h, mask)
        hv = ad.value_of(h)
        if not np.isfinite(hv).all():
            bad = np.nonzero(~np.isfinite(hv).all(axis=(0, 2)))[0]
            raise NumericError(f"non-finite activation in layer {l} at step {int(bad[0])}")
    return h


def readout(params, hidden):
    """Per-step linear map ``chi_t = W_m h_t``."""
    Wm = params["readout.W_m"]
    hv = ad.value_of(hidden)
    if hv.shape[-1] != ad.value_of(Wm).shape[1]:
        raise ShapeError(f"hidden width {hv.shape[-1]} does not match W_m {ad.value_of(Wm).shape}")
    return ad.matmul(hidden, ad.transpose(Wm))


def forward(params, config: SinnConfig, noise, dropout_on: bool = False, rng=None):
    return readout(params, lstm_forward(params, config, noise, dropout_on, rng))


def sinn_generate(
    params: SinnParams,
    config: SinnConfig,
    noise_spec: NoiseSpec,
    batch: int,
    steps: int,
    dt: float = 1.0,
    warmup: int = 0,
    indices=None,
) -> Ensemble:
    """Sample noise, run the network without dropout, return ``batch x steps`` outputs.

    The first ``warmup`` outputs are computed and discarded so the returned
    window starts after the zero-state transient.  ``indices`` selects the
    noise sub-streams (see :func:`sample_noise`).
    """
    if warmup < 0:
        raise ParameterError("warmup must be >= 0")
    noise = sample_noise(noise_spec, batch, steps + warmup, config.input_dim, indices)
    out = forward(params, config, noise)
    return Ensemble(out[:, warmup:], dt)


def vanilla_rnn_step(A, B, theta, s, x):
    """One-layer RNN update ``s' = tanh(A s + B x - theta)``."""
    A, B, theta, s, x = (np.asarray(v, dtype=np.float64) for v in (A, B, theta, s, x))
    if A.shape != (s.shape[-1], s.shape[-1]) or B.shape[0] != s.shape[-1] or B.shape[1] != x.shape[-1]:
        raise ShapeError(f"inconsistent shapes A{A.shape} B{B.shape} s{s.shape} x{x.shape}")
    if theta.shape not in ((), (s.shape[-1],)):
        raise ShapeError(f"theta shape {theta.shape} does not match state width {s.shape[-1]}")
    return np.tanh(s @ A.T + x @ B.T - theta)


# ---------------------------------------------------------------- checkpoints


@dataclass
class Checkpoint:
    config: SinnConfig
    params: SinnParams
    dt: float = 1.0
    noise: NoiseSpec = NoiseSpec()
    warmup: int = 0


def _meta_arrays(ck: Checkpoint) -> dict[str, np.ndarray]:
    d = ck.noise.distribution
    kind = ck.noise.to_dict()["kind"]
    vals = {
        "gaussian": lambda: [d.mean, d.std],
        "uniform": lambda: [d.lo, d.hi],
        "exponential": lambda: [d.rate, 0.0],
    }[kind]()
    return {
        "meta.dt": np.array([ck.dt]),
        "meta.dropout": np.array([ck.config.dropout_prob]),
        "meta.noise": np.array([_NOISE_KINDS[kind], *vals]),
        "meta.warmup": np.array([float(ck.warmup)]),
    }


def save_checkpoint(ck: Checkpoint, path) -> None:
    """Write ``SINN | u32 version | 4 x u32 config | named arrays``.

    Each array: u32 name length, UTF-8 name, u32 rank, rank x u64 dims,
    little-endian f64 values in row-major order.
    """
    c = ck.config
    out = bytearray()
    out += CHECKPOINT_MAGIC
    out += struct.pack("<I", CHECKPOINT_VERSION)
    out += struct.pack("<4I", c.num_layers, c.hidden_size, c.input_dim, c.output_dim)
    arrays = dict(ck.params)
    arrays.update(_meta_arrays(ck))
    for name, arr in arrays.items():
        a = np.ascontiguousarray(arr, dtype="<f8")
        raw = name.encode()
        out += struct.pack("<I", len(raw)) + raw
        out += struct.pack("<I", a.ndim)
        out += struct.pack(f"<{a.ndim}Q", *a.shape)
        out += a.tobytes()
    Path(path).write_bytes(bytes(out))


def load_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}, expected {CHECKPOINT_MAGIC!r}")
    try:
        (version,) = struct.unpack_from("<I", raw, 4)
        if version != CHECKPOINT_VERSION:
            raise FormatError(f"{path}: unsupported checkpoint version {version}")
        nl, hs, ind, outd = struct.unpack_from("<4I", raw, 8)
        pos = 24
        arrays = {}
        while pos < len(raw):
            (n,) = struct.unpack_from("<I", raw, pos)
            name = raw[pos + 4 : pos + 4 + n].decode()
            pos += 4 + n
            (rank,) = struct.unpack_from("<I", raw, pos)
            dims = struct.unpack_from(f"<{rank}Q", raw, pos + 4)
            pos += 4 + 8 * rank
            count = int(np.prod(dims)) if rank else 1
            if pos + 8 * count > len(raw):
                raise FormatError(f"{path}: truncated array {name!r}")
            arrays[name] = np.frombuffer(raw, "<f8", count, pos).astype(np.float64).reshape(dims)
            pos += 8 * count
    except struct.error as exc:
        raise FormatError(f"{path}: truncated checkpoint") from exc
    dropout = float(arrays.pop("meta.dropout", np.zeros(1))[0])
    config = SinnConfig(nl, hs, ind, outd, dropout)
    dt = float(arrays.pop("meta.dt", np.ones(1))[0])
    warmup = int(arrays.pop("meta.warmup", np.zeros(1))[0])
    noise = NoiseSpec()
    if "meta.noise" in arrays:
        code, a, b = arrays.pop("meta.noise")
        kind = {v: k for k, v in _NOISE_KINDS.items()}[int(code)]
        noise = NoiseSpec.from_dict(
            {"gaussian": {"kind": kind, "mean": a, "std": b},
             "uniform": {"kind": kind, "lo": a, "hi": b},
             "exponential": {"kind": kind, "rate": a}}[kind]
        )
    params = SinnParams({k: arrays[k] for k in config.param_shapes() if k in arrays})
    params.check(config)
    return Checkpoint(config, params, dt, noise, warmup)

"""Seeded i.i.d. noise with per-trajectory sub-streams.

Every trajectory ``i`` of a request draws from its own Philox generator keyed
by ``SeedSequence([seed, i])``.  Because Philox is counter-based and the seed
sequence hash is fixed, trajectory ``i`` gets the same numbers no matter how
many other trajectories are generated, in which order, or in how many chunks.
Gaussian variates come from numpy's ziggurat sampler.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import ParameterError

__all__ = [
    "NoiseSpec",
    "Gaussian",
    "Uniform",
    "Exponential",
    "derive_seed",
    "trajectory_rng",
    "sample_noise",
    "NoiseStream",
]

_U64 = (1 << 64) - 1


@dataclass(frozen=True)
class Gaussian:
    mean: float = 0.0
    std: float = 1.0

    def __post_init__(self):
        if not self.std >= 0:
            raise ParameterError(f"Gaussian std must be >= 0, got {self.std}")

    def draw(self, rng: np.random.Generator, shape) -> np.ndarray:
        z = rng.standard_normal(shape)
        return self.mean + self.std * z


@dataclass(frozen=True)
class Uniform:
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ParameterError(f"Uniform needs hi > lo, got [{self.lo}, {self.hi})")

    def draw(self, rng: np.random.Generator, shape) -> np.ndarray:
        return self.lo + (self.hi - self.lo) * rng.random(shape)


@dataclass(frozen=True)
class Exponential:
    rate: float = 1.0

    def __post_init__(self):
        if not self.rate > 0:
            raise ParameterError(f"Exponential rate must be > 0, got {self.rate}")

    def draw(self, rng: np.random.Generator, shape) -> np.ndarray:
        # standard_exponential never returns 0 for Philox doubles in practice, but
        # guard the strict-positivity contract anyway
        e = rng.standard_exponential(shape)
        e[e == 0.0] = np.finfo(float).tiny
        return e / self.rate


Distribution = Gaussian | Uniform | Exponential


@dataclass(frozen=True)
class NoiseSpec:
    distribution: Distribution = Gaussian()
    seed: int = 0

    def __post_init__(self):
        if not 0 <= int(self.seed) <= _U64:
            raise ParameterError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    def with_seed(self, seed: int) -> "NoiseSpec":
        return NoiseSpec(self.distribution, seed)

    def to_dict(self) -> dict:
        d = self.distribution
        if isinstance(d, Gaussian):
            return {"kind": "gaussian", "mean": d.mean, "std": d.std, "seed": self.seed}
        if isinstance(d, Uniform):
            return {"kind": "uniform", "lo": d.lo, "hi": d.hi, "seed": self.seed}
        return {"kind": "exponential", "rate": d.rate, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseSpec":
        kind = d.get("kind", "gaussian")
        seed = int(d.get("seed", 0))
        if kind == "gaussian":
            dist = Gaussian(float(d.get("mean", 0.0)), float(d.get("std", 1.0)))
        elif kind == "uniform":
            dist = Uniform(float(d.get("lo", 0.0)), float(d.get("hi", 1.0)))
        elif kind == "exponential":
            dist = Exponential(float(d.get("rate", 1.0)))
        else:
            raise ParameterError(f"unknown noise distribution {kind!r}")
        return cls(dist, seed)


def derive_seed(*keys: int) -> int:
    """Hash a tuple of non-negative integers into a single u64 seed."""
    state = np.random.SeedSequence([int(k) for k in keys]).generate_state(2, np.uint64)
    return int(state[0])


def trajectory_rng(seed: int, index: int, stream: int | None = None) -> np.random.Generator:
    """Generator for trajectory ``index`` of a request seeded with ``seed``.

    ``stream`` separates independent uses inside one trajectory (e.g. pulse
    counts vs. pulse sizes).
    """
    key = [int(seed), int(index)] if stream is None else [int(seed), int(index), int(stream)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


def sample_noise(spec: NoiseSpec, batch: int, steps: int, dim: int, indices=None) -> np.ndarray:
    """Return a ``batch x steps x dim`` array of i.i.d. draws from ``spec``.

    ``indices`` picks which trajectory sub-streams to draw (default
    ``range(batch)``); slices of a batch can thus be produced independently.
    """
    idx = range(batch) if indices is None else [int(i) for i in indices]
    batch = len(idx)
    if batch < 1 or steps < 1 or dim < 1:
        raise ParameterError(f"batch, steps, dim must be >= 1, got {(batch, steps, dim)}")
    out = np.empty((batch, steps, dim))
    for k, i in enumerate(idx):
        out[k] = spec.distribution.draw(trajectory_rng(spec.seed, i), (steps, dim))
    return out


class NoiseStream:
    """Chunked per-trajectory noise for long simulations.

    Successive :meth:`take` calls continue every trajectory's stream, so the
    concatenation of chunks equals one :func:`sample_noise` call of the total
    length.
    """

    def __init__(self, spec: NoiseSpec, batch: int, dim: int, indices=None, stream: int | None = None):
        if batch < 1 or dim < 1:
            raise ParameterError("batch and dim must be >= 1")
        self.spec = spec
        self.dim = dim
        idx = range(batch) if indices is None else indices
        self._rngs = [trajectory_rng(spec.seed, i, stream) for i in idx]

    def take(self, steps: int) -> np.ndarray:
        out = np.empty((len(self._rngs), steps, self.dim))
        for k, rng in enumerate(self._rngs):
            out[k] = self.spec.distribution.draw(rng, (steps, self.dim))
        return out

    def chunks(self, steps: int, chunk: int = 4096) -> Iterator[np.ndarray]:
        done = 0
        while done < steps:
            n = min(chunk, steps - done)
            yield self.take(n)
            done += n

    @property
    def generators(self) -> list[np.random.Generator]:
        return self._rngs

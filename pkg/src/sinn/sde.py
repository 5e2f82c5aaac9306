"""Reference Euler-Maruyama integrators for the benchmark systems.

State layouts:

* ``OU``             -- ``(x,)``
* ``FpuLangevin``    -- ``(q, p)``
* ``DoubleWell``     -- ``(x, p)``
* ``Chain``          -- ``(r_1..r_N, p_1..p_N)`` with ``r_j = q_j - q_{j-1}``
* ``PoissonPulse``   -- ``(x,)``

All Langevin variants derive their noise amplitude from the
fluctuation-dissipation relation ``sigma = sqrt(2 gamma / beta)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ensemble import Ensemble
from .errors import DivergenceError, ParameterError, ShapeError
from .noise import Gaussian, NoiseSpec, NoiseStream, trajectory_rng

__all__ = [
    "OU",
    "FpuLangevin",
    "PoissonPulse",
    "Chain",
    "DoubleWell",
    "SdeSystem",
    "em_step",
    "poisson_step",
    "simulate",
    "observe",
    "chain_observable",
    "coarse_grain",
    "double_well_potential",
    "double_well_force",
    "fpu_force",
]

# sub-stream ids inside one trajectory's key
_STREAM_DYNAMICS = 0
_STREAM_INIT = 1
_STREAM_PULSE_SIZES = 2


def _positive(**kw):
    for name, v in kw.items():
        if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
            raise ParameterError(f"{name} must be a finite positive number, got {v!r}")


def _friction(gamma):
    # gamma = 0 switches the thermostat off (sigma = 0): plain Hamiltonian dynamics
    if not (isinstance(gamma, (int, float)) and math.isfinite(gamma) and gamma >= 0):
        raise ParameterError(f"gamma must be a finite number >= 0, got {gamma!r}")


def fpu_force(q, alpha: float, theta: float):
    """``-V'(q)`` for ``V(q) = alpha q^2/2 + theta q^4/4``."""
    return -(alpha * q + theta * q**3)


def double_well_potential(x, v0: float, x0: float):
    return v0 * (1.0 - (x / x0) ** 2) ** 2


def double_well_force(x, v0: float, x0: float):
    """``-V'(x)`` for ``V(x) = V0 (1 - (x/x0)^2)^2``."""
    return 4.0 * v0 * x * (1.0 - (x / x0) ** 2) / x0**2


def _gibbs_sampler(potential, beta: float, lo: float, hi: float, n: int = 20001):
    """Inverse-CDF sampler for the density proportional to ``exp(-beta V)``."""
    grid = np.linspace(lo, hi, n)
    w = np.exp(-beta * (potential(grid) - potential(grid).min()))
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (w[1:] + w[:-1]) * np.diff(grid))])
    cdf /= cdf[-1]

    def draw(rng: np.random.Generator, size):
        return np.interp(rng.random(size), cdf, grid)

    return draw


@dataclass(frozen=True)
class OU:
    theta: float = 1.0
    sigma: float = 0.5

    def __post_init__(self):
        _positive(theta=self.theta, sigma=self.sigma)

    state_dim = 1
    noise_dim = 1

    def drift(self, x):
        return -self.theta * x

    def diffusion(self, x, xi):
        return self.sigma * xi

    @property
    def stationary_variance(self) -> float:
        return self.sigma**2 / (2.0 * self.theta)

    def initial_state(self, rng, batch):
        return math.sqrt(self.stationary_variance) * rng.standard_normal((batch, 1))


@dataclass(frozen=True)
class FpuLangevin:
    alpha: float = 1.0
    theta: float = 1.0
    gamma: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        _positive(alpha=self.alpha, theta=self.theta, beta=self.beta)
        _friction(self.gamma)

    state_dim = 2
    noise_dim = 1

    @property
    def sigma(self) -> float:
        return math.sqrt(2.0 * self.gamma / self.beta)

    def potential(self, q):
        return 0.5 * self.alpha * q**2 + 0.25 * self.theta * q**4

    def drift(self, x):
        q, p = x[..., 0], x[..., 1]
        return np.stack([p, fpu_force(q, self.alpha, self.theta) - self.gamma * p], axis=-1)

    def diffusion(self, x, xi):
        out = np.zeros(np.broadcast_shapes(x.shape, xi.shape[:-1] + (2,)))
        out[..., 1] = self.sigma * xi[..., 0]
        return out

    def initial_state(self, rng, batch):
        draw = _gibbs_sampler(self.potential, self.beta, -6.0, 6.0)
        q = draw(rng, batch)
        p = rng.standard_normal(batch) / math.sqrt(self.beta)
        return np.stack([q, p], axis=-1)


@dataclass(frozen=True)
class DoubleWell:
    v0: float = 5.0
    x0: float = 1.0
    gamma: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        _positive(v0=self.v0, x0=self.x0, beta=self.beta)
        _friction(self.gamma)

    state_dim = 2
    noise_dim = 1

    @property
    def sigma(self) -> float:
        return math.sqrt(2.0 * self.gamma / self.beta)

    def potential(self, x):
        return double_well_potential(x, self.v0, self.x0)

    def drift(self, x):
        q, p = x[..., 0], x[..., 1]
        return np.stack([p, double_well_force(q, self.v0, self.x0) - self.gamma * p], axis=-1)

    def diffusion(self, x, xi):
        out = np.zeros(np.broadcast_shapes(x.shape, xi.shape[:-1] + (2,)))
        out[..., 1] = self.sigma * xi[..., 0]
        return out

    def initial_state(self, rng, batch):
        span = 4.0 * self.x0
        draw = _gibbs_sampler(self.potential, self.beta, -span, span)
        x = draw(rng, batch)
        p = rng.standard_normal(batch) / math.sqrt(self.beta)
        return np.stack([x, p], axis=-1)


@dataclass(frozen=True)
class Chain:
    n: int = 100
    alpha: float = 1.0
    theta: float = 1.0
    gamma: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if not (isinstance(self.n, int) and self.n >= 2):
            raise ParameterError(f"chain length must be an integer >= 2, got {self.n!r}")
        _positive(alpha=self.alpha, theta=self.theta, beta=self.beta)
        _friction(self.gamma)

    @property
    def state_dim(self) -> int:
        return 2 * self.n

    @property
    def noise_dim(self) -> int:
        return self.n

    @property
    def sigma(self) -> float:
        return math.sqrt(2.0 * self.gamma / self.beta)

    def bond_force(self, r):
        """``V'(r)`` for the FPU bond potential."""
        return self.alpha * r + self.theta * r**3

    def drift(self, x):
        n = self.n
        r, p = x[..., :n], x[..., n:]
        # fixed ends: p_0 = 0 and r_{N+1} = q_{N+1} - q_N = -sum(r)
        p_prev = np.concatenate([np.zeros_like(p[..., :1]), p[..., :-1]], axis=-1)
        r_next = np.concatenate([r[..., 1:], -r.sum(axis=-1, keepdims=True)], axis=-1)
        dv = self.bond_force(r)
        dr = p - p_prev
        dp = self.bond_force(r_next) - dv - self.gamma * p
        return np.concatenate([dr, dp], axis=-1)

    def diffusion(self, x, xi):
        out = np.zeros(np.broadcast_shapes(x.shape, xi.shape[:-1] + (2 * self.n,)))
        out[..., self.n :] = self.sigma * xi
        return out

    def energy(self, x):
        n = self.n
        r, p = x[..., :n], x[..., n:]
        r_all = np.concatenate([r, -r.sum(axis=-1, keepdims=True)], axis=-1)
        v = 0.5 * self.alpha * r_all**2 + 0.25 * self.theta * r_all**4
        return 0.5 * (p**2).sum(axis=-1) + v.sum(axis=-1)

    def initial_state(self, rng, batch):
        # N+1 bonds drawn from the single-bond Gibbs density, recentred so the
        # bonds sum to zero (q_{N+1} = 0); burn-in removes the residual bias
        pot = lambda r: 0.5 * self.alpha * r**2 + 0.25 * self.theta * r**4
        draw = _gibbs_sampler(pot, self.beta, -6.0, 6.0)
        bonds = draw(rng, (batch, self.n + 1))
        bonds -= bonds.mean(axis=-1, keepdims=True)
        p = rng.standard_normal((batch, self.n)) / math.sqrt(self.beta)
        return np.concatenate([bonds[:, : self.n], p], axis=-1)


@dataclass(frozen=True)
class PoissonPulse:
    b: float = 1.0
    lam: float = 2.0
    r: float = 1.0

    def __post_init__(self):
        _positive(b=self.b, lam=self.lam, r=self.r)

    state_dim = 1
    noise_dim = 1

    @property
    def stationary_mean(self) -> float:
        return self.lam / (self.r * self.b)

    def initial_state(self, rng, batch):
        # stationary law of exponentially-marked shot noise is Gamma(lam/b, 1/r)
        return rng.gamma(self.lam / self.b, 1.0 / self.r, (batch, 1))


SdeSystem = OU | FpuLangevin | PoissonPulse | Chain | DoubleWell


def em_step(system, state, dt: float, noise):
    """One Euler-Maruyama step ``X + dt b(X) + sigma(X) sqrt(dt) xi``.

    ``state`` has trailing size ``system.state_dim`` and ``noise`` trailing
    size ``system.noise_dim``; leading (batch) axes broadcast.
    """
    if isinstance(system, PoissonPulse):
        raise ParameterError("PoissonPulse is advanced with poisson_step, not em_step")
    if not dt > 0:
        raise ParameterError(f"dt must be > 0, got {dt}")
    x = np.asarray(state, dtype=np.float64)
    xi = np.asarray(noise, dtype=np.float64)
    if x.shape[-1:] != (system.state_dim,) or xi.shape[-1:] != (system.noise_dim,):
        raise ShapeError(
            f"{type(system).__name__} expects state width {system.state_dim} and noise width "
            f"{system.noise_dim}, got {x.shape} and {xi.shape}"
        )
    return x + dt * system.drift(x) + math.sqrt(dt) * system.diffusion(x, xi)


def poisson_step(b: float, lam: float, r: float, x, dt: float, rng_or_counts, sizes_rng=None):
    """One step of the shot-noise equation ``dx/dt = -b x + sum_j z_j delta(t - t_j)``.

    Decay first, then add ``K ~ Poisson(lam dt)`` pulses of size ``Exp(r)``.
    ``rng_or_counts`` is either a generator (used for both counts and sizes) or
    an integer array of precomputed pulse counts, in which case ``sizes_rng``
    supplies the pulse magnitudes.
    """
    if not dt > 0:
        raise ParameterError(f"dt must be > 0, got {dt}")
    if b * dt > 1:
        raise ParameterError(f"b*dt = {b * dt} > 1: decay step would overshoot zero")
    x = np.asarray(x, dtype=np.float64)
    if isinstance(rng_or_counts, np.random.Generator):
        counts = rng_or_counts.poisson(lam * dt, size=x.shape)
        sizes_rng = rng_or_counts if sizes_rng is None else sizes_rng
    else:
        counts = np.asarray(rng_or_counts)
    out = x - b * x * dt
    total = int(counts.sum())
    if total:
        sizes = sizes_rng.standard_exponential(total) / r
        idx = np.repeat(np.arange(counts.size), counts.ravel())
        out = out.reshape(-1).copy()
        np.add.at(out, idx, sizes)
        out = out.reshape(x.shape)
    return out if out.ndim else float(out)


def observe(system, states: np.ndarray) -> np.ndarray:
    """Map raw states ``(..., state_dim)`` to the scalar observable the benchmarks learn."""
    if isinstance(system, Chain):
        return chain_observable_array(states, system.n)
    return states[..., :1]


def chain_observable_array(states: np.ndarray, n: int) -> np.ndarray:
    if n < 2 or n % 2:
        raise ParameterError(f"chain length must be even and >= 2, got {n}")
    if states.shape[-1] != 2 * n:
        raise ShapeError(f"chain state width must be {2 * n}, got {states.shape[-1]}")
    half = n // 2
    q = states[..., : half - 1].sum(axis=-1) + 0.5 * states[..., half - 1]
    return q[..., None]


def chain_observable(chain_ensemble: Ensemble, n: int) -> Ensemble:
    """Centre coarse-grained particle ``Q = (q_{N/2-1} + q_{N/2}) / 2`` in bond coordinates."""
    return Ensemble(chain_observable_array(chain_ensemble.data, n), chain_ensemble.dt)


def coarse_grain(e: Ensemble, stride: int) -> Ensemble:
    """Keep samples ``0, stride, 2 stride, ...``; the new ``dt`` is ``stride * dt``."""
    if not isinstance(stride, (int, np.integer)) or stride < 1:
        raise ParameterError(f"stride must be an integer >= 1, got {stride!r}")
    if stride > e.time:
        raise ParameterError(f"stride {stride} exceeds time length {e.time}")
    if stride == 1:
        return Ensemble(e.data.copy(), e.dt)
    return Ensemble(e.data[:, ::stride].copy(), e.dt * stride)


@dataclass
class _Recorder:
    shape: tuple
    stride: int
    data: np.ndarray = field(init=False)
    count: int = 0

    def __post_init__(self):
        self.data = np.empty(self.shape)

    def offer(self, step: int, values: np.ndarray):
        if step % self.stride == 0 and self.count < self.shape[1]:
            self.data[:, self.count] = values
            self.count += 1


def simulate(
    system,
    dt: float,
    steps: int,
    batch: int,
    seed: int,
    burn_in: int = 10_000,
    stride: int = 1,
    observable: bool = False,
    indices=None,
) -> Ensemble:
    """Integrate ``batch`` independent trajectories.

    ``steps`` is the number of stored samples; the first is the state at
    ``t = 0`` (after ``burn_in`` unrecorded fine steps) and ``stride`` fine
    steps separate consecutive stored samples, so the returned ``dt`` is
    ``stride * dt``.  Trajectory ``i`` depends only on ``(seed, i)``;
    ``indices`` selects which trajectory indices to produce (default
    ``range(batch)``).  With ``observable=True`` only :func:`observe` of the
    state is stored.
    """
    if steps < 1 or batch < 1:
        raise ParameterError(f"steps and batch must be >= 1, got {steps}, {batch}")
    if not dt > 0:
        raise ParameterError(f"dt must be > 0, got {dt}")
    if stride < 1 or burn_in < 0:
        raise ParameterError("stride must be >= 1 and burn_in >= 0")
    idx = list(range(batch)) if indices is None else [int(i) for i in indices]
    # overflow is reported as DivergenceError by the finiteness check instead
    with np.errstate(over="ignore", invalid="ignore"):
        return _integrate(system, dt, steps, seed, burn_in, stride, observable, idx)


def _integrate(system, dt, steps, seed, burn_in, stride, observable, idx) -> Ensemble:
    batch = len(idx)

    x = np.concatenate(
        [system.initial_state(trajectory_rng(seed, i, _STREAM_INIT), 1) for i in idx], axis=0
    )
    width = 1 if observable else system.state_dim
    project = (lambda s: observe(system, s)) if observable else (lambda s: s)
    rec = _Recorder((batch, steps, width), stride)
    total = burn_in + (steps - 1) * stride

    if isinstance(system, PoissonPulse):
        if system.b * dt > 1:
            raise ParameterError(f"b*dt = {system.b * dt} > 1: decay step would overshoot zero")
        count_rngs = [trajectory_rng(seed, i, _STREAM_DYNAMICS) for i in idx]
        size_rngs = [trajectory_rng(seed, i, _STREAM_PULSE_SIZES) for i in idx]
        chunk = 4096
        done = 0
        if burn_in == 0:
            rec.offer(0, project(x))
        while done < total:
            n = min(chunk, total - done)
            counts = np.stack([g.poisson(system.lam * dt, n) for g in count_rngs])  # (batch, n)
            sizes = [g.standard_exponential(int(c.sum())) / system.r for g, c in zip(size_rngs, counts)]
            offsets = [np.concatenate([[0], np.cumsum(c)]) for c in counts]
            decay = 1.0 - system.b * dt
            for j in range(n):
                x = x * decay
                hit = np.nonzero(counts[:, j])[0]
                for k in hit:
                    x[k, 0] += sizes[k][offsets[k][j] : offsets[k][j + 1]].sum()
                step = done + j + 1
                _check_finite(x, step)
                if step >= burn_in:
                    rec.offer(step - burn_in, project(x))
            done += n
        return Ensemble(rec.data, dt * stride)

    stream = NoiseStream(NoiseSpec(Gaussian(), seed), batch, system.noise_dim, indices=idx, stream=_STREAM_DYNAMICS)
    chunk = max(1, min(4096, 2_000_000 // (batch * system.noise_dim)))
    sqdt = math.sqrt(dt)
    done = 0
    if burn_in == 0:
        rec.offer(0, project(x))
    for noise in stream.chunks(total, chunk):
        for j in range(noise.shape[1]):
            x = x + dt * system.drift(x) + sqdt * system.diffusion(x, noise[:, j])
            step = done + j + 1
            _check_finite(x, step)
            if step >= burn_in:
                rec.offer(step - burn_in, project(x))
        done += noise.shape[1]
    return Ensemble(rec.data, dt * stride)


def _check_finite(x: np.ndarray, step: int):
    if not np.isfinite(x).all():
        bad = np.nonzero(~np.isfinite(x).all(axis=-1))[0]
        raise DivergenceError(
            f"non-finite state in trajectory {int(bad[0])} at step {step}", int(bad[0]), step
        )

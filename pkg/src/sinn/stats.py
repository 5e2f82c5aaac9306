"""Ensemble statistics: autocorrelation, kernel density, losses, transition rates.

Autocorrelation estimates subtract the global ensemble mean, average the
lag-``tau`` products over every trajectory and every valid start time (so
each lag is divided by its own term count ``n - tau``), then normalise so that
the lag-0 value is exactly 1.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .ensemble import Ensemble
from .errors import DegenerateError, InsufficientDataError, ParameterError, ShapeError
from .fft import fft, ifft, next_pow_two

__all__ = [
    "AcfCurve",
    "PdfEstimate",
    "TransitionCurve",
    "RateFit",
    "acf_brute",
    "acf_fft",
    "acf",
    "kde",
    "kde_bandwidth",
    "kde_grid",
    "smoothed_gaussian_pdf",
    "loss_acf",
    "loss_pdf",
    "transition_correlation",
    "transition_rate",
    "pdf_l1_distance",
]

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass
class AcfCurve:
    lags: np.ndarray
    values: np.ndarray
    dt: float

    def __post_init__(self):
        self.lags = np.asarray(self.lags, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.lags.shape != self.values.shape or self.lags.ndim != 1:
            raise ShapeError("lags and values must be 1-d arrays of equal length")

    @property
    def times(self) -> np.ndarray:
        return self.lags * self.dt

    def at(self, lags) -> np.ndarray:
        pos = {int(l): k for k, l in enumerate(self.lags)}
        try:
            return self.values[[pos[int(l)] for l in lags]]
        except KeyError as exc:
            raise ShapeError(f"lag {exc.args[0]} not present in curve") from None

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# acf dt={self.dt!r}\n")
        buf.write("lag_time,value\n")
        for l, v in zip(self.lags, self.values):
            buf.write(f"{float(l * self.dt)!r},{float(v)!r}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "AcfCurve":
        lines = text.splitlines()
        dt = float(lines[0].split("dt=", 1)[1])
        rows = np.loadtxt(io.StringIO("\n".join(lines[2:])), delimiter=",", ndmin=2)
        return cls(np.rint(rows[:, 0] / dt).astype(np.int64), rows[:, 1], dt)

    def __eq__(self, other):
        if not isinstance(other, AcfCurve):
            return NotImplemented
        return (
            self.dt == other.dt
            and np.array_equal(self.lags, other.lags)
            and np.array_equal(self.values, other.values)
        )


@dataclass
class PdfEstimate:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=np.float64)
        self.density = np.asarray(self.density, dtype=np.float64)
        if self.grid.shape != self.density.shape:
            raise ShapeError("grid and density must have equal shapes")

    def integral(self) -> float:
        return float(np.trapezoid(self.density, self.grid))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# pdf bandwidth={self.bandwidth!r}\n")
        buf.write("x,density\n")
        for x, d in zip(self.grid, self.density):
            buf.write(f"{float(x)!r},{float(d)!r}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "PdfEstimate":
        lines = text.splitlines()
        h = float(lines[0].split("bandwidth=", 1)[1])
        rows = np.loadtxt(io.StringIO("\n".join(lines[2:])), delimiter=",", ndmin=2)
        return cls(rows[:, 0], rows[:, 1], h)

    def __eq__(self, other):
        if not isinstance(other, PdfEstimate):
            return NotImplemented
        return (
            self.bandwidth == other.bandwidth
            and np.array_equal(self.grid, other.grid)
            and np.array_equal(self.density, other.density)
        )


def _series(e, component: int, squared: bool) -> np.ndarray:
    x = e.data[:, :, component] if isinstance(e, Ensemble) else np.asarray(e, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ShapeError(f"expected batch x time samples, got shape {x.shape}")
    if x.shape[1] < 2:
        raise InsufficientDataError(f"need at least 2 time samples, got {x.shape[1]}")
    if squared:
        x = x * x
    return x - x.mean()


def _check_lag(max_lag: int, n: int):
    if not 0 <= max_lag < n:
        raise ParameterError(f"max_lag must satisfy 0 <= max_lag < {n}, got {max_lag}")


def _normalise(raw: np.ndarray, dt: float) -> AcfCurve:
    if raw[0] == 0.0 or not np.isfinite(raw[0]):
        raise DegenerateError("zero variance after centring; autocorrelation undefined")
    return AcfCurve(np.arange(raw.size), raw / raw[0], dt)


def _dt_of(e) -> float:
    return e.dt if isinstance(e, Ensemble) else 1.0


def acf_brute(e, max_lag: int, component: int = 0, squared: bool = False) -> AcfCurve:
    """Direct lag-by-lag estimate, ``O(n * max_lag)`` per trajectory."""
    x = _series(e, component, squared)
    n = x.shape[1]
    _check_lag(max_lag, n)
    raw = np.empty(max_lag + 1)
    for tau in range(max_lag + 1):
        raw[tau] = np.mean(x[:, : n - tau] * x[:, tau:])
    return _normalise(raw, _dt_of(e))


def acf_fft(e, max_lag: int, component: int = 0, squared: bool = False) -> AcfCurve:
    """Wiener-Khinchin estimate with zero padding to a power of two >= 2n.

    Padding turns the circular correlation into the linear one, so the result
    equals :func:`acf_brute` up to rounding.
    """
    x = _series(e, component, squared)
    n = x.shape[1]
    _check_lag(max_lag, n)
    size = next_pow_two(2 * n)
    padded = np.zeros((x.shape[0], size))
    padded[:, :n] = x
    f = fft(padded)
    corr = ifft(f * np.conj(f)).real[:, : max_lag + 1]
    raw = corr.mean(axis=0) / (n - np.arange(max_lag + 1))
    return _normalise(raw, _dt_of(e))


def acf(e, max_lag: int, method: str = "fft", component: int = 0, squared: bool = False) -> AcfCurve:
    if method == "fft":
        return acf_fft(e, max_lag, component, squared)
    if method == "brute":
        return acf_brute(e, max_lag, component, squared)
    raise ParameterError(f"unknown ACF method {method!r}")


def kde_bandwidth(n_samples: int) -> float:
    return float(n_samples) ** -0.2


def kde_grid(samples, bandwidth: float, points: int = 100) -> np.ndarray:
    """``points`` uniform nodes over ``[min - 3h, max + 3h]`` of the samples."""
    s = np.asarray(samples, dtype=np.float64).ravel()
    return np.linspace(s.min() - 3 * bandwidth, s.max() + 3 * bandwidth, points)


def kde_density(samples: np.ndarray, grid: np.ndarray, h: float, chunk_elems: int = 4_000_000) -> np.ndarray:
    out = np.zeros(grid.size)
    step = max(1, chunk_elems // max(1, grid.size))
    for lo in range(0, samples.size, step):
        d = (grid[:, None] - samples[None, lo : lo + step]) / h
        out += np.exp(-0.5 * d * d).sum(axis=1)
    return out * (_INV_SQRT_2PI / (h * samples.size))


def kde(samples, grid, bandwidth: float | None = None) -> PdfEstimate:
    """Gaussian-kernel density with ``h = |X|^(-1/5)`` unless ``bandwidth`` is given."""
    s = np.asarray(samples, dtype=np.float64).ravel()
    g = np.asarray(grid, dtype=np.float64).ravel()
    if s.size == 0:
        raise ParameterError("KDE needs at least one sample")
    if g.size == 0:
        raise ParameterError("KDE needs a nonempty grid")
    h = kde_bandwidth(s.size) if bandwidth is None else float(bandwidth)
    return PdfEstimate(g, kde_density(s, g, h), h)


def smoothed_gaussian_pdf(grid, mean: float, var: float, bandwidth: float = 0.0) -> np.ndarray:
    """Normal density convolved with a Gaussian kernel of width ``bandwidth``.

    This is the expectation of a KDE of normal samples, the fair analytic
    counterpart of an estimated density.
    """
    s2 = var + bandwidth**2
    g = np.asarray(grid, dtype=np.float64)
    return np.exp(-0.5 * (g - mean) ** 2 / s2) / math.sqrt(2 * math.pi * s2)


def _l1_l2(delta: np.ndarray) -> float:
    return float(np.mean(np.abs(delta)) + np.mean(delta * delta))


def loss_acf(out, target) -> float:
    """Mean absolute plus mean squared deviation over a shared lag set."""
    if isinstance(out, AcfCurve) and isinstance(target, AcfCurve):
        if not np.array_equal(out.lags, target.lags):
            raise ShapeError("ACF curves are on different lag sets")
        out, target = out.values, target.values
    o, t = np.asarray(out, dtype=np.float64), np.asarray(target, dtype=np.float64)
    if o.shape != t.shape or o.size == 0:
        raise ShapeError(f"lag sets differ: {o.shape} vs {t.shape}")
    return _l1_l2(o - t)


def loss_pdf(out, target) -> float:
    if isinstance(out, PdfEstimate) and isinstance(target, PdfEstimate):
        if not np.array_equal(out.grid, target.grid):
            raise ShapeError("PDF estimates are on different grids")
        out, target = out.density, target.density
    o, t = np.asarray(out, dtype=np.float64), np.asarray(target, dtype=np.float64)
    if o.shape != t.shape or o.size == 0:
        raise ShapeError(f"grids differ: {o.shape} vs {t.shape}")
    return _l1_l2(o - t)


def pdf_l1_distance(grid, p, q) -> float:
    """Trapezoid integral of ``|p - q|`` over ``grid``."""
    return float(np.trapezoid(np.abs(np.asarray(p) - np.asarray(q)), np.asarray(grid)))


@dataclass
class TransitionCurve:
    lags: np.ndarray
    values: np.ndarray
    dt: float

    @property
    def times(self) -> np.ndarray:
        return self.lags * self.dt

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# transition-correlation dt={self.dt!r}\n")
        buf.write("time,c_ab_over_c_a\n")
        for l, v in zip(self.lags, self.values):
            buf.write(f"{float(l * self.dt)!r},{float(v)!r}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "TransitionCurve":
        lines = text.splitlines()
        dt = float(lines[0].split("dt=", 1)[1])
        rows = np.loadtxt(io.StringIO("\n".join(lines[2:])), delimiter=",", ndmin=2)
        return cls(np.rint(rows[:, 0] / dt).astype(np.int64), rows[:, 1], dt)


def transition_correlation(e, max_t: int, component: int = 0, boundary: float = 0.0) -> TransitionCurve:
    """``<h_A(x(s)) h_B(x(s+t))> / <h_A(x(s))>`` with ``A = (-inf, b]``, ``B = (b, inf)``.

    Both averages run over the same start times ``s < n - t`` so every value is
    a conditional probability in ``[0, 1]``.
    """
    x = e.data[:, :, component] if isinstance(e, Ensemble) else np.atleast_2d(np.asarray(e, dtype=np.float64))
    n = x.shape[1]
    if not 0 <= max_t < n:
        raise ParameterError(f"max_t must satisfy 0 <= max_t < {n}, got {max_t}")
    in_a = (x <= boundary).astype(np.float64)
    in_b = 1.0 - in_a
    vals = np.empty(max_t + 1)
    # cumulative A-visits per start time makes each denominator O(1)
    a_count = np.concatenate([[0.0], np.cumsum(in_a.sum(axis=0))])
    for t in range(max_t + 1):
        den = a_count[n - t]
        if den == 0:
            raise DegenerateError("no visits to region A; transition correlation undefined")
        vals[t] = np.sum(in_a[:, : n - t] * in_b[:, t:]) / den
    return TransitionCurve(np.arange(max_t + 1), vals, _dt_of(e))


@dataclass
class RateFit:
    k_ab: float
    r2: float
    window: tuple[float, float]
    n_points: int
    degenerate: bool = False
    intercept: float = 0.0

    def __iter__(self):
        yield self.k_ab
        yield self.r2


def transition_rate(curve, dt: float | None = None, window=(25.0, 50.0)) -> RateFit:
    """Least-squares slope of the transition curve over ``window`` (time units).

    Accepts a :class:`TransitionCurve` or a plain value array (then ``dt`` is
    required).  A constant curve has zero slope and undefined R^2, reported as
    ``r2 = 0`` with ``degenerate = True``.
    """
    if isinstance(curve, TransitionCurve):
        t_all, y_all = curve.times, curve.values
        dt = curve.dt if dt is None else dt
    else:
        if dt is None:
            raise ParameterError("dt is required for a raw value array")
        y_all = np.asarray(curve, dtype=np.float64)
        t_all = np.arange(y_all.size) * dt
    lo, hi = float(window[0]), float(window[1])
    eps = 1e-9 * max(1.0, abs(hi))
    sel = (t_all >= lo - eps) & (t_all <= hi + eps)
    if sel.sum() < 2:
        raise ParameterError(f"window [{lo}, {hi}] holds fewer than 2 curve points")
    t, y = t_all[sel], y_all[sel]
    tc, yc = t - t.mean(), y - y.mean()
    sxx, syy = float(tc @ tc), float(yc @ yc)
    slope = float(tc @ yc) / sxx
    intercept = float(y.mean() - slope * t.mean())
    if np.ptp(y) == 0.0:
        return RateFit(0.0, 0.0, (lo, hi), int(sel.sum()), True, float(y[0]))
    resid = y - (intercept + slope * t)
    r2 = 1.0 - float(resid @ resid) / syy
    return RateFit(slope, r2, (lo, hi), int(sel.sum()), False, intercept)

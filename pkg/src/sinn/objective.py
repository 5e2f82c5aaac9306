"""Training targets and the statistical loss, in taped and plain form.

A :class:`LossSpec` is a list of targets; each compares one statistic of one
output component (ACF of x, ACF of x^2, or the KDE density) against a target
curve with the combined L1 + L2 discrepancy.  The total loss is the weighted
sum over targets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import stats
from .ensemble import Ensemble
from .errors import ParameterError, ShapeError

__all__ = [
    "ACF",
    "ACF_SQUARED",
    "PDF",
    "GaussianPdfTarget",
    "Target",
    "LossSpec",
    "targets_from_ensemble",
    "ou_targets",
    "taped_loss",
    "evaluate_loss",
    "taped_acf",
]

ACF = "acf"
ACF_SQUARED = "acf2"
PDF = "pdf"
_KINDS = (ACF, ACF_SQUARED, PDF)


@dataclass
class GaussianPdfTarget:
    """Analytic normal density, smoothed by the KDE kernel it is compared with."""

    grid: np.ndarray
    mean: float
    var: float

    def density(self, bandwidth: float) -> np.ndarray:
        return stats.smoothed_gaussian_pdf(self.grid, self.mean, self.var, bandwidth)


@dataclass
class Target:
    statistic: str
    curve: object  # AcfCurve for ACF kinds; PdfEstimate or GaussianPdfTarget for PDF
    weight: float = 1.0
    component: int = 0

    def __post_init__(self):
        if self.statistic not in _KINDS:
            raise ParameterError(f"unknown statistic {self.statistic!r}; expected one of {_KINDS}")
        if not self.weight > 0:
            raise ParameterError(f"target weight must be > 0, got {self.weight}")
        if self.statistic != PDF and 0 not in set(int(l) for l in self.curve.lags):
            raise ParameterError("ACF target must include lag 0")

    @property
    def grid(self) -> np.ndarray:
        return self.curve.grid

    def pdf_values(self, bandwidth: float) -> np.ndarray:
        if isinstance(self.curve, GaussianPdfTarget):
            return self.curve.density(bandwidth)
        return self.curve.density


@dataclass
class LossSpec:
    targets: list[Target] = field(default_factory=list)
    lag_subsample_m: int = 20

    def __post_init__(self):
        if not self.targets:
            raise ParameterError("a loss needs at least one target")

    @property
    def max_lag(self) -> int:
        lags = [int(t.curve.lags.max()) for t in self.targets if t.statistic != PDF]
        return max(lags) if lags else 0

    @property
    def has_acf(self) -> bool:
        return any(t.statistic != PDF for t in self.targets)


def targets_from_ensemble(
    e: Ensemble,
    max_lag: int,
    statistics=(ACF, ACF_SQUARED, PDF),
    grid_points: int = 100,
    lag_subsample_m: int = 20,
    weights=None,
) -> LossSpec:
    """Empirical targets from trajectory data, one set per output component.

    The PDF grid covers the pooled sample range padded by three bandwidths;
    the same grid is reused for every generated ensemble.
    """
    targets = []
    weights = weights or {}
    for k in range(e.dim):
        for s in statistics:
            w = float(weights.get(s, 1.0))
            if s == PDF:
                x = e.data[:, :, k].ravel()
                h = stats.kde_bandwidth(x.size)
                grid = stats.kde_grid(x, h, grid_points)
                targets.append(Target(PDF, stats.kde(x, grid, h), w, k))
            else:
                curve = stats.acf_fft(e, max_lag, component=k, squared=(s == ACF_SQUARED))
                targets.append(Target(s, curve, w, k))
    return LossSpec(targets, lag_subsample_m)


def ou_targets(theta: float, sigma: float, dt: float, max_lag: int, grid_points: int = 100,
               lag_subsample_m: int = 20, span: float = 5.0) -> LossSpec:
    """Analytic equilibrium targets of the OU process: ACF ``exp(-theta tau)``, normal PDF."""
    lags = np.arange(max_lag + 1)
    var = sigma**2 / (2 * theta)
    grid = np.linspace(-span * math.sqrt(var), span * math.sqrt(var), grid_points)
    return LossSpec(
        [
            Target(ACF, stats.AcfCurve(lags, np.exp(-theta * lags * dt), dt)),
            Target(PDF, GaussianPdfTarget(grid, 0.0, var)),
        ],
        lag_subsample_m,
    )


def taped_acf(x, lags):
    """Brute-force normalised ACF of ``x`` (batch x time) at sorted ``lags`` (first = 0)."""
    n = ad.value_of(x).shape[1]
    xc = ad.sub(x, ad.mean(x))
    vals = []
    for tau in lags:
        tau = int(tau)
        a = ad.getitem(xc, (slice(None), slice(0, n - tau)))
        b = ad.getitem(xc, (slice(None), slice(tau, n)))
        vals.append(ad.mean(ad.mul(a, b)))
    c = ad.stack(vals)
    return ad.div(c, ad.getitem(c, 0))


def _l1_l2(delta):
    return ad.add(ad.mean(ad.absolute(delta)), ad.mean(ad.square(delta)))


def taped_loss(out, spec: LossSpec, lags=None):
    """Differentiable total loss of ``out`` (batch x time x dim Var).

    ACF targets are compared at ``lags`` (default: every target lag); the PDF
    bandwidth is ``|X|^(-1/5)`` for the fixed sample count of ``out``.
    """
    shape = ad.value_of(out).shape
    total = None
    for t in spec.targets:
        x = ad.getitem(out, (slice(None), slice(None), t.component))
        if t.statistic == PDF:
            n = shape[0] * shape[1]
            h = stats.kde_bandwidth(n)
            dens = ad.kde(x, t.grid, h)
            term = _l1_l2(ad.sub(dens, t.pdf_values(h)))
        else:
            use = t.curve.lags if lags is None else np.asarray(lags)
            if use[0] != 0:
                raise ShapeError("lag set must start with 0")
            if use[-1] >= shape[1]:
                raise ShapeError(f"lag {use[-1]} exceeds generated length {shape[1]}")
            xs = ad.square(x) if t.statistic == ACF_SQUARED else x
            term = _l1_l2(ad.sub(taped_acf(xs, use), t.curve.at(use)))
        if t.weight != 1.0:
            term = ad.mul(term, t.weight)
        total = term if total is None else ad.add(total, term)
    return total


def evaluate_loss(out, spec: LossSpec, method: str = "fft") -> tuple[float, list[float]]:
    """Full-statistics loss (every target lag, whole grid) without a tape."""
    data = out.data if isinstance(out, Ensemble) else np.asarray(out, dtype=np.float64)
    parts = []
    for t in spec.targets:
        if t.statistic == PDF:
            x = data[:, :, t.component].ravel()
            h = stats.kde_bandwidth(x.size)
            dens = stats.kde_density(x, t.grid, h)
            parts.append(t.weight * stats.loss_pdf(dens, t.pdf_values(h)))
        else:
            max_lag = int(t.curve.lags.max())
            est = stats.acf(Ensemble(data, 1.0), max_lag, method, component=t.component,
                            squared=(t.statistic == ACF_SQUARED))
            parts.append(t.weight * stats.loss_acf(est.at(t.curve.lags), t.curve.values))
    return float(sum(parts)), parts

"""Glue between configs and the library: data generation, targets, training, reports."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import plotting, sde, stats
from .config import ExperimentConfig, format_config
from .ensemble import Ensemble, save_ensemble
from .errors import ParameterError, TrainingFailed
from .model import Checkpoint, SinnParams, save_checkpoint, sinn_generate
from .objective import ACF, ACF_SQUARED, PDF, LossSpec, ou_targets, targets_from_ensemble
from .parallel import run_blocks
from .train import TrainReport, train

log = logging.getLogger(__name__)

__all__ = [
    "simulate_data",
    "loss_spec_for",
    "TrainOutcome",
    "train_experiment",
    "generate_samples",
    "write_stats",
    "write_rate",
]


def simulate_data(cfg: ExperimentConfig, threads: int = 0, fine: bool = False) -> tuple[Ensemble, Ensemble | None]:
    """Simulate the configured system; return ``(coarse, fine_or_None)`` observable ensembles."""
    d = cfg.data
    system = cfg.system.build()
    if fine:
        steps = (d.trajectory_length - 1) * d.stride + 1
        fine_e = run_blocks(
            lambda idx: sde.simulate(system, d.fine_dt, steps, len(idx), cfg.seed, d.burn_in, 1, True, idx),
            d.trajectory_count,
            threads,
        )
        return sde.coarse_grain(fine_e, d.stride), fine_e
    coarse = run_blocks(
        lambda idx: sde.simulate(system, d.fine_dt, d.trajectory_length, len(idx), cfg.seed, d.burn_in, d.stride, True, idx),
        d.trajectory_count,
        threads,
    )
    return coarse, None


def loss_spec_for(cfg: ExperimentConfig, data: Ensemble | None = None) -> LossSpec:
    t = cfg.target
    if t.source == "analytic":
        p = cfg.system.build()
        return ou_targets(p.theta, p.sigma, cfg.data.dt, t.max_lag, t.grid_points, cfg.train.lag_subsample_m)
    if data is None:
        raise ParameterError("ensemble targets need trajectory data")
    return targets_from_ensemble(data, t.max_lag, t.statistics, t.grid_points, cfg.train.lag_subsample_m)


@dataclass
class TrainOutcome:
    params: SinnParams
    report: TrainReport
    converged: bool
    checkpoint: Checkpoint


def train_experiment(cfg: ExperimentConfig, data: Ensemble | None = None, out_dir=None) -> TrainOutcome:
    """Train per ``cfg``; with ``out_dir`` keep the best checkpoint and report on disk.

    Training that ends without meeting the stopping threshold still returns
    the best parameters, flagged ``converged=False``.
    """
    spec = loss_spec_for(cfg, data)
    out = Path(out_dir) if out_dir is not None else None

    def make_ck(params):
        return Checkpoint(cfg.model, params, cfg.data.dt, cfg.noise_spec(), cfg.train.warmup)

    def on_improve(params, report):
        if out is not None:
            save_checkpoint(make_ck(params), out / "checkpoint.sinn")
            (out / "report.csv").write_text(report.to_csv())

    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.txt").write_text(format_config(cfg))
    try:
        params, report = train(cfg.model, cfg.train, spec, cfg.noise_spec().distribution, on_improve=on_improve)
        converged = True
    except TrainingFailed as exc:
        params, report, converged = exc.params, exc.report, False
    ck = make_ck(params)
    if out is not None:
        save_checkpoint(ck, out / "checkpoint.sinn")
        (out / "report.csv").write_text(report.to_csv())
        if report.entries:
            plotting.plot_report(out / "loss.png", report)
    return TrainOutcome(params, report, converged, ck)


# activations held per generation call (batch x time x 4 hidden)
_BLOCK_ELEMS = 20_000_000


def generate_samples(ck: Checkpoint, batch: int, steps: int, seed: int, threads: int = 0) -> Ensemble:
    spec = ck.noise.with_seed(seed)
    per_traj = (steps + ck.warmup) * 4 * ck.config.hidden_size
    return run_blocks(
        lambda idx: sinn_generate(ck.params, ck.config, spec, len(idx), steps, ck.dt, ck.warmup, idx),
        batch,
        threads,
        max(1, _BLOCK_ELEMS // per_traj),
    )


def write_stats(e: Ensemble, out_dir, max_lag: int, method: str = "fft", grid_points: int = 100,
                component: int = 0) -> dict:
    """ACF, squared ACF and KDE CSVs (plus PNGs) for one component of ``e``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    max_lag = min(max_lag, e.time - 1)
    a = stats.acf(e, max_lag, method, component)
    a2 = stats.acf(e, max_lag, method, component, squared=True)
    x = e.data[:, :, component].ravel()
    h = stats.kde_bandwidth(x.size)
    p = stats.kde(x, stats.kde_grid(x, h, grid_points), h)
    (out / "acf.csv").write_text(a.to_csv())
    (out / "acf2.csv").write_text(a2.to_csv())
    (out / "pdf.csv").write_text(p.to_csv())
    plotting.plot_acf(out / "acf.png", {"x": a, "x^2": a2})
    plotting.plot_pdf(out / "pdf.png", {"KDE": p})
    return {ACF: a, ACF_SQUARED: a2, PDF: p}


def write_rate(e: Ensemble, out_dir, window, max_time: float, component: int = 0):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    max_t = min(int(round(max_time / e.dt)), e.time - 1)
    curve = stats.transition_correlation(e, max_t, component)
    fit = stats.transition_rate(curve, window=tuple(window))
    (out / "transition.csv").write_text(curve.to_csv())
    summary = (
        f"k_ab={fit.k_ab!r} r2={fit.r2!r} window={fit.window[0]!r},{fit.window[1]!r} "
        f"n_points={fit.n_points} degenerate={str(fit.degenerate).lower()}"
    )
    (out / "rate.txt").write_text(summary + "\n")
    plotting.plot_transition(out / "transition.png", curve, fit)
    return curve, fit, summary

"""Adam training loop with fresh input noise every iteration.

Seeds are derived, never drawn from global state: iteration ``k`` of run
(restart) ``r`` uses ``derive_seed(base_seed, r, k, purpose)``, so a run is
reproducible from its :class:`TrainConfig` alone.
"""

from __future__ import annotations

import io
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import NumericError, ParameterError, ShapeError, TrainingFailed
from .model import SinnConfig, SinnParams, forward, init_params, sinn_generate
from .noise import Gaussian, NoiseSpec, derive_seed, sample_noise
from .objective import LossSpec, evaluate_loss, taped_loss

log = logging.getLogger(__name__)

__all__ = [
    "TrainConfig",
    "AdamState",
    "TrainReport",
    "ReportEntry",
    "adam_step",
    "select_lags",
    "train",
    "ensemble_select",
    "extrapolated_validation_loss",
]

# purpose tags for derive_seed
_NOISE, _DROPOUT, _LAGS, _VALIDATION, _INIT = range(5)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    batch_size: int = 400
    validation_size: int = 800
    lag_subsample_m: int = 20
    eval_interval: int = 100
    max_iterations: int = 2000
    stop_threshold: float = 1e-3
    max_restarts: int = 0
    base_seed: int = 0
    seq_len: int = 400
    warmup: int = 0
    stall_patience: int = 10
    stall_tolerance: float = 0.01

    def __post_init__(self):
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ParameterError("beta1 and beta2 must lie in (0, 1)")
        if not self.learning_rate >= 0:
            raise ParameterError("learning_rate must be >= 0")
        for name in ("batch_size", "validation_size", "eval_interval", "seq_len", "lag_subsample_m"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be >= 1")
        if self.max_iterations < 0 or self.max_restarts < 0 or self.warmup < 0:
            raise ParameterError("max_iterations, max_restarts and warmup must be >= 0")


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0

    @classmethod
    def zeros_like(cls, params: SinnParams) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()}, 0)


def adam_step(params: SinnParams, grads, state: AdamState, cfg: TrainConfig):
    """Bias-corrected Adam update; returns new ``(params, state)``."""
    for k, g in grads.items():
        if k not in params or np.shape(g) != params[k].shape:
            raise ShapeError(f"gradient {k} does not match parameters")
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient for {k}")
    t = state.step + 1
    b1, b2 = cfg.beta1, cfg.beta2
    new_p, new_m, new_v = SinnParams(), {}, {}
    for k, p in params.items():
        g = grads.get(k)
        if g is None:
            g = np.zeros_like(p)
        m = b1 * state.m.get(k, 0.0) + (1 - b1) * g
        v = b2 * state.v.get(k, 0.0) + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        new_p[k] = p - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_epsilon)
        new_m[k], new_v[k] = m, v
    return new_p, AdamState(new_m, new_v, t)


def select_lags(t_max: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """``m`` distinct lags from ``1..t_max`` plus lag 0, sorted."""
    if not 1 <= m <= t_max:
        raise ParameterError(f"need 1 <= m <= t_max, got m={m}, t_max={t_max}")
    picked = rng.choice(np.arange(1, t_max + 1), size=m, replace=False)
    return np.concatenate([[0], np.sort(picked)]).astype(np.int64)


@dataclass
class ReportEntry:
    iteration: int
    train_loss: float
    val_loss: float
    seconds: float


@dataclass
class TrainReport:
    entries: list[ReportEntry] = field(default_factory=list)
    run: int = 0
    converged: bool = False

    def append(self, *args):
        self.entries.append(ReportEntry(*args))

    @property
    def best_val_loss(self) -> float:
        return min((e.val_loss for e in self.entries), default=math.inf)

    @property
    def last(self) -> ReportEntry | None:
        return self.entries[-1] if self.entries else None

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("iteration,train_loss,val_loss,seconds\n")
        for e in self.entries:
            buf.write(f"{e.iteration},{e.train_loss!r},{e.val_loss!r},{e.seconds!r}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "TrainReport":
        lines = [l for l in text.splitlines() if l.strip()]
        if not lines or lines[0] != "iteration,train_loss,val_loss,seconds":
            raise ParameterError("not a training report CSV")
        rep = cls()
        for line in lines[1:]:
            it, tr, va, sec = line.split(",")
            rep.append(int(it), float(tr), float(va), float(sec))
        return rep

    def __eq__(self, other):
        if not isinstance(other, TrainReport):
            return NotImplemented
        return [(e.iteration, e.train_loss, e.val_loss) for e in self.entries] == [
            (e.iteration, e.train_loss, e.val_loss) for e in other.entries
        ]


def _iteration_loss(params, config, tcfg, spec, noise_dist, base, run, it):
    tape = ad.Tape()
    pv = {k: tape.var(v, k) for k, v in params.items()}
    noise = sample_noise(NoiseSpec(noise_dist, derive_seed(base, run, it, _NOISE)),
                         tcfg.batch_size, tcfg.seq_len + tcfg.warmup, config.input_dim)
    drop_rng = np.random.default_rng(derive_seed(base, run, it, _DROPOUT))
    out = forward(pv, config, noise, dropout_on=True, rng=drop_rng)
    if tcfg.warmup:
        out = ad.getitem(out, (slice(None), slice(tcfg.warmup, None)))
    lags = None
    if spec.has_acf:
        t_max = min(spec.max_lag, tcfg.seq_len - 1)
        m = min(spec.lag_subsample_m, t_max)
        lags = select_lags(t_max, m, np.random.default_rng(derive_seed(base, run, it, _LAGS)))
    loss = taped_loss(out, spec, lags)
    grads = ad.backward(loss, list(pv.values()))
    values = ad.value_of(out)
    tape.clear()
    return float(loss.value), dict(zip(pv, grads)), values


def validation_loss(params, config, tcfg, spec, noise_dist, seed, dt=1.0) -> float:
    out = sinn_generate(params, config, NoiseSpec(noise_dist, seed), tcfg.validation_size,
                        tcfg.seq_len, dt, tcfg.warmup)
    return evaluate_loss(out, spec)[0]


def train(
    config: SinnConfig,
    tcfg: TrainConfig,
    loss_spec: LossSpec,
    noise=Gaussian(),
    val_spec: LossSpec | None = None,
    on_improve=None,
    init: SinnParams | None = None,
):
    """Fit generator parameters to the statistics in ``loss_spec``.

    ``noise`` is the input distribution; ``val_spec`` (default ``loss_spec``)
    holds validation targets.  ``on_improve(params, report)`` is called at
    every evaluation that improves the best validation loss.  Returns
    ``(params, report)`` of the first run meeting ``stop_threshold`` on both
    losses; raises :class:`TrainingFailed` carrying the best run otherwise.
    """
    val_spec = val_spec or loss_spec
    if loss_spec.has_acf and loss_spec.max_lag >= tcfg.seq_len:
        raise ParameterError(f"target max lag {loss_spec.max_lag} needs seq_len > that, got {tcfg.seq_len}")
    base = tcfg.base_seed
    best_params, best_report, best_val = None, None, math.inf

    for run in range(tcfg.max_restarts + 1):
        if init is not None and run == 0:
            params = init.copy()
        else:
            params = init_params(config, derive_seed(base, run, 0, _INIT))
        params.check(config)
        state = AdamState.zeros_like(params)
        report = TrainReport(run=run)
        run_best, run_best_params, stall = math.inf, params.copy(), 0
        start = time.perf_counter()
        for it in range(1, tcfg.max_iterations + 1):
            _, grads, out = _iteration_loss(params, config, tcfg, loss_spec, noise, base, run, it)
            evaluate = it % tcfg.eval_interval == 0 or it == tcfg.max_iterations
            if evaluate:
                # statistics of the batch that produced this step's gradient
                eps_t = evaluate_loss(out, loss_spec)[0]
            params, state = adam_step(params, grads, state, tcfg)
            if not evaluate:
                continue
            eps_v = validation_loss(params, config, tcfg, val_spec, noise, derive_seed(base, run, it, _VALIDATION))
            if not (math.isfinite(eps_t) and math.isfinite(eps_v)):
                raise NumericError(f"non-finite loss at iteration {it}")
            report.append(it, eps_t, eps_v, time.perf_counter() - start)
            log.info("run %d it %d  eps_T %.3e  eps_V %.3e", run, it, eps_t, eps_v)
            if eps_v < run_best * (1 - tcfg.stall_tolerance):
                stall = 0
            else:
                stall += 1
            if eps_v < run_best:
                run_best, run_best_params = eps_v, params.copy()
                if eps_v < best_val and on_improve is not None:
                    on_improve(params, report)
            if math.isfinite(tcfg.stop_threshold) and max(eps_t, eps_v) <= tcfg.stop_threshold:
                report.converged = True
                return params, report
            if stall >= tcfg.stall_patience and run < tcfg.max_restarts:
                log.info("run %d stalled at iteration %d; restarting", run, it)
                break
        if run_best < best_val or best_params is None:
            best_val, best_params, best_report = run_best, run_best_params, report

    if math.isinf(tcfg.stop_threshold):
        # threshold disabled: the last run's final state is the result
        return params, report
    raise TrainingFailed(
        f"no run reached eps_T, eps_V <= {tcfg.stop_threshold} (best eps_V {best_val:.3e})",
        params=best_params,
        report=best_report,
    )


def extrapolated_validation_loss(params, config, noise_spec: NoiseSpec, spec: LossSpec, batch: int,
                                 window: int, horizon: int, warmup: int = 0) -> float:
    """Worst loss over consecutive ``window``-step blocks of ``horizon``-step trajectories.

    Scoring every block against the known-truth window penalises models whose
    statistics drift when run past the training horizon.
    """
    out = sinn_generate(params, config, noise_spec, batch, horizon, 1.0, warmup).data
    worst = 0.0
    for lo in range(0, horizon - window + 1, window):
        worst = max(worst, evaluate_loss(out[:, lo : lo + window], spec)[0])
    return worst


def ensemble_select(candidates, top_k: int):
    """Sort ``(params, eps_v)`` candidates by ``eps_v`` (ties: earlier first) and keep ``top_k``."""
    if not candidates:
        raise ParameterError("ensemble_select needs at least one candidate")
    if top_k < 1:
        raise ParameterError("top_k must be >= 1")
    order = sorted(range(len(candidates)), key=lambda i: (candidates[i][1], i))
    return [candidates[i] for i in order[:top_k]]

"""Statistics-informed recurrent generators for stochastic time series.

An LSTM driven by i.i.d. noise is trained so that the ensemble statistics of
its outputs (autocorrelation, squared-process autocorrelation, density) match
those of reference trajectories.
"""

from __future__ import annotations

from .ensemble import Ensemble, load_ensemble, save_ensemble
from .errors import (
    DegenerateError,
    DivergenceError,
    FormatError,
    InsufficientDataError,
    NumericError,
    ParameterError,
    ShapeError,
    SinnError,
    TrainingFailed,
)
from .model import Checkpoint, SinnConfig, SinnParams, init_params, load_checkpoint, save_checkpoint, sinn_generate
from .noise import Exponential, Gaussian, NoiseSpec, Uniform, sample_noise
from .train import TrainConfig, TrainReport, ensemble_select, train

__version__ = "0.1.0"

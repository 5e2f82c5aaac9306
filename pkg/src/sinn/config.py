"""Experiment configuration: flat ``section.key = value`` text and shipped presets.

Example::

    # comments start with '#'
    system.kind = ou
    system.theta = 1.0
    data.fine_dt = 0.001
    data.stride = 100
    model.hidden_size = 5
    train.max_iterations = 3000

Values are parsed as int, float, bool (``true``/``false``) or string;
comma-separated values become tuples.  Unknown keys are rejected so typos
fail loudly.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from . import sde
from .errors import FormatError, ParameterError
from .model import SinnConfig
from .noise import NoiseSpec
from .objective import ACF, ACF_SQUARED, PDF
from .train import TrainConfig

__all__ = [
    "SystemConfig",
    "DataConfig",
    "TargetConfig",
    "SampleConfig",
    "RateConfig",
    "ExperimentConfig",
    "PRESETS",
    "preset",
    "parse_config",
    "format_config",
    "load_config",
    "save_config",
]

_SYSTEMS = {
    "ou": sde.OU,
    "fpu": sde.FpuLangevin,
    "double-well": sde.DoubleWell,
    "chain": sde.Chain,
    "poisson": sde.PoissonPulse,
}


@dataclass
class SystemConfig:
    kind: str = "ou"
    params: dict = field(default_factory=dict)

    def build(self):
        try:
            cls = _SYSTEMS[self.kind]
        except KeyError:
            raise ParameterError(f"unknown system {self.kind!r}; expected one of {sorted(_SYSTEMS)}") from None
        names = {f.name for f in fields(cls)}
        extra = set(self.params) - names
        if extra:
            raise ParameterError(f"system {self.kind} has no parameter(s) {sorted(extra)}")
        return cls(**self.params)


@dataclass
class DataConfig:
    fine_dt: float = 1e-3
    stride: int = 100
    trajectory_count: int = 400
    trajectory_length: int = 400
    burn_in: int = 10_000

    @property
    def dt(self) -> float:
        return self.fine_dt * self.stride


@dataclass
class TargetConfig:
    # "analytic" (OU only) or "ensemble" (statistics of generated MD data)
    source: str = "ensemble"
    statistics: tuple = (ACF, PDF)
    max_lag: int = 50
    grid_points: int = 100


@dataclass
class SampleConfig:
    batch: int = 5000
    steps: int = 400


@dataclass
class RateConfig:
    window: tuple = (25.0, 50.0)
    max_time: float = 60.0


@dataclass
class ExperimentConfig:
    name: str = "custom"
    seed: int = 0
    system: SystemConfig = field(default_factory=SystemConfig)
    data: DataConfig = field(default_factory=DataConfig)
    target: TargetConfig = field(default_factory=TargetConfig)
    model: SinnConfig = field(default_factory=SinnConfig)
    noise: dict = field(default_factory=lambda: {"kind": "gaussian"})
    train: TrainConfig = field(default_factory=TrainConfig)
    sample: SampleConfig = field(default_factory=SampleConfig)
    rate: RateConfig = field(default_factory=RateConfig)

    def validate(self) -> "ExperimentConfig":
        d = self.data
        for name in ("stride", "trajectory_count", "trajectory_length"):
            if getattr(d, name) < 1:
                raise ParameterError(f"data.{name} must be >= 1, got {getattr(d, name)}")
        if not d.fine_dt > 0:
            raise ParameterError("data.fine_dt must be > 0")
        if d.burn_in < 0:
            raise ParameterError("data.burn_in must be >= 0")
        if self.target.source not in ("analytic", "ensemble"):
            raise ParameterError(f"target.source must be analytic or ensemble, got {self.target.source!r}")
        if self.target.source == "analytic" and self.system.kind != "ou":
            raise ParameterError("analytic targets exist only for the ou system")
        bad = set(self.target.statistics) - {ACF, ACF_SQUARED, PDF}
        if bad:
            raise ParameterError(f"unknown statistics {sorted(bad)}")
        if self.target.max_lag < 1:
            raise ParameterError("target.max_lag must be >= 1")
        if self.sample.batch < 1 or self.sample.steps < 1:
            raise ParameterError("sample.batch and sample.steps must be >= 1")
        lo, hi = self.rate.window
        if not 0 <= lo < hi:
            raise ParameterError(f"rate.window must satisfy 0 <= lo < hi, got {self.rate.window}")
        self.system.build()
        self.noise_spec()
        return self

    def noise_spec(self) -> NoiseSpec:
        return NoiseSpec.from_dict({**self.noise, "seed": self.seed})

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, seed=int(seed), train=replace(self.train, base_seed=int(seed)))


# ---------------------------------------------------------------- presets


def _ou() -> ExperimentConfig:
    return ExperimentConfig(
        name="ou",
        system=SystemConfig("ou", {"theta": 1.0, "sigma": 0.5}),
        data=DataConfig(fine_dt=1e-3, stride=100, trajectory_count=400, trajectory_length=400),
        target=TargetConfig("analytic", (ACF, PDF), max_lag=50),
        model=SinnConfig(2, 5),
        train=TrainConfig(max_iterations=3000, seq_len=200, max_restarts=1),
        sample=SampleConfig(5000, 200),
    )


def _fpu() -> ExperimentConfig:
    return ExperimentConfig(
        name="fpu",
        system=SystemConfig("fpu", {"alpha": 1.0, "theta": 1.0, "gamma": 1.0, "beta": 1.0}),
        data=DataConfig(fine_dt=1e-3, stride=100, trajectory_count=400, trajectory_length=400),
        target=TargetConfig("ensemble", (ACF, ACF_SQUARED, PDF), max_lag=50),
        model=SinnConfig(2, 5),
        train=TrainConfig(max_iterations=3000, seq_len=200, max_restarts=1),
        sample=SampleConfig(5000, 200),
    )


def _poisson() -> ExperimentConfig:
    return ExperimentConfig(
        name="poisson",
        system=SystemConfig("poisson", {"b": 1.0, "lam": 2.0, "r": 1.0}),
        data=DataConfig(fine_dt=1e-2, stride=20, trajectory_count=400, trajectory_length=400, burn_in=2000),
        target=TargetConfig("ensemble", (ACF, ACF_SQUARED, PDF), max_lag=25),
        model=SinnConfig(2, 5),
        noise={"kind": "exponential", "rate": 1.0},
        train=TrainConfig(max_iterations=3000, seq_len=200, max_restarts=1),
        sample=SampleConfig(5000, 200),
    )


def _cg_chain() -> ExperimentConfig:
    return ExperimentConfig(
        name="cg-chain",
        system=SystemConfig("chain", {"n": 100, "alpha": 1.0, "theta": 1.0, "gamma": 1.0, "beta": 1.0}),
        data=DataConfig(fine_dt=1e-3, stride=100, trajectory_count=400, trajectory_length=400),
        target=TargetConfig("ensemble", (ACF, ACF_SQUARED, PDF), max_lag=50),
        model=SinnConfig(2, 5),
        train=TrainConfig(max_iterations=3000, seq_len=200, max_restarts=1),
        sample=SampleConfig(5000, 200),
    )


def _double_well(v0: float, stride: int, window) -> ExperimentConfig:
    dt = 1e-3 * stride
    points = int(round(80.0 / dt))
    return ExperimentConfig(
        name=f"double-well-v{int(v0)}",
        system=SystemConfig("double-well", {"v0": v0, "x0": 1.0, "gamma": 1.0, "beta": 1.0}),
        data=DataConfig(fine_dt=1e-3, stride=stride, trajectory_count=400, trajectory_length=points + 1),
        target=TargetConfig("ensemble", (ACF, ACF_SQUARED, PDF), max_lag=int(round(20.0 / dt))),
        model=SinnConfig(2, 25),
        train=TrainConfig(max_iterations=2000, seq_len=points, max_restarts=2),
        sample=SampleConfig(1000, int(round(1000.0 / dt)) + 1),
        rate=RateConfig(tuple(float(w) for w in window), 60.0),
    )


PRESETS = {
    "ou": _ou,
    "fpu": _fpu,
    "poisson": _poisson,
    "cg-chain": _cg_chain,
    "double-well-v4": lambda: _double_well(4.0, 200, (5, 10)),
    "double-well-v5": lambda: _double_well(5.0, 200, (25, 50)),
    "double-well-v6": lambda: _double_well(6.0, 500, (25, 50)),
}


def preset(name: str) -> ExperimentConfig:
    try:
        return PRESETS[name]().validate()
    except KeyError:
        raise ParameterError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}") from None


# ---------------------------------------------------------------- text format


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "inf" if math.isinf(v) and v > 0 else repr(v)
    if isinstance(v, (tuple, list)):
        return ", ".join(_format_value(x) for x in v)
    return str(v)


def _parse_scalar(s: str):
    low = s.lower()
    if low in ("true", "false"):
        return low == "true"
    for cast in (int, float):
        try:
            return cast(s)
        except ValueError:
            pass
    return s


def _parse_value(s: str):
    s = s.strip()
    if "," in s:
        return tuple(_parse_scalar(p.strip()) for p in s.split(",") if p.strip())
    return _parse_scalar(s)


def _sections(cfg: ExperimentConfig):
    """Yield ``(prefix, dataclass-or-dict)`` pairs in file order."""
    yield "system", cfg.system.params
    yield "data", cfg.data
    yield "target", cfg.target
    yield "model", cfg.model
    yield "noise", cfg.noise
    yield "train", cfg.train
    yield "sample", cfg.sample
    yield "rate", cfg.rate


def format_config(cfg: ExperimentConfig) -> str:
    """Render every field, defaults included, so the file alone reproduces a run."""
    lines = [f"name = {cfg.name}", f"seed = {cfg.seed}", f"system.kind = {cfg.system.kind}"]
    for prefix, obj in _sections(cfg):
        items = obj.items() if isinstance(obj, dict) else ((f.name, getattr(obj, f.name)) for f in fields(obj))
        for k, v in items:
            lines.append(f"{prefix}.{k} = {_format_value(v)}")
    return "\n".join(lines) + "\n"


def _coerce(target_type, value, key):
    if target_type in (float, "float"):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            if value == "inf":
                return math.inf
            raise FormatError(f"{key}: expected a number, got {value!r}")
        return float(value)
    if target_type in (int, "int"):
        if isinstance(value, bool) or not isinstance(value, int):
            raise FormatError(f"{key}: expected an integer, got {value!r}")
        return value
    if target_type in ("tuple",):
        return value if isinstance(value, tuple) else (value,)
    return value


def _field_types(obj):
    out = {}
    for f in fields(obj):
        t = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
        out[f.name] = t
    return out


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Parse flat dotted text on top of ``base`` (default: the preset named in
    the file via ``preset = NAME``, else built-in defaults)."""
    entries = []
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"line {n}: expected 'key = value', got {raw!r}")
        k, v = line.split("=", 1)
        k = k.strip()
        if not k:
            raise FormatError(f"line {n}: empty key")
        entries.append((n, k, _parse_value(v)))

    named = [v for _, k, v in entries if k == "preset"]
    if base is None:
        base = preset(str(named[-1])) if named else ExperimentConfig()
    cfg = dataclasses.replace(
        base,
        system=SystemConfig(base.system.kind, dict(base.system.params)),
        noise=dict(base.noise),
    )
    sub = {k: {} for k in ("data", "target", "model", "train", "sample", "rate")}
    for n, k, v in entries:
        if k == "preset":
            continue
        if k == "name":
            cfg.name = str(v)
        elif k == "seed":
            cfg.seed = _coerce(int, v, k)
        elif k == "system.kind":
            if v != cfg.system.kind:
                cfg.system = SystemConfig(str(v), {})
        elif k.startswith("system."):
            cfg.system.params[k[7:]] = v
        elif k.startswith("noise."):
            cfg.noise[k[6:]] = v
        else:
            sec, _, key = k.partition(".")
            if sec not in sub or not key:
                raise FormatError(f"line {n}: unknown key {k!r}")
            sub[sec][key] = (n, v)

    for sec, updates in sub.items():
        obj = getattr(cfg, sec)
        types = _field_types(obj)
        kw = {}
        for key, (n, v) in updates.items():
            if key not in types:
                raise FormatError(f"line {n}: unknown key {sec}.{key}")
            kw[key] = _coerce(types[key], v, f"{sec}.{key}")
        if kw:
            setattr(cfg, sec, replace(obj, **kw))
    cfg.system.params = {k: float(v) if k != "n" else int(v) for k, v in cfg.system.params.items()}
    if "seed" in {k for _, k, _ in entries} and not any(k == "train.base_seed" for _, k, _ in entries):
        cfg.train = replace(cfg.train, base_seed=cfg.seed)
    return cfg.validate()


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise FormatError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def save_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(format_config(cfg))

"""Command-line driver: ``sinn {generate,train,sample,stats,rate}``.

Every command accepts ``--config PATH`` (or ``--preset NAME``), ``--out DIR``,
``--seed U64`` and ``--threads N``.  Failures print one line

    sinn-error code=<ErrorClass> message="<text>"

to stderr and exit nonzero (1 for input and numeric errors, 3 when training
ends without meeting the stopping threshold).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import config as cfgmod
from . import plotting
from .ensemble import Ensemble, load_ensemble, save_ensemble
from .errors import ParameterError, SinnError
from .experiment import generate_samples, simulate_data, train_experiment, write_rate, write_stats
from .model import load_checkpoint

EXIT_ERROR = 1
EXIT_TRAINING_FAILED = 3


class _Failure(Exception):
    def __init__(self, code: str, message: str, status: int = EXIT_ERROR):
        super().__init__(message)
        self.code, self.status = code, status


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text}")
    return v


def _nonneg(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"threads must be >= 0, got {text}")
    return v


def _resolve(args) -> cfgmod.ExperimentConfig:
    if args.config and args.preset:
        raise ParameterError("give --config or --preset, not both")
    if args.config:
        cfg = cfgmod.load_config(args.config)
    else:
        cfg = cfgmod.preset(args.preset or "ou")
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_generate(args) -> int:
    cfg = _resolve(args)
    out = _out(args)
    coarse, fine = simulate_data(cfg, args.threads, fine=not args.coarse_only)
    save_ensemble(coarse, out / "coarse.sine")
    if fine is not None:
        save_ensemble(fine, out / "fine.sine")
    meta = [
        f"seed = {cfg.seed}",
        f"fine_dt = {cfg.data.fine_dt!r}",
        f"dt = {coarse.dt!r}",
        f"coarse_shape = {coarse.batch}, {coarse.time}, {coarse.dim}",
    ]
    if fine is not None:
        meta.append(f"fine_shape = {fine.batch}, {fine.time}, {fine.dim}")
    (out / "meta.txt").write_text("\n".join(meta) + "\n")
    cfgmod.save_config(cfg, out / "config.txt")
    plotting.plot_trajectories(out / "trajectories.png", coarse)
    print(f"generated coarse={coarse.batch}x{coarse.time}x{coarse.dim} dt={coarse.dt!r} out={out}")
    return 0


def cmd_train(args) -> int:
    cfg = _resolve(args)
    out = _out(args)
    data = None
    if cfg.target.source == "ensemble":
        path = Path(args.data) if args.data else out / "coarse.sine"
        if path.exists():
            data = load_ensemble(path)
        elif args.data:
            raise _Failure("FormatError", f"training data {path} not found")
        else:
            data, _ = simulate_data(cfg, args.threads)
            save_ensemble(data, path)
    if args.max_iterations is not None:
        cfg.train = replace(cfg.train, max_iterations=args.max_iterations)
    res = train_experiment(cfg, data, out)
    last = res.report.last
    line = (
        f"trained iterations={last.iteration if last else 0} "
        f"eps_t={last.train_loss if last else float('nan')!r} "
        f"best_eps_v={res.report.best_val_loss!r} converged={str(res.converged).lower()}"
    )
    print(line)
    if not res.converged:
        raise _Failure(
            "TrainingFailed",
            f"stopping threshold {cfg.train.stop_threshold} not reached; best checkpoint kept in {out}",
            EXIT_TRAINING_FAILED,
        )
    return 0


def cmd_sample(args) -> int:
    out = _out(args)
    ck = load_checkpoint(args.checkpoint)
    seed = 0 if args.seed is None else args.seed
    if args.batch < 1 or args.steps < 1:
        raise ParameterError("batch and steps must be >= 1")
    e = generate_samples(ck, args.batch, args.steps, seed, args.threads)
    name = args.name or "samples.sine"
    save_ensemble(e, out / name)
    print(f"sampled {e.batch}x{e.time}x{e.dim} dt={e.dt!r} file={out / name}")
    return 0


def cmd_stats(args) -> int:
    out = _out(args)
    e = load_ensemble(args.ensemble)
    res = write_stats(e, out, args.max_lag, args.method, args.grid_points, args.component)
    print(f"stats method={args.method} max_lag={int(res['acf'].lags.max())} out={out}")
    return 0


def cmd_rate(args) -> int:
    out = _out(args)
    e = load_ensemble(args.ensemble)
    if e.dim != 1:
        raise ParameterError(f"rate needs a 1-dimensional ensemble, got dim={e.dim}")
    dt = e.dt if args.dt is None else args.dt
    if dt != e.dt:
        e = Ensemble(e.data, dt)
    _, _, summary = write_rate(e, out, args.window, args.max_time)
    print(summary)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat dotted config file")
    common.add_argument("--preset", choices=sorted(cfgmod.PRESETS), help="shipped experiment preset")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--seed", type=_u64, help="override the config seed")
    common.add_argument("--threads", type=_nonneg, default=0, help="worker threads (0 = serial)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="sinn", description="Statistics-informed recurrent generators for SDE data.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="simulate reference trajectories")
    g.add_argument("--coarse-only", action="store_true", help="skip writing the fine-step ensemble")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", parents=[common], help="fit a generator to target statistics")
    t.add_argument("--data", help="coarse ensemble (default OUT/coarse.sine, simulated if missing)")
    t.add_argument("--max-iterations", type=int, help="override train.max_iterations")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sample", parents=[common], help="generate trajectories from a checkpoint")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--batch", type=int, default=5000)
    s.add_argument("--steps", type=int, default=400)
    s.add_argument("--name", help="output file name (.sine or .csv)")
    s.set_defaults(func=cmd_sample)

    st = sub.add_parser("stats", parents=[common], help="ACF, squared ACF and KDE reports")
    st.add_argument("--ensemble", required=True)
    st.add_argument("--method", choices=("brute", "fft"), default="fft")
    st.add_argument("--max-lag", type=int, default=100)
    st.add_argument("--grid-points", type=int, default=100)
    st.add_argument("--component", type=int, default=0)
    st.set_defaults(func=cmd_stats)

    r = sub.add_parser("rate", parents=[common], help="transition correlation and rate fit")
    r.add_argument("--ensemble", required=True)
    r.add_argument("--window", type=float, nargs=2, default=(25.0, 50.0), metavar=("LO", "HI"))
    r.add_argument("--dt", type=float, help="override the ensemble time step")
    r.add_argument("--max-time", type=float, default=60.0)
    r.set_defaults(func=cmd_rate)
    return p


def _error_line(code: str, message: str) -> str:
    return f"sinn-error code={code} message={json.dumps(message)}"


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except _Failure as exc:
        print(_error_line(exc.code, str(exc)), file=sys.stderr)
        return exc.status
    except (SinnError, OSError) as exc:
        print(_error_line(type(exc).__name__, str(exc)), file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

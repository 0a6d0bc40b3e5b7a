"""Command-line pipeline: simulate, train, predict, evaluate, report.

Experiments are described by one INI file::

    [run]
    seed = 0
    out = runs/example
    workers = 1

    [data]
    # csv = path/to/series.csv   (omit to use <out>/series.csv from ``simulate``)
    num_hours = 8064
    holidays = 2017-01-16:0.6, 2017-11-23:0.5
    input_length = 144
    horizon = 6
    stride = 1

    [arch]
    conv_specs = 16:7:2, 32:5:2, 32:3:2
    decoder_hidden = 64

    [priors]
    a0 = 1.0

    [svgd]
    n_particles = 10
    epochs = 20

    [eval]
    level = 0.95
    split = test

Every key is optional; omitted keys take the library defaults. ``--seed``,
``--workers`` and ``--out`` override the ``[run]`` values.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .data import (
    N_CALENDAR,
    SeriesFrame,
    SynthConfig,
    generate_synthetic,
    load_csv,
    prepare_splits,
    write_csv,
)
from .errors import ConfigError, ContractError, DataError, ForecastError
from .evaluation import evaluate_arrays
from .model import ArchConfig, ParamLayout
from .posterior import PriorConfig, gaussian_loglik, log_prior
from .predict import (
    ensemble_outputs,
    predict_original_scale,
    read_predictions,
    summarize_samples,
    write_predictions,
)
from .svgd import ParticleEnsemble, SvgdConfig, train

logger = logging.getLogger("svgd_forecast")

SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class WindowConfig:
    input_length: int = 144
    horizon: int = 6
    stride: int = 1

    def __post_init__(self):
        if min(self.input_length, self.horizon, self.stride) < 1:
            raise ConfigError(f"window settings must be >= 1: {self}")


@dataclass(frozen=True)
class EvalConfig:
    level: float = 0.95
    split: str = "test"

    def __post_init__(self):
        if not 0.0 < self.level < 1.0:
            raise ConfigError(f"level must lie in (0, 1), got {self.level}")
        if self.split not in SPLITS:
            raise ConfigError(f"split must be one of {SPLITS}, got {self.split!r}")


@dataclass(frozen=True)
class RunConfig:
    synth: SynthConfig = field(default_factory=SynthConfig)
    csv: Optional[str] = None
    windows: WindowConfig = field(default_factory=WindowConfig)
    arch: ArchConfig = field(default_factory=ArchConfig)
    priors: PriorConfig = field(default_factory=PriorConfig)
    svgd: SvgdConfig = field(default_factory=SvgdConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    seed: int = 0
    out: str = "run"
    workers: int = 1

    @property
    def out_dir(self) -> Path:
        return Path(self.out)

    @property
    def series_path(self) -> Path:
        return Path(self.csv) if self.csv else self.out_dir / "series.csv"

    @property
    def model_tag(self) -> str:
        n = self.svgd.n_particles
        return "DetNN-MAP" if n == 1 else f"BNN-{n}"


# --- INI parsing -------------------------------------------------------------

def _floats(text):
    return tuple(float(v) for v in text.replace(",", " ").split())


def _ints(text):
    return tuple(int(v) for v in text.replace(",", " ").split())


def _conv_specs(text):
    specs = []
    for item in text.split(","):
        parts = item.strip().split(":")
        if len(parts) != 3:
            raise ValueError(f"conv spec {item.strip()!r} is not channels:kernel:stride")
        specs.append(tuple(int(p) for p in parts))
    return tuple(specs)


def _holidays(text):
    if text.strip().lower() in ("", "none"):
        return ()
    out = []
    for item in text.split(","):
        date, _, mult = item.strip().partition(":")
        out.append((date.strip(), float(mult) if mult else 0.5))
    return tuple(out)


_SPECIAL = {
    "weekday_effects": _floats,
    "holidays": _holidays,
    "conv_specs": _conv_specs,
    "decoder_hidden": _ints,
}


def _parse_section(section, cls, skip=()):
    kwargs = {}
    names = {f.name: f for f in dataclasses.fields(cls)}
    for key, raw in section.items():
        if key in skip:
            continue
        if key not in names:
            raise ConfigError(f"unknown key {key!r} in [{section.name}]")
        default = names[key].default
        try:
            if key in _SPECIAL:
                kwargs[key] = _SPECIAL[key](raw)
            elif isinstance(default, bool):
                kwargs[key] = section.getboolean(key)
            elif isinstance(default, int):
                kwargs[key] = int(raw)
            elif isinstance(default, float):
                kwargs[key] = float(raw)
            else:
                kwargs[key] = raw
        except ValueError as exc:
            raise ConfigError(f"[{section.name}] {key} = {raw!r}: {exc}") from exc
    return kwargs


_SECTIONS = ("run", "data", "arch", "priors", "svgd", "eval")
_WINDOW_KEYS = ("input_length", "horizon", "stride")
_DERIVED_ARCH = ("n_channels", "n_calendar", "input_length", "horizon")


def load_config(path=None, seed=None, workers=None, out=None) -> RunConfig:
    """Build a RunConfig from an optional INI file plus flag overrides."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if path is not None:
        try:
            with open(path) as handle:
                parser.read_file(handle)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except configparser.Error as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from exc
    for name in parser.sections():
        if name not in _SECTIONS:
            raise ConfigError(f"unknown section [{name}]; expected one of {_SECTIONS}")
    sec = {name: parser[name] if parser.has_section(name) else {} for name in _SECTIONS}

    run = {}
    for key, raw in sec["run"].items():
        if key not in ("seed", "out", "workers"):
            raise ConfigError(f"unknown key {key!r} in [run]")
        run[key] = raw
    try:
        run_seed = int(run.get("seed", 0)) if seed is None else seed
        run_workers = int(run.get("workers", 1)) if workers is None else workers
    except ValueError as exc:
        raise ConfigError(f"[run]: {exc}") from exc
    run_out = run.get("out", "run") if out is None else str(out)

    data = sec["data"]
    csv_path = data.get("csv") if data else None
    try:
        window_kwargs = {k: int(data[k]) for k in _WINDOW_KEYS if data and k in data}
    except ValueError as exc:
        raise ConfigError(f"[data]: {exc}") from exc
    synth_kwargs = _parse_section(data, SynthConfig, skip=_WINDOW_KEYS + ("csv",)) if data else {}
    windows = WindowConfig(**window_kwargs)

    arch_kwargs = _parse_section(sec["arch"], ArchConfig) if sec["arch"] else {}
    if set(arch_kwargs) & set(_DERIVED_ARCH):
        raise ConfigError(f"[arch] may not set {_DERIVED_ARCH}; they follow from [data]")
    arch = ArchConfig(n_channels=1 + N_CALENDAR, n_calendar=N_CALENDAR, input_length=windows.input_length,
                      horizon=windows.horizon, **arch_kwargs)

    svgd_kwargs = _parse_section(sec["svgd"], SvgdConfig) if sec["svgd"] else {}
    if {"seed", "workers"} & set(svgd_kwargs):
        raise ConfigError("set seed and workers in [run], not [svgd]")
    return RunConfig(
        synth=SynthConfig(**synth_kwargs),
        csv=csv_path,
        windows=windows,
        arch=arch,
        priors=PriorConfig(**(_parse_section(sec["priors"], PriorConfig) if sec["priors"] else {})),
        svgd=SvgdConfig(seed=run_seed, workers=run_workers, **svgd_kwargs),
        eval=EvalConfig(**(_parse_section(sec["eval"], EvalConfig) if sec["eval"] else {})),
        seed=run_seed,
        out=run_out,
        workers=run_workers,
    )


# --- pipeline steps ------------------------------------------------------------

def _load_series(cfg: RunConfig) -> SeriesFrame:
    path = cfg.series_path
    if not path.exists():
        raise DataError(f"series file {path} not found; run `simulate` first or set [data] csv")
    return load_csv(path)


def _splits(cfg: RunConfig, series: SeriesFrame):
    w = cfg.windows
    return prepare_splits(series, L_in=w.input_length, d=w.horizon, stride=w.stride)


def cmd_simulate(cfg: RunConfig) -> Path:
    series = generate_synthetic(cfg.synth, cfg.seed)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    path = cfg.out_dir / "series.csv"
    write_csv(series, path)
    logger.info("wrote %d hours to %s", len(series), path)
    return path


def _mean_log_joint(ensemble, f, targets, priors) -> float:
    noise = ensemble.layout.noise_slice
    values = [gaussian_loglik(targets, f[i], ensemble.theta[i, noise]) + log_prior(ensemble.particle(i), priors)
              for i in range(ensemble.n_particles)]
    return float(np.mean(values))


def _split_wmape(f, noise_var, dataset, transform) -> float:
    s = summarize_samples(f, noise_var)
    return evaluate_arrays(transform.inverse(dataset.targets), transform.inverse(s.mean)).wmape_overall


def cmd_train(cfg: RunConfig) -> Path:
    series = _load_series(cfg)
    transform, train_set, val_set, _ = _splits(cfg, series)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    log_path = cfg.out_dir / "train.log"
    lines = [
        f"model {cfg.model_tag} particles {cfg.svgd.n_particles} parameters {ParamLayout.from_arch(cfg.arch).size} "
        f"train_windows {len(train_set)} val_windows {len(val_set)} seed {cfg.seed}"
    ]
    logger.info(lines[0])

    def on_epoch(epoch, ensemble):
        f_tr, nv = ensemble_outputs(ensemble, train_set.inputs, train_set.target_calendar)
        f_va, _ = ensemble_outputs(ensemble, val_set.inputs, val_set.target_calendar)
        line = (f"epoch {epoch + 1}/{cfg.svgd.epochs} "
                f"train_wmape {_split_wmape(f_tr, nv, train_set, transform):.6f} "
                f"val_wmape {_split_wmape(f_va, nv, val_set, transform):.6f} "
                f"mean_log_joint {_mean_log_joint(ensemble, f_tr, train_set.targets, cfg.priors):.6f}")
        lines.append(line)
        logger.info(line)

    try:
        ensemble = train(train_set, cfg.arch, cfg.priors, cfg.svgd, callback=on_epoch)
    finally:
        log_path.write_text("\n".join(lines) + "\n")
    ckpt = cfg.out_dir / "checkpoint"
    ensemble.save(ckpt)
    (cfg.out_dir / "transform.json").write_text(
        json.dumps({"kind": transform.kind, "mean": transform.mean, "std": transform.std}, indent=2) + "\n")
    logger.info("wrote checkpoint %s", ckpt)
    return ckpt


def cmd_predict(cfg: RunConfig, checkpoint=None, split: Optional[str] = None) -> Path:
    split = split or cfg.eval.split
    if split not in SPLITS:
        raise ConfigError(f"split must be one of {SPLITS}, got {split!r}")
    ensemble = ParticleEnsemble.load(checkpoint or cfg.out_dir / "checkpoint")
    expected = ParamLayout.from_arch(cfg.arch)
    if ensemble.layout != expected:
        raise ContractError(f"checkpoint layout ({ensemble.layout.arch}) does not match the configured "
                            f"architecture ({cfg.arch})")
    series = _load_series(cfg)
    transform, *parts = _splits(cfg, series)
    dataset = dict(zip(SPLITS, parts))[split]
    f, nv = ensemble_outputs(ensemble, dataset.inputs, dataset.target_calendar)
    summary = summarize_samples(f, nv, cfg.eval.level, window_ids=np.arange(len(dataset)))
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    path = cfg.out_dir / "predictions.csv"
    write_predictions(path, predict_original_scale(summary, transform), transform.inverse(dataset.targets))
    logger.info("wrote %d windows x %d horizons to %s", len(dataset), dataset.horizon, path)
    return path


def cmd_evaluate(cfg: RunConfig, predictions=None) -> Path:
    summary, actual = read_predictions(predictions or cfg.out_dir / "predictions.csv")
    report = evaluate_arrays(actual, summary.mean, summary.lo, summary.hi, model_tag=cfg.model_tag)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    path = cfg.out_dir / "metrics.json"
    report.write(path, cfg.out_dir / "metrics_horizon.csv")
    logger.info("%s wmape %.6f coverage %.4f over %d windows", report.model_tag, report.wmape_overall,
                report.coverage_overall, report.n_windows)
    return path


def cmd_report(cfg: RunConfig) -> Path:
    """Run the whole pipeline, simulating first unless a CSV is configured."""
    if cfg.csv is None:
        cmd_simulate(cfg)
    cmd_train(cfg)
    cmd_predict(cfg)
    path = cmd_evaluate(cfg)
    print(path.read_text(), end="")
    return path


# --- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI experiment file")
    common.add_argument("--seed", type=int, help="override [run] seed")
    common.add_argument("--workers", type=int, help="override [run] workers")
    common.add_argument("--out", type=Path, help="override [run] output directory")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    parser = argparse.ArgumentParser(prog="svgd-forecast", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="write a synthetic series.csv")
    sub.add_parser("train", parents=[common], help="fit the particle ensemble and write a checkpoint")
    p = sub.add_parser("predict", parents=[common], help="write predictions.csv for one split")
    p.add_argument("--checkpoint", type=Path, help="checkpoint directory (default <out>/checkpoint)")
    p.add_argument("--split", choices=SPLITS, help="split to predict (default [eval] split)")
    e = sub.add_parser("evaluate", parents=[common], help="score predictions.csv")
    e.add_argument("--predictions", type=Path, help="predictions CSV (default <out>/predictions.csv)")
    sub.add_parser("report", parents=[common], help="simulate, train, predict and evaluate in one go")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(message)s",
                        stream=sys.stderr, force=True)
    try:
        cfg = load_config(args.config, seed=args.seed, workers=args.workers, out=args.out)
        if args.command == "simulate":
            cmd_simulate(cfg)
        elif args.command == "train":
            cmd_train(cfg)
        elif args.command == "predict":
            cmd_predict(cfg, args.checkpoint, args.split)
        elif args.command == "evaluate":
            cmd_evaluate(cfg, args.predictions)
        else:
            cmd_report(cfg)
    except ForecastError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Bayesian encoder-decoder forecasting of cyclical hourly demand with SVGD particle ensembles."""

from .data import SeriesFrame, SynthConfig, Transform, WindowedDataset, generate_synthetic, load_csv, prepare_splits
from .errors import ConfigError, ContractError, DataError, ForecastError, NumericError
from .estimators import BNNForecaster, DetNNForecaster, LogZScoreTransformer, MLPForecaster
from .evaluation import MetricReport, coverage, evaluate, wmape
from .model import ArchConfig, ParamLayout, ParticleState
from .posterior import PriorConfig, grad_log_joint, log_joint
from .predict import PredictiveSummary, summarize
from .svgd import ParticleEnsemble, SvgdConfig, train

__version__ = "0.1.0"

__all__ = [
    "ArchConfig",
    "BNNForecaster",
    "ConfigError",
    "ContractError",
    "DataError",
    "DetNNForecaster",
    "ForecastError",
    "LogZScoreTransformer",
    "MLPForecaster",
    "MetricReport",
    "NumericError",
    "ParamLayout",
    "ParticleEnsemble",
    "ParticleState",
    "PredictiveSummary",
    "PriorConfig",
    "SeriesFrame",
    "SvgdConfig",
    "SynthConfig",
    "Transform",
    "WindowedDataset",
    "coverage",
    "evaluate",
    "generate_synthetic",
    "grad_log_joint",
    "load_csv",
    "log_joint",
    "prepare_splits",
    "summarize",
    "train",
    "wmape",
]

"""Meta-learned initialization and step size for the exponential forecaster on dispersed losses."""

__version__ = "0.1.0"

from .estimators import ExponentialForecaster, MetaForecaster, MetaInitializer  # noqa: E402
from .forecaster import ef_init, ef_run_task, ef_sample, ef_update  # noqa: E402
from .meta_init import ftrl_update  # noqa: E402
from .meta_step import MetaConfig, meta_run  # noqa: E402
from .piecewise import Density, Interval, PiecewiseConstant  # noqa: E402

__all__ = [
    "Density",
    "ExponentialForecaster",
    "Interval",
    "MetaConfig",
    "MetaForecaster",
    "MetaInitializer",
    "PiecewiseConstant",
    "ef_init",
    "ef_run_task",
    "ef_sample",
    "ef_update",
    "ftrl_update",
    "meta_run",
]

"""Static figures from drotrain CSV artifacts."""

from .io import ABLATION_COLUMNS, RUN_LOG_COLUMNS, SchemaError, read_ablation_summary, read_run_log
from .render import PlotJob, PlotKind, render

__version__ = "0.1.0"

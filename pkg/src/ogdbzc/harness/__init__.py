"""Experiment orchestration: streams, config, benchmark, fuzzing, figures."""

from .benchmark import BenchmarkResult, RegretReport, best_safe_linear, regret_curve
from .config import RunConfig, default_config, default_raw_config, load_config, parse_config
from .fuzz import FuzzSummary, safety_fuzz
from .reproduce import reproduce
from .runner import execute, prepare_params, simulate_linear
from .streams import (
    Adaptive,
    Constant,
    DisturbanceStream,
    IidUniform,
    Replay,
    SignFlip,
    make_stream,
)
from .traces import read_csv, render_trace_csv, write_trace_csv

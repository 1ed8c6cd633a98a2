"""Reproduction of the 2-D experiment figures as CSV plus plot scripts.

fig1a: T=30 trajectories under i.i.d. uniform disturbances, online
algorithm against the bare stabilizing gain. fig1b: the same under the
constant extreme disturbance. fig2: the average-regret curve against the
best safe linear policy in hindsight under the constant disturbance.
"""

from __future__ import annotations

import json
import os

import numpy as np

from ..errors import ConfigError
from .benchmark import regret_curve
from .config import default_config
from .runner import execute, simulate_linear
from .traces import emit_plot_script, write_figure_csv

FIG1_T = 30
FIG2_GRID = (30, 100, 300, 1000)


def _fig1(tag: str, variant: str, out_dir: str, seed: int) -> list[str]:
    config = default_config(T=FIG1_T, seed=seed, variant=variant)
    trace = execute(config)
    lin_x, lin_u, lin_cost = simulate_linear(config, config.K, trace.w)
    header = {
        "figure": tag,
        "seed": seed,
        "config": json.dumps(config.raw, sort_keys=True),
    }
    rows = []
    for t in range(len(trace.t)):
        rows.append(
            [t, trace.x[t, 0], trace.x[t, 1], trace.u[t, 0], trace.cost[t], "ogd_bzc"]
        )
    for t in range(lin_x.shape[0]):
        rows.append([t, lin_x[t, 0], lin_x[t, 1], lin_u[t, 0], lin_cost[t], "linear"])
    csv_path = os.path.join(out_dir, f"{tag}.csv")
    write_figure_csv(csv_path, header, ["t", "x1", "x2", "u", "cost", "controller"], rows)
    script = emit_plot_script(os.path.join(out_dir, f"plot_{tag}.py"), f"{tag}.csv", "trajectory")
    return [csv_path, script]


def _fig2(out_dir: str, seed: int, grid_step: float = 0.02) -> list[str]:
    config = default_config(T=max(FIG2_GRID), seed=seed, variant="constant")
    report = regret_curve(config, list(FIG2_GRID), grid_step=grid_step)
    header = {
        "figure": "fig2",
        "seed": seed,
        "grid_step": grid_step,
        "config": json.dumps(config.raw, sort_keys=True),
    }
    csv_path = os.path.join(out_dir, "fig2.csv")
    write_figure_csv(csv_path, header, report.columns(), report.rows())
    script = emit_plot_script(os.path.join(out_dir, "plot_fig2.py"), "fig2.csv", "regret")
    return [csv_path, script]


def reproduce(figure: str, out_dir: str, seed: int = 0) -> list[str]:
    """Write the named figure's data files; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    if figure == "fig1a":
        return _fig1("fig1a", "iid_uniform", out_dir, seed)
    if figure == "fig1b":
        return _fig1("fig1b", "constant", out_dir, seed)
    if figure == "fig2":
        return _fig2(out_dir, seed)
    raise ConfigError(f"unknown figure {figure!r}; expected fig1a, fig1b or fig2")

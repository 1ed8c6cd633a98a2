"""CSV emission and recovery for run traces and figure data.

Floats are written with shortest round-trip repr so a fixed seed gives
byte-identical files. Header metadata rides in '#'-prefixed comment
lines above the column row.
"""

from __future__ import annotations

import io
import os

import numpy as np

from ..ogd_bzc import RunTrace


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def trace_columns(n: int, m: int) -> list[str]:
    cols = ["t"]
    cols += [f"x{i}" for i in range(n)]
    cols += [f"u{i}" for i in range(m)]
    cols += [f"w{i}" for i in range(n)]
    cols += ["cost", "cum_cost", "safe_x", "safe_u", "step_norm", "grad_norm"]
    return cols


def render_trace_csv(trace: RunTrace) -> str:
    n = trace.x.shape[1]
    m = trace.u.shape[1]
    buf = io.StringIO()
    for key in sorted(trace.header):
        buf.write(f"# {key}: {trace.header[key]}\n")
    buf.write(",".join(trace_columns(n, m)) + "\n")
    for i in range(len(trace.t)):
        row = [_fmt(trace.t[i])]
        row += [_fmt(v) for v in trace.x[i]]
        row += [_fmt(v) for v in trace.u[i]]
        row += [_fmt(v) for v in trace.w[i]]
        row += [
            _fmt(trace.cost[i]),
            _fmt(trace.cum_cost[i]),
            _fmt(trace.safe_x[i]),
            _fmt(trace.safe_u[i]),
            _fmt(trace.step_norm[i]),
            _fmt(trace.grad_norm[i]),
        ]
        buf.write(",".join(row) + "\n")
    return buf.getvalue()


def write_trace_csv(trace: RunTrace, path: str) -> str:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as f:
        f.write(render_trace_csv(trace))
    return path


def read_csv(path: str):
    """Header dict, column names, and a dict of float column arrays."""
    header = {}
    with open(path) as f:
        lines = f.readlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            k, _, v = line[1:].partition(":")
            header[k.strip()] = v.strip()
        elif line.strip():
            body.append(line.strip())
    cols = body[0].split(",")
    rows = [line.split(",") for line in body[1:]]
    data = {}
    for j, c in enumerate(cols):
        vals = [r[j] for r in rows]
        try:
            data[c] = np.array([float(v) for v in vals])
        except ValueError:
            data[c] = np.array(vals)
    return header, cols, data


def write_figure_csv(path: str, header: dict, columns: list[str], rows: list[list]) -> str:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as f:
        for key in sorted(header):
            f.write(f"# {key}: {header[key]}\n")
        f.write(",".join(columns) + "\n")
        for row in rows:
            f.write(",".join(_fmt(v) if not isinstance(v, str) else v for v in row) + "\n")
    return path


_TRAJECTORY_PLOT = '''"""Plot state trajectories from {csv}; emitted alongside the data,
never executed by the tool itself."""
import csv
import matplotlib.pyplot as plt

xs = {{}}
with open("{csv}") as f:
    rows = [r for r in csv.reader(f) if r and not r[0].startswith("#")]
head, body = rows[0], rows[1:]
i = {{c: k for k, c in enumerate(head)}}
for r in body:
    xs.setdefault(r[i["controller"]], []).append((float(r[i["x1"]]), float(r[i["x2"]])))

fig, ax = plt.subplots(figsize=(5, 5))
circle = plt.Circle((0, 0), 1.0, fill=False, linestyle="--", color="gray")
ax.add_patch(circle)
for name, pts in xs.items():
    ax.plot(*zip(*pts), marker="o", markersize=3, label=name)
ax.set_xlabel("x1")
ax.set_ylabel("x2")
ax.set_aspect("equal")
ax.legend()
fig.savefig("{png}", dpi=150, bbox_inches="tight")
print("wrote {png}")
'''

_REGRET_PLOT = '''"""Plot the average-regret curve from {csv}; emitted alongside the
data, never executed by the tool itself."""
import csv
import matplotlib.pyplot as plt

T, avg = [], []
with open("{csv}") as f:
    rows = [r for r in csv.reader(f) if r and not r[0].startswith("#")]
head, body = rows[0], rows[1:]
i = {{c: k for k, c in enumerate(head)}}
for r in body:
    T.append(float(r[i["T"]]))
    avg.append(float(r[i["avg_regret"]]))

fig, ax = plt.subplots(figsize=(5, 3.5))
ax.plot(T, avg, marker="s")
ax.axhline(0.0, color="gray", linestyle="--", linewidth=0.8)
ax.set_xscale("log")
ax.set_xlabel("T")
ax.set_ylabel("Reg_T / T")
fig.savefig("{png}", dpi=150, bbox_inches="tight")
print("wrote {png}")
'''


def emit_plot_script(path: str, csv_name: str, kind: str) -> str:
    tmpl = _TRAJECTORY_PLOT if kind == "trajectory" else _REGRET_PLOT
    png = os.path.splitext(csv_name)[0] + ".png"
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as f:
        f.write(tmpl.format(csv=csv_name, png=png))
    return path

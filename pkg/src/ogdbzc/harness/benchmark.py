"""Hindsight benchmark: the best certified-safe linear policy on a grid.

The continuous argmin over the safe strongly stable class is replaced by
a finite grid with a refinement-convergence check; candidates must carry
a stability certificate and a nonnegative certified safety margin before
they compete on recorded disturbances. Reductions run in sorted grid
order so reports are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, UnstableSystemError
from ..geometry import box_image_contained
from ..lti import certify_strong_stability, worst_case_reach_radii
from .config import RunConfig
from .runner import execute, simulate_linear
from .streams import make_stream

BENCH_HORIZON_CAP = 200


@dataclass
class BenchmarkResult:
    K_star: np.ndarray
    total_cost: float
    n_grid: int
    n_stable: int
    n_safe: int
    grid_step: float


@dataclass
class RegretReport:
    """Per-horizon regret against the hindsight benchmark."""

    grid_step: float
    entries: list = field(default_factory=list)

    def add(self, T, alg_cost, K_star, bench_cost, n_safe):
        self.entries.append(
            {
                "T": int(T),
                "alg_cost": float(alg_cost),
                "K_star": np.asarray(K_star).ravel().tolist(),
                "bench_cost": float(bench_cost),
                "regret": float(alg_cost - bench_cost),
                "avg_regret": float((alg_cost - bench_cost) / T),
                "n_safe": int(n_safe),
            }
        )

    def columns(self):
        return ["T", "alg_cost", "bench_cost", "regret", "avg_regret", "n_safe", "K_star"]

    def rows(self):
        return [
            [
                e["T"],
                e["alg_cost"],
                e["bench_cost"],
                e["regret"],
                e["avg_regret"],
                e["n_safe"],
                " ".join(repr(v) for v in e["K_star"]),
            ]
            for e in self.entries
        ]


def _grid_gains(m: int, n: int, grid_step: float, lo: float = -1.0, hi: float = 1.0):
    """Mesh over gain entries in sorted (row-major) order."""
    axis = np.arange(lo, hi + grid_step / 2, grid_step)
    dims = m * n
    if len(axis) ** dims > 2_000_000:
        raise ConfigError("benchmark grid too large; increase the step")
    mesh = np.meshgrid(*([axis] * dims), indexing="ij")
    flat = np.stack([g.ravel() for g in mesh], axis=1)
    return flat.reshape(-1, m, n)


_GRID_CACHE: dict = {}


def safe_grid_policies(config: RunConfig, grid_step: float = 0.02):
    """Grid gains that certify stable and strictly safe at margin zero.

    Certification is disturbance-independent, so results are memoized per
    config object and step.
    """
    key = (id(config), grid_step)
    if key in _GRID_CACHE:
        return _GRID_CACHE[key]
    sys, spec = config.sys, config.spec
    gains = _grid_gains(sys.m, sys.n, grid_step)
    A_K = sys.A[None] - np.einsum("nm,kml->knl", sys.B, gains)
    eig = np.linalg.eigvals(A_K)
    stable = np.max(np.abs(eig), axis=1) < 1.0 - 1e-9
    stable_idx = np.flatnonzero(stable)
    safe = []
    certs = []
    for i in stable_idx:
        try:
            cert = certify_strong_stability(sys, gains[i])
        except UnstableSystemError:
            continue
        rho_x, rho_u = worst_case_reach_radii(sys, cert, BENCH_HORIZON_CAP)
        if box_image_contained(rho_x, spec.state_set) and box_image_contained(
            rho_u, spec.input_set
        ):
            safe.append(gains[i])
            certs.append(cert)
    out = (gains, int(stable.sum()), np.array(safe), certs)
    _GRID_CACHE[key] = out
    return out


def _batched_costs(config: RunConfig, gains: np.ndarray, w_log: np.ndarray,
                   snapshots: list[int]):
    """Cumulative cost of every gain on the recorded log at each snapshot T."""
    sys = config.sys
    N = gains.shape[0]
    x = np.zeros((N, sys.n))
    cum = np.zeros(N)
    out = np.zeros((len(snapshots), N))
    snap = {T: j for j, T in enumerate(snapshots)}
    T_max = max(snapshots)
    for t in range(T_max + 1):
        u = -np.einsum("kmn,kn->km", gains, x)
        cum = cum + _stage_cost_batch(config, x, u)
        if t in snap:
            out[snap[t]] = cum
        x = x @ sys.A.T + u @ sys.B.T + w_log[t]
    return out


def _stage_cost_batch(config: RunConfig, X: np.ndarray, U: np.ndarray) -> np.ndarray:
    cost = config.cost
    if hasattr(cost, "Q"):  # quadratic fast path
        qx = np.einsum("ki,ki->k", X, X) if cost.Q is None else np.einsum(
            "ki,ij,kj->k", X, cost.Q, X
        )
        ru = np.einsum("ki,ki->k", U, U) if cost.R is None else np.einsum(
            "ki,ij,kj->k", U, cost.R, U
        )
        return qx + ru
    return np.array([cost.evaluate(x, u) for x, u in zip(X, U)])


def best_safe_linear(
    config: RunConfig,
    w_log: np.ndarray,
    grid_step: float = 0.02,
    snapshots: list[int] | None = None,
):
    """Minimize recorded total cost over the certified-safe grid.

    Returns (results, n_grid, n_stable, n_safe) where results maps each
    snapshot horizon to (K_star, total_cost). The winner's trajectory is
    re-checked against the raw safety sets step by step.
    """
    T = w_log.shape[0] - 1
    snapshots = snapshots or [T]
    if max(snapshots) > T:
        raise ConfigError("snapshot horizon exceeds the recorded log")
    gains, n_stable, safe, _certs = safe_grid_policies(config, grid_step)
    if safe.shape[0] == 0:
        raise ConfigError("no certified-safe policy on the benchmark grid")
    table = _batched_costs(config, safe, w_log, snapshots)
    results = {}
    for j, T_j in enumerate(snapshots):
        i = int(np.argmin(table[j]))
        results[T_j] = (safe[i], float(table[j, i]))
        _validate_winner(config, safe[i], w_log[: T_j + 1])
    return results, gains.shape[0], n_stable, safe.shape[0]


def _validate_winner(config: RunConfig, K_star: np.ndarray, w_log: np.ndarray) -> None:
    xs, us, _ = simulate_linear(config, K_star, w_log)
    for t in range(xs.shape[0]):
        if not config.spec.state_set.contains(xs[t], 1e-9) or not config.spec.input_set.contains(
            us[t], 1e-9
        ):
            raise ConfigError(
                f"benchmark winner violated a constraint at step {t}; "
                "certification is inconsistent"
            )


def regret_curve(config: RunConfig, T_grid: list[int], grid_step: float = 0.02) -> RegretReport:
    """Average regret of the online algorithm across a horizon grid.

    Each horizon gets a fresh run under the config's disturbance stream;
    the benchmark sees exactly the realized disturbances and costs.
    """
    if sorted(T_grid) != list(T_grid):
        raise ConfigError("T_grid must be ascending")
    report = RegretReport(grid_step=grid_step)
    for T in T_grid:
        trace = execute(config, T=T)
        w_log = trace.w
        results, _, _, n_safe = best_safe_linear(config, w_log, grid_step)
        K_star, bench_cost = results[T]
        report.add(T, trace.total_cost, K_star, bench_cost, n_safe)
    return report

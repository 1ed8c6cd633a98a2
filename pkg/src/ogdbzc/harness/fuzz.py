"""Safety fuzzing: many seeds, every disturbance regime, zero tolerance.

A single state/input violation or iterate-membership failure fails the
suite with the offending seed and step. The summary reports worst-case
minimum distances to each constraint boundary across all runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import SafetyViolationError
from .config import RunConfig
from .runner import execute
from .streams import STREAM_VARIANTS, make_stream


@dataclass
class FuzzSummary:
    runs: int = 0
    total_steps: int = 0
    violations: int = 0
    member_failures: int = 0
    min_state_margin: float = np.inf
    min_input_margin: float = np.inf
    max_state_norm: float = 0.0
    max_input_norm: float = 0.0
    max_grad_norm: float = 0.0
    per_variant: dict = field(default_factory=dict)

    def describe(self) -> str:
        lines = [
            f"runs={self.runs} steps={self.total_steps} "
            f"violations={self.violations} member_failures={self.member_failures}",
            f"worst min distance to state boundary: {self.min_state_margin:.6g}",
            f"worst min distance to input boundary: {self.min_input_margin:.6g}",
        ]
        for v, d in sorted(self.per_variant.items()):
            lines.append(
                f"  {v}: runs={d['runs']} min_state={d['min_state']:.6g} "
                f"min_input={d['min_input']:.6g}"
            )
        return "\n".join(lines)


def safety_fuzz(
    config: RunConfig,
    n_seeds: int,
    variants: tuple = STREAM_VARIANTS,
    T: int | None = None,
) -> FuzzSummary:
    """Run n_seeds independent runs per disturbance variant; assert zero
    violations and zero membership failures."""
    summary = FuzzSummary()
    T = config.T if T is None else T
    for variant in variants:
        pv = {"runs": 0, "min_state": np.inf, "min_input": np.inf}
        for seed in range(n_seeds):
            stream = make_stream(
                variant,
                config.sys.n,
                config.sys.w_bar,
                seed=seed,
                vector=np.full(config.sys.n, config.sys.w_bar),
                period=max(1, T // 8),
                cost_model=config.cost,
            )
            try:
                trace = execute(config, T=T, seed=seed, stream=stream)
            except SafetyViolationError as e:
                raise SafetyViolationError(
                    f"fuzz violation under variant={variant} seed={seed}: {e}"
                ) from e
            summary.runs += 1
            summary.total_steps += len(trace.t)
            summary.violations += int(np.sum(~(trace.safe_x & trace.safe_u)))
            summary.member_failures += int(np.sum(~trace.member_ok))
            summary.max_state_norm = max(
                summary.max_state_norm, float(np.max(np.linalg.norm(trace.x, axis=1)))
            )
            summary.max_input_norm = max(
                summary.max_input_norm, float(np.max(np.linalg.norm(trace.u, axis=1)))
            )
            summary.max_grad_norm = max(summary.max_grad_norm, float(np.max(trace.grad_norm)))
            sm = min(config.spec.state_set.boundary_margin(x) for x in trace.x)
            im = min(config.spec.input_set.boundary_margin(u) for u in trace.u)
            summary.min_state_margin = min(summary.min_state_margin, sm)
            summary.min_input_margin = min(summary.min_input_margin, im)
            pv["runs"] += 1
            pv["min_state"] = min(pv["min_state"], sm)
            pv["min_input"] = min(pv["min_input"], im)
        summary.per_variant[variant] = pv
    if summary.violations or summary.member_failures:
        raise SafetyViolationError(
            f"fuzz recorded {summary.violations} violations and "
            f"{summary.member_failures} membership failures"
        )
    return summary

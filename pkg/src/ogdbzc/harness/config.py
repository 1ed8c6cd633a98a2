"""Run configuration: JSON schema, validation, and the bundled 2-D setup.

Unknown keys are rejected so typos fail loudly. Convex sets travel as
tagged records: {"type": "box" | "l2ball" | "polytope", ...}.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from ..geometry import Box, ConvexSet, L2Ball, Polytope
from ..lti import LtiSystem, SafetySpec
from ..ogd_bzc import CostModel, QuadraticCost, Schedule, SmoothedHingeCost

_TOP_KEYS = {"system", "safety", "controller", "cost", "params", "run", "disturbance", "output"}
_SYSTEM_KEYS = {"A", "B", "w_bar"}
_SAFETY_KEYS = {"state", "input"}
_CONTROLLER_KEYS = {"K", "K_ss"}
_PARAMS_KEYS = {"schedule", "H", "eta", "epsilon", "log_base", "cap_epsilon_to_seed"}
_RUN_KEYS = {"T", "seed"}
_DIST_KEYS = {"variant", "vector", "period", "seed"}
_OUTPUT_KEYS = {"dir"}
_SET_KEYS = {
    "box": {"type", "lower", "upper"},
    "l2ball": {"type", "center", "radius"},
    "polytope": {"type", "rows", "offsets"},
}
_COST_KEYS = {
    "quadratic": {"type", "Q", "R"},
    "smoothed_hinge": {"type", "a_x", "a_u", "offset", "smoothing"},
}


def _check_keys(d: dict, allowed: set, where: str) -> None:
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)} in {where}")


def set_from_record(rec: dict) -> ConvexSet:
    if not isinstance(rec, dict) or "type" not in rec:
        raise ConfigError("set record must be a dict with a 'type' tag")
    kind = rec["type"]
    if kind not in _SET_KEYS:
        raise ConfigError(f"unknown set type {kind!r}")
    _check_keys(rec, _SET_KEYS[kind], f"{kind} set record")
    try:
        if kind == "box":
            return Box(np.asarray(rec["lower"], float), np.asarray(rec["upper"], float))
        if kind == "l2ball":
            return L2Ball(np.asarray(rec["center"], float), float(rec["radius"]))
        return Polytope(np.asarray(rec["rows"], float), np.asarray(rec["offsets"], float))
    except KeyError as e:
        raise ConfigError(f"missing field {e} in {kind} set record") from None


def set_to_record(s: ConvexSet) -> dict:
    if isinstance(s, Box):
        return {"type": "box", "lower": s.lower.tolist(), "upper": s.upper.tolist()}
    if isinstance(s, L2Ball):
        return {"type": "l2ball", "center": s.center.tolist(), "radius": s.radius}
    if isinstance(s, Polytope):
        return {"type": "polytope", "rows": s.rows.tolist(), "offsets": s.offsets.tolist()}
    raise ConfigError(f"{type(s).__name__} has no config representation")


def cost_from_record(rec: dict) -> CostModel:
    kind = rec.get("type", "quadratic")
    if kind not in _COST_KEYS:
        raise ConfigError(f"unknown cost type {kind!r}")
    _check_keys(rec, _COST_KEYS[kind], f"{kind} cost record")
    if kind == "quadratic":
        return QuadraticCost(rec.get("Q"), rec.get("R"))
    return SmoothedHingeCost(
        rec["a_x"], rec["a_u"], rec.get("offset", 0.0), rec.get("smoothing", 0.5)
    )


@dataclass
class RunConfig:
    """Validated run description; everything a run or benchmark needs."""

    sys: LtiSystem
    spec: SafetySpec
    K: np.ndarray
    K_ss: np.ndarray
    cost: CostModel
    schedule: Schedule
    T: int
    seed: int
    disturbance: dict
    H_override: int | None = None
    eta_override: float | None = None
    epsilon_override: float | None = None
    log_base: float = math.e
    cap_epsilon_to_seed: bool = True
    out_dir: str = "out"
    raw: dict = field(default_factory=dict)


def load_config(path: str) -> RunConfig:
    try:
        with open(path) as f:
            raw = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    return parse_config(raw)


def parse_config(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be an object")
    _check_keys(raw, _TOP_KEYS, "config root")
    for key in ("system", "safety", "controller", "run", "disturbance"):
        if key not in raw:
            raise ConfigError(f"config is missing the '{key}' section")

    sysd = raw["system"]
    _check_keys(sysd, _SYSTEM_KEYS, "system")
    try:
        sys = LtiSystem(np.asarray(sysd["A"], float), np.asarray(sysd["B"], float),
                        float(sysd["w_bar"]))
    except Exception as e:
        raise ConfigError(f"bad system section: {e}") from None

    safd = raw["safety"]
    _check_keys(safd, _SAFETY_KEYS, "safety")
    try:
        spec = SafetySpec(set_from_record(safd["state"]), set_from_record(safd["input"]))
    except ConfigError:
        raise
    except Exception as e:
        raise ConfigError(f"bad safety section: {e}") from None
    if spec.state_set.dim != sys.n or spec.input_set.dim != sys.m:
        raise ConfigError("safety set dimensions do not match the system")

    ctld = raw["controller"]
    _check_keys(ctld, _CONTROLLER_KEYS, "controller")
    K = np.atleast_2d(np.asarray(ctld["K"], float))
    K_ss = np.atleast_2d(np.asarray(ctld.get("K_ss", ctld["K"]), float))
    if K.shape != (sys.m, sys.n) or K_ss.shape != (sys.m, sys.n):
        raise ConfigError(f"controller gains must be {sys.m} x {sys.n}")

    cost = cost_from_record(raw.get("cost", {"type": "quadratic"}))

    pard = raw.get("params", {})
    _check_keys(pard, _PARAMS_KEYS, "params")
    sched_name = pard.get("schedule", "experiment")
    try:
        schedule = Schedule(sched_name)
    except ValueError:
        raise ConfigError(f"schedule must be one of theorem|experiment|manual, got {sched_name!r}")

    rund = raw["run"]
    _check_keys(rund, _RUN_KEYS, "run")
    T = int(rund["T"])
    if T < 1:
        raise ConfigError("run.T must be at least 1")
    seed = int(rund.get("seed", 0))

    dstd = dict(raw["disturbance"])
    _check_keys(dstd, _DIST_KEYS, "disturbance")
    if dstd.get("variant") not in ("iid_uniform", "constant", "sign_flip", "adaptive"):
        raise ConfigError(f"unknown disturbance variant {dstd.get('variant')!r}")

    outd = raw.get("output", {})
    _check_keys(outd, _OUTPUT_KEYS, "output")

    return RunConfig(
        sys=sys,
        spec=spec,
        K=K,
        K_ss=K_ss,
        cost=cost,
        schedule=schedule,
        T=T,
        seed=seed,
        disturbance=dstd,
        H_override=pard.get("H"),
        eta_override=pard.get("eta"),
        epsilon_override=pard.get("epsilon"),
        log_base=float(pard.get("log_base", math.e)),
        cap_epsilon_to_seed=bool(pard.get("cap_epsilon_to_seed", True)),
        out_dir=outd.get("dir", "out"),
        raw=raw,
    )


def default_raw_config(T: int = 200, seed: int = 0, variant: str = "iid_uniform") -> dict:
    """The 2-D benchmark setup: marginally stable plant, unit-ball safety
    sets, disturbance bound 0.3, quadratic cost.

    The base gain K leaves worst-case disturbance amplification too large
    to be strictly safe on its own; the deadbeat gain K_ss is strictly
    safe with margin about 0.178 and seeds the safe policy set.
    """
    return {
        "system": {"A": [[1.0, 1.0], [0.0, 0.5]], "B": [[1.0], [1.0]], "w_bar": 0.3},
        "safety": {
            "state": {"type": "l2ball", "center": [0.0, 0.0], "radius": 1.0},
            "input": {"type": "l2ball", "center": [0.0], "radius": 1.0},
        },
        "controller": {"K": [[0.5, 0.0]], "K_ss": [[2.0 / 3.0, 5.0 / 6.0]]},
        "cost": {"type": "quadratic"},
        "params": {"schedule": "experiment", "cap_epsilon_to_seed": True},
        "run": {"T": T, "seed": seed},
        "disturbance": {"variant": variant, "seed": seed},
        "output": {"dir": "out"},
    }


def default_config(T: int = 200, seed: int = 0, variant: str = "iid_uniform") -> RunConfig:
    return parse_config(default_raw_config(T, seed, variant))

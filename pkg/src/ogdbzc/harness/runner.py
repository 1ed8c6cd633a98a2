"""Glue from a validated config to an executed run.

Certifies both gains, derives the strict-safety margin of the reference
policy, selects schedule parameters, optionally caps the buffer at the
largest seed-feasible value, and drives the online loop.
"""

from __future__ import annotations

import dataclasses
import json

import numpy as np

from ..errors import SeedInfeasibleError
from ..lti import certify_linear_policy_safety, certify_strong_stability
from ..ogd_bzc import (
    AlgorithmParams,
    RunTrace,
    Schedule,
    adjust_params,
    constant_cost_stream,
    run,
    select_parameters,
)
from ..safe_set import max_feasible_epsilon
from .config import RunConfig
from .streams import make_stream

# The buffer is capped at a fraction of the largest seed-feasible value:
# at the cap itself the safe policy set collapses onto the lifted seed and
# gradient steps cannot move, while far below it the buffer stops covering
# the truncation and drift errors. Half the cap leaves the seed interior
# with slack comparable to the buffer itself.
SEED_CAP_FACTOR = 0.5
TAIL_BUDGET_FACTOR = 0.5  # cap share the truncation tail may consume
MEMORY_SEARCH_SPAN = 60

_PREP_CACHE: dict = {}


def _seed_feasible_memory(config: RunConfig, cert, kss_cert, H_start: int):
    """Smallest memory (from H_start up) whose seed-feasible buffer clears
    the truncation tail with headroom.

    The fixed-weight response drops the free-response chain beyond the
    memory window, so short memories inflate the certified radii of any
    lifted policy; the buffer must dominate kappa^2 (1-gamma)^H with room
    to spare for the slow-motion drift. Falls back to the best cap found.
    """
    k2 = cert.kappa**2
    best = None
    for H in range(max(H_start, 1), max(H_start, 1) + MEMORY_SEARCH_SPAN + 1):
        cap = max_feasible_epsilon(config.sys, cert, config.spec, H, kss_cert)
        if cap is None:
            continue
        tail = k2 * (1.0 - cert.gamma) ** H
        if best is None or cap - tail > best[2]:
            best = (H, cap, cap - tail)
        if tail <= TAIL_BUDGET_FACTOR * cap:
            return H, cap
    if best is None:
        raise SeedInfeasibleError(
            "lifted reference policy is infeasible at every searched memory; "
            "check the reference gain against the safety sets"
        )
    return best[0], best[1]


def prepare_params(config: RunConfig, T: int | None = None):
    """Certificates, margin and schedule parameters for a config.

    Returns (cert, kss_cert, eps_star, params). When the config asks for
    seed capping, the memory is raised to the feasibility floor and the
    buffer capped at the largest seed-feasible value.
    """
    T = config.T if T is None else T
    key = (id(config), T)
    if key in _PREP_CACHE:
        return _PREP_CACHE[key]
    cert = certify_strong_stability(config.sys, config.K)
    kss_cert = certify_strong_stability(config.sys, config.K_ss)
    eps_star = certify_linear_policy_safety(config.sys, kss_cert, config.spec)
    if eps_star is None or eps_star <= 0:
        raise SeedInfeasibleError(
            "reference policy K_ss is not certified strictly safe; "
            "no feasible seed exists for this configuration"
        )
    params = select_parameters(
        config.sys,
        cert,
        config.cost,
        eps_star,
        T,
        config.schedule,
        H=config.H_override,
        eta=config.eta_override,
        epsilon=config.epsilon_override,
        log_base=config.log_base,
    )
    if config.cap_epsilon_to_seed and config.schedule is not Schedule.THEOREM:
        H_used, cap = _seed_feasible_memory(config, cert, kss_cert, params.H)
        eps_used = min(params.epsilon, SEED_CAP_FACTOR * cap)
        if H_used != params.H or eps_used != params.epsilon:
            note = (
                f"memory/buffer adjusted for seed feasibility: H {params.H} -> {H_used}, "
                f"buffer {params.epsilon:.6g} -> {eps_used:.6g} (cap {cap:.6g})"
            )
            params = adjust_params(
                config.sys, cert, config.cost, params, H_used, eps_used, note
            )
    out = (cert, kss_cert, eps_star, params)
    _PREP_CACHE[key] = out
    return out


def execute(
    config: RunConfig,
    T: int | None = None,
    seed: int | None = None,
    stream=None,
    check_diagnostics: bool = True,
) -> RunTrace:
    """Run the algorithm as described by the config and return the trace."""
    T = config.T if T is None else T
    seed = config.seed if seed is None else seed
    cert, kss_cert, eps_star, params = prepare_params(config, T)
    if stream is None:
        d = config.disturbance
        stream = make_stream(
            d["variant"],
            config.sys.n,
            config.sys.w_bar,
            seed=int(d.get("seed", seed)),
            vector=d.get("vector"),
            period=int(d.get("period", 1)),
            cost_model=config.cost,
        )
    header = {
        "config": json.dumps(config.raw, sort_keys=True),
        "seed": seed,
        "T": T,
        "eps_star": eps_star,
        "params": params.describe(),
    }
    if params.warnings:
        header["warnings"] = "; ".join(params.warnings)
    return run(
        config.sys,
        cert,
        config.spec,
        constant_cost_stream(config.cost),
        stream,
        params,
        kss_cert,
        T,
        check_diagnostics=check_diagnostics,
        diagnostic_growth=config.cost,
        header=header,
    )


def simulate_linear(config: RunConfig, K, w_log: np.ndarray):
    """Closed-loop trajectory of u = -K x on a recorded disturbance log."""
    K = np.atleast_2d(np.asarray(K, float))
    T = w_log.shape[0] - 1
    n, m = config.sys.n, config.sys.m
    xs = np.zeros((T + 1, n))
    us = np.zeros((T + 1, m))
    costs = np.zeros(T + 1)
    x = np.zeros(n)
    for t in range(T + 1):
        u = -K @ x
        xs[t] = x
        us[t] = u
        costs[t] = config.cost.evaluate(x, u)
        x = config.sys.A @ x + config.sys.B @ u + w_log[t]
    return xs, us, costs

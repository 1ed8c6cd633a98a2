"""Safe online nonstochastic control with buffer-zone convex constraints.

Library layout:
  geometry  -- convex sets, shrinkage/expansion, support functions
  lti       -- system model, strong-stability certificates, policy safety
  dac       -- disturbance-action controllers and their responses
  safe_set  -- the certified safe policy set, membership and projection
  ogd_bzc   -- parameter schedules, gradients, the online run loop
  harness   -- streams, regret benchmark, fuzzing, reproduction, CLI
"""

from . import dac, errors, geometry, harness, lti, ogd_bzc, safe_set
from .dac import DacWeights, DisturbanceHistory, dac_from_linear, project_into_M
from .geometry import Box, L2Ball, Norm, Polytope, ShrunkL2Ball, expand, shrink
from .lti import (
    LtiSystem,
    SafetySpec,
    StabilityCertificate,
    certify_linear_policy_safety,
    certify_strong_stability,
    recover_disturbance,
    step,
)
from .ogd_bzc import (
    AlgorithmParams,
    CostModel,
    QuadraticCost,
    RunTrace,
    Schedule,
    SmoothedHingeCost,
    approx_cost_gradient,
    run,
    select_parameters,
    theoretical_bounds,
)
from .safe_set import SafePolicySet, feasible_seed, max_feasible_epsilon

__version__ = "0.1.0"

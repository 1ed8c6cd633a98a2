"""Projected online gradient descent over safe controller weights.

Each step applies the current disturbance-action weights, observes the
next state, recovers the disturbance, takes a gradient step on the
fixed-weight approximate cost, and projects back onto the safe policy
set. Parameter schedules tie the buffer size, memory and step size to
the certified margins consumed from the reference policy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .dac import (
    DacWeights,
    DisturbanceHistory,
    ResponseBuilder,
    control_input,
    surrogate,
)
from .errors import (
    ConfigError,
    DiagnosticBoundError,
    ParameterWindowError,
    ProtocolError,
    SafetyViolationError,
)
from .lti import LtiSystem, SafetySpec, StabilityCertificate, advance, recover_disturbance
from .safe_set import SafePolicySet, feasible_seed

SAFETY_TOL = 1e-9


# -- cost models ------------------------------------------------------


class CostModel:
    """Convex differentiable stage cost with a growth certificate.

    growth_constant(D) returns G such that |c|, ||grad_x c||, ||grad_u c||
    are bounded by G * D whenever ||x||, ||u|| <= D.
    """

    def evaluate(self, x, u) -> float:
        raise NotImplementedError

    def gradient_x(self, x, u) -> np.ndarray:
        raise NotImplementedError

    def gradient_u(self, x, u) -> np.ndarray:
        raise NotImplementedError

    def growth_constant(self, D: float) -> float:
        raise NotImplementedError


class QuadraticCost(CostModel):
    """c(x, u) = x' Q x + u' R u, identity weights by default."""

    def __init__(self, Q=None, R=None):
        self.Q = None if Q is None else np.asarray(Q, dtype=float)
        self.R = None if R is None else np.asarray(R, dtype=float)

    def evaluate(self, x, u) -> float:
        x = np.asarray(x, float)
        u = np.asarray(u, float)
        qx = x @ x if self.Q is None else x @ self.Q @ x
        ru = u @ u if self.R is None else u @ self.R @ u
        return float(qx + ru)

    def gradient_x(self, x, u) -> np.ndarray:
        x = np.asarray(x, float)
        return 2.0 * x if self.Q is None else 2.0 * (self.Q @ x)

    def gradient_u(self, x, u) -> np.ndarray:
        u = np.asarray(u, float)
        return 2.0 * u if self.R is None else 2.0 * (self.R @ u)

    def growth_constant(self, D: float) -> float:
        lq = 1.0 if self.Q is None else float(np.linalg.norm(self.Q, 2))
        lr = 1.0 if self.R is None else float(np.linalg.norm(self.R, 2))
        return max((lq + lr) * D, 2.0 * lq, 2.0 * lr)


class SmoothedHingeCost(CostModel):
    """Huber-smoothed hinge on an affine margin: convex and C^1.

    c = phi(a_x' x + a_u' u - offset) with phi(s) = 0 for s <= 0,
    s^2 / (2 delta) on (0, delta], and s - delta/2 beyond.
    """

    def __init__(self, a_x, a_u, offset: float = 0.0, smoothing: float = 0.5):
        self.a_x = np.asarray(a_x, dtype=float)
        self.a_u = np.asarray(a_u, dtype=float)
        self.offset = float(offset)
        if smoothing <= 0:
            raise ConfigError("smoothing width must be positive")
        self.smoothing = float(smoothing)

    def _margin(self, x, u) -> float:
        return float(self.a_x @ np.asarray(x, float) + self.a_u @ np.asarray(u, float) - self.offset)

    def _phi(self, s: float) -> float:
        if s <= 0:
            return 0.0
        if s <= self.smoothing:
            return s * s / (2.0 * self.smoothing)
        return s - self.smoothing / 2.0

    def _dphi(self, s: float) -> float:
        return float(np.clip(s / self.smoothing, 0.0, 1.0))

    def evaluate(self, x, u) -> float:
        return self._phi(self._margin(x, u))

    def gradient_x(self, x, u) -> np.ndarray:
        return self._dphi(self._margin(x, u)) * self.a_x

    def gradient_u(self, x, u) -> np.ndarray:
        return self._dphi(self._margin(x, u)) * self.a_u

    def growth_constant(self, D: float) -> float:
        na, nb = np.linalg.norm(self.a_x), np.linalg.norm(self.a_u)
        value_bound = (na + nb) + abs(self.offset) / max(D, 1e-12)
        grad_bound = max(na, nb) / max(D, 1e-12)
        return float(max(value_bound, grad_bound))


class CostStream:
    """Online cost reveal protocol: request-control precedes reveal-cost.

    The model for step t becomes visible only after commit_control(t),
    which makes lookahead a programming error rather than a convention.
    """

    def __init__(self, model_for_step):
        self._model_for_step = model_for_step
        self._committed = -1
        self._revealed = -1

    def commit_control(self, t: int) -> None:
        if t != self._committed + 1:
            raise ProtocolError(f"control for step {t} committed out of order")
        self._committed = t

    def reveal(self, t: int) -> CostModel:
        if t > self._committed:
            raise ProtocolError(f"cost for step {t} requested before control was committed")
        if t != self._revealed + 1:
            raise ProtocolError(f"cost for step {t} revealed out of order")
        self._revealed = t
        return self._model_for_step(t)


def constant_cost_stream(model: CostModel) -> CostStream:
    return CostStream(lambda t: model)


# -- parameter selection ----------------------------------------------


class Schedule(Enum):
    THEOREM = "theorem"
    EXPERIMENT = "experiment"
    MANUAL = "manual"


@dataclass(frozen=True)
class AlgorithmParams:
    schedule: Schedule
    H: int
    eta: float
    epsilon: float
    eps1: float
    eps2: float
    eps3: float
    eps_star: float
    c1: float
    c2: float
    c3: float
    warnings: tuple = ()

    def describe(self) -> str:
        return (
            f"schedule={self.schedule.value} H={self.H} eta={self.eta:.6g} "
            f"epsilon={self.epsilon:.6g} eps1={self.eps1:.3g} eps2={self.eps2:.3g} "
            f"eps3={self.eps3:.3g} eps_star={self.eps_star:.6g}"
        )


def margin_constants(sys: LtiSystem, cert: StabilityCertificate, G: float):
    """The three margin constants in terms of the certificate.

    c3 keeps the geometric-sum factor 1/gamma from the lifting error
    derivation so the bound stays sound when kappa * gamma < 1.
    """
    k, g, kb = cert.kappa, cert.gamma, cert.kappa_B
    a = cert.a_default
    w = sys.w_bar
    c1 = w * k**3 * (2 * k**3 + 2 * a * k**3 * kb + a) / g
    c2 = 4 * G * w**3 * (k**3 + 2 * a * k**3 * kb) * (1 + k) * k**5 * kb**2 / g**4
    c3 = 2 * w * k**5 / g
    return c1, c2, c3


def _margins(c1, c2, c3, H, eta, sys, gamma):
    decay = (1.0 - gamma) ** H
    eps1 = c1 * H * decay
    eps2 = c2 * math.sqrt(sys.m * sys.n**3) * eta * H**2
    eps3 = c3 * math.sqrt(sys.n) * decay
    return eps1, eps2, eps3


def _resolve_growth(G, b_hint: float) -> float:
    if isinstance(G, CostModel):
        return G.growth_constant(b_hint)
    return float(G)


def select_parameters(
    sys: LtiSystem,
    cert: StabilityCertificate,
    G,
    eps_star: float,
    T: int,
    schedule: Schedule,
    H: int | None = None,
    eta: float | None = None,
    epsilon: float | None = None,
    log_base: float = math.e,
) -> AlgorithmParams:
    """Pick (H, eta, epsilon) for a horizon T under the named schedule.

    The theorem schedule enforces the admissible buffer window and fails
    loudly when it is empty; the experiment and manual schedules proceed
    with the window check demoted to warnings. G may be a scalar growth
    constant or a CostModel, in which case the constant is taken over the
    ball the state/input bounds define.
    """
    if eps_star <= 0:
        raise ConfigError("eps_star must be positive")
    if T < 1:
        raise ConfigError("horizon T must be at least 1")
    kappa, gamma = cert.kappa, cert.gamma
    one_minus = 1.0 - gamma
    log_decay_inv = math.inf if one_minus == 0.0 else math.log(1.0 / one_minus)
    h_min = 1 if not math.isfinite(log_decay_inv) else max(
        1, math.ceil(math.log(2.0 * kappa**2) / log_decay_inv)
    )
    warnings: list[str] = []

    if schedule is Schedule.THEOREM:
        # constants need G over the eventual ball; two-pass with the H formula
        c1_0, _, c3_0 = margin_constants(sys, cert, 1.0)
        if math.isfinite(log_decay_inv):
            num = (8.0 * c1_0 * T + 4.0 * c3_0 * math.sqrt(sys.n)) / eps_star
            H_sel = max(h_min, math.ceil(math.log(max(num, 2.0)) / log_decay_inv))
        else:
            H_sel = h_min
        eta_sel = 1.0 / (sys.n * math.sqrt(T * H_sel**3))
        G_val = _resolve_growth(G, _state_bound_hint(sys, cert, H_sel))
        c1, c2, c3 = margin_constants(sys, cert, G_val)
        eps1, eps2, eps3 = _margins(c1, c2, c3, H_sel, eta_sel, sys, gamma)
        eps_sel = eps1 + eps2
        upper = eps_star - eps1 - eps3
        if eps_sel > upper:
            raise ParameterWindowError(
                "empty buffer window under the theorem schedule: "
                f"eps1+eps2 = {eps_sel:.6g} exceeds eps_star - eps1 - eps3 = {upper:.6g} "
                f"(H={H_sel}, eta={eta_sel:.3g}, eps1={eps1:.3g}, eps2={eps2:.3g}, eps3={eps3:.3g})"
            )
    elif schedule is Schedule.EXPERIMENT:
        logT = math.log(T) / math.log(log_base)
        if logT <= 0:
            raise ConfigError("experiment schedule needs T with log(T) > 0")
        H_sel = max(1, math.floor(logT))
        eps_sel = logT / math.sqrt(T)
        eta_sel = 1.0 / (math.sqrt(T) * logT)
        G_val = _resolve_growth(G, _state_bound_hint(sys, cert, H_sel))
        c1, c2, c3 = margin_constants(sys, cert, G_val)
        eps1, eps2, eps3 = _margins(c1, c2, c3, H_sel, eta_sel, sys, gamma)
    else:
        if H is None or eta is None or epsilon is None:
            raise ConfigError("manual schedule requires explicit H, eta and epsilon")
        H_sel, eta_sel, eps_sel = int(H), float(eta), float(epsilon)
        G_val = _resolve_growth(G, _state_bound_hint(sys, cert, H_sel))
        c1, c2, c3 = margin_constants(sys, cert, G_val)
        eps1, eps2, eps3 = _margins(c1, c2, c3, H_sel, eta_sel, sys, gamma)

    if schedule is not Schedule.THEOREM:
        if H_sel < h_min:
            warnings.append(f"H={H_sel} is below the analysis floor {h_min}; heuristic run")
        if eps_sel < eps1 + eps2:
            warnings.append(
                f"buffer {eps_sel:.4g} is below eps1+eps2 = {eps1 + eps2:.4g}; "
                "the safety argument does not cover this run"
            )
        if eps_sel > eps_star - eps1 - eps3:
            warnings.append(
                f"buffer {eps_sel:.4g} exceeds eps_star - eps1 - eps3 = "
                f"{eps_star - eps1 - eps3:.4g}; seed feasibility is not guaranteed"
            )
    if schedule is Schedule.THEOREM and H is not None:
        warnings.append("explicit H ignored under the theorem schedule")

    return AlgorithmParams(
        schedule=schedule,
        H=H_sel,
        eta=eta_sel,
        epsilon=eps_sel,
        eps1=eps1,
        eps2=eps2,
        eps3=eps3,
        eps_star=eps_star,
        c1=c1,
        c2=c2,
        c3=c3,
        warnings=tuple(warnings),
    )


def adjust_params(
    sys: LtiSystem,
    cert: StabilityCertificate,
    G,
    params: AlgorithmParams,
    H: int,
    epsilon: float,
    note: str | None = None,
) -> AlgorithmParams:
    """Rebuild a parameter set around an adjusted memory and buffer.

    Keeps the schedule tag and step size; margins and constants are
    recomputed for the new memory.
    """
    G_val = _resolve_growth(G, _state_bound_hint(sys, cert, H))
    c1, c2, c3 = margin_constants(sys, cert, G_val)
    eps1, eps2, eps3 = _margins(c1, c2, c3, H, params.eta, sys, cert.gamma)
    warnings = params.warnings + ((note,) if note else ())
    return AlgorithmParams(
        schedule=params.schedule,
        H=int(H),
        eta=params.eta,
        epsilon=float(epsilon),
        eps1=eps1,
        eps2=eps2,
        eps3=eps3,
        eps_star=params.eps_star,
        c1=c1,
        c2=c2,
        c3=c3,
        warnings=warnings,
    )


def _state_bound_hint(sys: LtiSystem, cert: StabilityCertificate, H: int) -> float:
    """max(b_x, b_u) when defined, else a crude fallback; feeds G(D)."""
    k, g, kb = cert.kappa, cert.gamma, cert.kappa_B
    a = cert.a_default
    contraction = 1.0 - k**2 * (1.0 - g) ** H
    if contraction <= 0:
        contraction = g  # H below the analysis floor; keep the hint finite
    b_x = sys.w_bar * math.sqrt(sys.n) * (k**2 + a * k**2 * kb * H) / (contraction * g)
    b_u = k * b_x + sys.w_bar * math.sqrt(max(sys.m, sys.n)) * a / g
    return max(b_x, b_u, 1.0)


@dataclass(frozen=True)
class DiagnosticBounds:
    b_x: float
    b_u: float
    G_f: float
    delta: float


def theoretical_bounds(
    params: AlgorithmParams, cert: StabilityCertificate, sys: LtiSystem, G
) -> DiagnosticBounds:
    """Closed-form ceilings for state, input, gradient and weight diameter.

    Where the source formulas disagree on a dimension factor the larger
    one is used, so the run-loop assertions stay sound.
    """
    k, g, kb = cert.kappa, cert.gamma, cert.kappa_B
    a = cert.a_default
    H = params.H
    contraction = 1.0 - k**2 * (1.0 - g) ** H
    if contraction <= 0:
        raise ParameterWindowError(
            f"kappa^2 (1-gamma)^H = {k**2 * (1.0 - g) ** H:.4g} >= 1; diagnostic bounds undefined"
        )
    w = sys.w_bar
    n, m = sys.n, sys.m
    b_x = w * math.sqrt(n) * (k**2 + a * k**2 * kb * H) / (contraction * g)
    b_u = k * b_x + w * math.sqrt(max(m, n)) * a / g
    a_t = 2.0 * a
    b_tilde = 2 * w * math.sqrt(n) * (k**3 + a_t * k**3 * kb * H) / g + w * math.sqrt(m * n) * a_t / g
    G_val = _resolve_growth(G, b_tilde)
    G_f = 2.0 * G_val * b_tilde * math.sqrt(n) * w * (1 + k) * k**2 * kb * math.sqrt(H) / g
    delta = 2.0 * math.sqrt(m) * a / g
    return DiagnosticBounds(b_x=b_x, b_u=b_u, G_f=G_f, delta=delta)


# -- gradient ----------------------------------------------------------


def _gradient_and_surrogate(
    cost: CostModel, builder: ResponseBuilder, weights: DacWeights, hist: DisturbanceHistory
):
    resp = builder.build(weights)
    x_tilde, u_tilde = surrogate(resp, hist)
    g_x = cost.gradient_x(x_tilde, u_tilde)
    g_u = cost.gradient_u(x_tilde, u_tilde)
    H = builder.H
    W = hist.as_array()
    # V[i] = (A_K^{i} B)' (g_x - K' g_u); block j collects w_{t-i-j} terms
    V = np.einsum("inm,n->im", builder.P, g_x - builder.cert.K.T @ g_u)
    idx = np.arange(H)[:, None] + np.arange(H)[None, :] + 1
    grad = np.einsum("im,ijn->jmn", V, W[idx])
    grad += np.einsum("m,jn->jmn", g_u, W[:H])
    return grad, x_tilde, u_tilde


def approx_cost_gradient(
    cost: CostModel,
    sys: LtiSystem,
    cert: StabilityCertificate,
    weights: DacWeights,
    hist: DisturbanceHistory,
    builder: ResponseBuilder | None = None,
) -> np.ndarray:
    """Analytic gradient of the fixed-weight cost c(x_tilde(M), u_tilde(M))."""
    if builder is None:
        builder = ResponseBuilder(sys, cert, weights.H)
    grad, _, _ = _gradient_and_surrogate(cost, builder, weights, hist)
    return grad


# -- run loop ----------------------------------------------------------


@dataclass
class RunTrace:
    """Per-step record of a full run plus header metadata."""

    header: dict
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    w: np.ndarray
    cost: np.ndarray
    cum_cost: np.ndarray
    member_ok: np.ndarray
    safe_x: np.ndarray
    safe_u: np.ndarray
    step_norm: np.ndarray
    grad_norm: np.ndarray
    final_state: np.ndarray
    final_weights: DacWeights | None = None

    @property
    def total_cost(self) -> float:
        return float(self.cum_cost[-1])

    @property
    def horizon(self) -> int:
        return len(self.t) - 1


class StepContext:
    """What a disturbance source may condition on at decision time."""

    __slots__ = ("t", "x", "u", "weights", "hist", "sys", "cert")

    def __init__(self, t, x, u, weights, hist, sys, cert):
        self.t = t
        self.x = x
        self.u = u
        self.weights = weights
        self.hist = hist
        self.sys = sys
        self.cert = cert


def run(
    sys: LtiSystem,
    cert: StabilityCertificate,
    spec: SafetySpec,
    cost_stream: CostStream,
    disturbance_stream,
    params: AlgorithmParams,
    k_ss_cert: StabilityCertificate,
    T: int,
    check_diagnostics: bool = True,
    diagnostic_growth=None,
    header: dict | None = None,
) -> RunTrace:
    """Execute T+1 online steps from x_0 = 0 and return the full trace.

    The loop observes states only: disturbances are recovered from the
    model, and a recovered disturbance outside the model set aborts the
    run. Every iterate is certified in the safe policy set; state and
    input safety are hard assertions on completion.
    """
    omega = SafePolicySet(sys, cert, spec, params.epsilon, params.H)
    anchor = feasible_seed(omega, k_ss_cert)
    weights = anchor
    builder = omega.builder
    bounds = None
    if check_diagnostics:
        growth = diagnostic_growth if diagnostic_growth is not None else 1.0
        try:
            bounds = theoretical_bounds(params, cert, sys, growth)
        except ParameterWindowError:
            bounds = None  # H below the contraction floor: bounds undefined

    n, m = sys.n, sys.m
    x = np.zeros(n)
    hist = DisturbanceHistory(params.H, n, sys.w_bar)
    rows = T + 1
    tr = RunTrace(
        header=dict(header or {}),
        t=np.arange(rows),
        x=np.zeros((rows, n)),
        u=np.zeros((rows, m)),
        w=np.zeros((rows, n)),
        cost=np.zeros(rows),
        cum_cost=np.zeros(rows),
        member_ok=np.zeros(rows, dtype=bool),
        safe_x=np.zeros(rows, dtype=bool),
        safe_u=np.zeros(rows, dtype=bool),
        step_norm=np.zeros(rows),
        grad_norm=np.zeros(rows),
        final_state=np.zeros(n),
    )
    tr.header.setdefault("params", params.describe())
    cum = 0.0
    for t in range(rows):
        u = control_input(cert, weights, x, hist)
        cost_stream.commit_control(t)
        ctx = StepContext(t, x, u, weights, hist, sys, cert)
        w_env = np.asarray(disturbance_stream.next(ctx), dtype=float)
        x_next = advance(sys, x, u, w_env)
        try:
            w = recover_disturbance(sys, x, u, x_next)
        except Exception:
            tr.final_state = x_next
            raise
        model = cost_stream.reveal(t)
        c = model.evaluate(x, u)
        cum += c

        member_now = omega.member(weights)
        grad, x_tilde, u_tilde = _gradient_and_surrogate(model, builder, weights, hist)
        g_norm = float(np.linalg.norm(grad.ravel()))
        candidate = DacWeights(weights.blocks - params.eta * grad, weights.a)
        # current iterate is member-certified: the tightest feasible anchor
        local_anchor = weights if member_now else anchor
        new_weights = omega.project(candidate, local_anchor)
        s_norm = new_weights.frobenius_distance(weights)

        tr.x[t] = x
        tr.u[t] = u
        tr.w[t] = w_env  # realized disturbance: replaying it is bit-exact
        tr.cost[t] = c
        tr.cum_cost[t] = cum
        tr.member_ok[t] = member_now
        tr.safe_x[t] = spec.state_set.contains(x, SAFETY_TOL)
        tr.safe_u[t] = spec.input_set.contains(u, SAFETY_TOL)
        tr.step_norm[t] = s_norm
        tr.grad_norm[t] = g_norm

        if bounds is not None:
            _assert_diagnostics(tr, t, x, u, x_tilde, u_tilde, g_norm, s_norm, params, bounds)
        if params.eps1 > 0 and np.max(np.abs(x - x_tilde)) > params.eps1:
            raise DiagnosticBoundError(
                f"surrogate gap {np.max(np.abs(x - x_tilde)):.4g} exceeded eps1 = "
                f"{params.eps1:.4g} at step {t}"
            )

        hist.push(w)
        x = x_next
        weights = new_weights

    tr.final_state = x
    tr.final_weights = weights
    _assert_run_safety(tr, spec, x)
    return tr


def _assert_diagnostics(tr, t, x, u, x_tilde, u_tilde, g_norm, s_norm, params, bounds):
    if max(np.linalg.norm(x), np.linalg.norm(x_tilde)) > bounds.b_x:
        raise DiagnosticBoundError(f"state bound b_x = {bounds.b_x:.4g} exceeded at step {t}")
    if max(np.linalg.norm(u), np.linalg.norm(u_tilde)) > bounds.b_u:
        raise DiagnosticBoundError(f"input bound b_u = {bounds.b_u:.4g} exceeded at step {t}")
    if g_norm > bounds.G_f:
        raise DiagnosticBoundError(f"gradient bound G_f = {bounds.G_f:.4g} exceeded at step {t}")
    if s_norm > params.eta * bounds.G_f + 1e-12:
        raise DiagnosticBoundError(f"slow-motion bound eta*G_f exceeded at step {t}")


def _assert_run_safety(tr: RunTrace, spec: SafetySpec, final_state: np.ndarray) -> None:
    bad = np.flatnonzero(~(tr.safe_x & tr.safe_u & tr.member_ok))
    if bad.size:
        t0 = int(bad[0])
        raise SafetyViolationError(
            f"safety assertion failed at step {t0}: safe_x={bool(tr.safe_x[t0])} "
            f"safe_u={bool(tr.safe_u[t0])} member={bool(tr.member_ok[t0])}",
        )
    if not spec.state_set.contains(final_state, SAFETY_TOL):
        raise SafetyViolationError("terminal state left the safety set")

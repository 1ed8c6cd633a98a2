"""Disturbance sources for runs, fuzzing and reproduction.

Every emitted disturbance satisfies ||w||_inf <= w_bar exactly; the
constant, sign-flip and adaptive variants sit on the boundary.
"""

from __future__ import annotations

import itertools

import numpy as np

from ..errors import ConfigError
from ..lti import advance
from ..dac import control_input
from ..ogd_bzc import CostModel, StepContext


class DisturbanceStream:
    """Stateful source of disturbances; next(ctx) may condition on the
    decision-time context but never on the current step's outcome."""

    w_bar: float

    def next(self, ctx: StepContext) -> np.ndarray:
        raise NotImplementedError

    def reset(self) -> None:
        pass


class IidUniform(DisturbanceStream):
    """Coordinatewise uniform on [-w_bar, w_bar]."""

    def __init__(self, w_bar: float, n: int, seed: int):
        self.w_bar = float(w_bar)
        self.n = n
        self.seed = int(seed)
        self.reset()

    def reset(self) -> None:
        self._rng = np.random.default_rng(self.seed)

    def next(self, ctx) -> np.ndarray:
        return self._rng.uniform(-self.w_bar, self.w_bar, size=self.n)


class Constant(DisturbanceStream):
    """Fixed disturbance vector every step."""

    def __init__(self, vector, w_bar: float):
        self.vector = np.asarray(vector, dtype=float)
        self.w_bar = float(w_bar)
        if np.max(np.abs(self.vector)) > self.w_bar:
            raise ConfigError("constant disturbance exceeds w_bar")

    def next(self, ctx) -> np.ndarray:
        return self.vector.copy()


class SignFlip(DisturbanceStream):
    """A seed-drawn extreme pattern in {-w_bar, +w_bar}^n, negated every
    `period` steps."""

    def __init__(self, w_bar: float, n: int, period: int, seed: int):
        if period < 1:
            raise ConfigError("sign-flip period must be at least 1")
        self.w_bar = float(w_bar)
        self.n = n
        self.period = int(period)
        self.seed = int(seed)
        rng = np.random.default_rng(seed)
        self.base = self.w_bar * rng.choice((-1.0, 1.0), size=n)

    def next(self, ctx) -> np.ndarray:
        sign = -1.0 if (ctx.t // self.period) % 2 else 1.0
        return sign * self.base


class Adaptive(DisturbanceStream):
    """Cost-greedy adversary: picks the extreme pattern maximizing the
    predicted next-step cost given the logged weights.

    Prediction rolls the dynamics one step and replays the controller's
    own rule for u_{t+1} with the candidate disturbance in the history.
    """

    def __init__(self, w_bar: float, n: int, cost_model: CostModel):
        self.w_bar = float(w_bar)
        self.n = n
        self.cost_model = cost_model
        self._patterns = self.w_bar * np.array(
            list(itertools.product((-1.0, 1.0), repeat=n))
        )

    def next(self, ctx) -> np.ndarray:
        # x_{t+1} and u_{t+1} are affine in the candidate disturbance, so
        # the shared parts are computed once
        base_next = ctx.sys.A @ ctx.x + ctx.sys.B @ ctx.u
        M = ctx.weights.blocks
        H = M.shape[0]
        tail = np.zeros(M.shape[1])
        if H > 1:
            tail = np.einsum("imn,in->m", M[1:], ctx.hist.as_array()[: H - 1])
        K = ctx.cert.K
        best, best_val = None, -np.inf
        for w in self._patterns:
            x_next = base_next + w
            u_next = -K @ x_next + M[0] @ w + tail
            val = self.cost_model.evaluate(x_next, u_next)
            if val > best_val:
                best_val, best = val, w
        return best.copy()


class Replay(DisturbanceStream):
    """Replays a recorded disturbance sequence bit for bit."""

    def __init__(self, w_log: np.ndarray, w_bar: float):
        self.w_log = np.asarray(w_log, dtype=float)
        self.w_bar = float(w_bar)

    def next(self, ctx) -> np.ndarray:
        return self.w_log[ctx.t].copy()


STREAM_VARIANTS = ("iid_uniform", "constant", "sign_flip", "adaptive")


def make_stream(variant: str, sys_n: int, w_bar: float, *, seed: int = 0,
                vector=None, period: int = 1, cost_model: CostModel | None = None,
                ) -> DisturbanceStream:
    """Factory used by the config loader and the fuzzer."""
    if variant == "iid_uniform":
        return IidUniform(w_bar, sys_n, seed)
    if variant == "constant":
        if vector is None:
            vector = np.full(sys_n, w_bar)
        return Constant(vector, w_bar)
    if variant == "sign_flip":
        return SignFlip(w_bar, sys_n, period, seed)
    if variant == "adaptive":
        if cost_model is None:
            raise ConfigError("adaptive stream needs a cost model")
        return Adaptive(w_bar, sys_n, cost_model)
    raise ConfigError(f"unknown disturbance variant {variant!r}")

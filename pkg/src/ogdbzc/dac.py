"""Disturbance-action controller machinery.

A controller of memory H plays u_t = -K x_t + sum_i M[i] w_{t-i} with the
weight blocks confined to spectral-norm balls of geometrically decaying
radius a (1-gamma)^(i-1). The disturbance-to-state/input response of a
fixed weight runs H steps deep twice over, giving surrogate state and
input as linear images of the last 2H disturbances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatchError,
    DisturbanceBoundError,
    GeometryError,
    LiftOutsideConstraintError,
)
from .lti import LtiSystem, StabilityCertificate

WEIGHT_SET_REL_TOL = 1e-9


@dataclass(frozen=True)
class DacWeights:
    """Weight blocks (H, m, n); immutable. `a` records the decay coefficient
    of the constraint set the weights were built for (default 2 kappa^3)."""

    blocks: np.ndarray
    a: float | None = None

    def __post_init__(self):
        b = np.array(self.blocks, dtype=float)
        if b.ndim != 3:
            raise DimensionMismatchError("blocks must have shape (H, m, n)")
        b.setflags(write=False)
        object.__setattr__(self, "blocks", b)

    @property
    def H(self) -> int:
        return self.blocks.shape[0]

    @property
    def m(self) -> int:
        return self.blocks.shape[1]

    @property
    def n(self) -> int:
        return self.blocks.shape[2]

    @staticmethod
    def zeros(H: int, m: int, n: int, a: float | None = None) -> "DacWeights":
        return DacWeights(np.zeros((H, m, n)), a)

    def spectral_norms(self) -> np.ndarray:
        if self.m == 1 or self.n == 1:
            return np.sqrt(np.einsum("jml,jml->j", self.blocks, self.blocks))
        return np.array([np.linalg.norm(b, 2) for b in self.blocks])

    def frobenius_distance(self, other: "DacWeights") -> float:
        return float(np.linalg.norm((self.blocks - other.blocks).ravel()))

    def to_flat(self) -> np.ndarray:
        """Serialization for trace replay: flat array, header (m, n, H)."""
        return self.blocks.ravel().copy()

    @staticmethod
    def from_flat(flat, m: int, n: int, H: int, a: float | None = None) -> "DacWeights":
        arr = np.asarray(flat, dtype=float).reshape(H, m, n)
        return DacWeights(arr, a)


def weight_radii(H: int, a: float, gamma: float) -> np.ndarray:
    return a * (1.0 - gamma) ** np.arange(H)


def in_weight_set(weights: DacWeights, a: float, gamma: float) -> bool:
    """Membership in the decay constraint set, with projection round-off slack."""
    radii = weight_radii(weights.H, a, gamma)
    return bool(np.all(weights.spectral_norms() <= radii * (1.0 + WEIGHT_SET_REL_TOL)))


def project_into_M(weights: DacWeights, a: float, gamma: float) -> DacWeights:
    """Blockwise Frobenius-nearest point of the spectral-norm balls.

    Singular values are clipped at the block radius; blocks already inside
    are passed through bitwise unchanged.
    """
    radii = weight_radii(weights.H, a, gamma)
    if weights.m == 1:
        # single-row blocks: spectral norm is the Euclidean row norm
        norms = np.sqrt(np.einsum("jml,jml->j", weights.blocks, weights.blocks))
        if np.all(norms <= radii):
            return weights
        scale = np.where(norms > radii, radii / np.maximum(norms, 1e-300), 1.0)
        return DacWeights(
            weights.blocks * scale[:, None, None],
            weights.a if weights.a is not None else a,
        )
    out = []
    changed = False
    for blk, r in zip(weights.blocks, radii):
        nrm = np.linalg.norm(blk, 2)
        if nrm <= r:
            out.append(blk)
            continue
        U, s, Vt = np.linalg.svd(blk, full_matrices=False)
        out.append((U * np.minimum(s, r)) @ Vt)
        changed = True
    if not changed:
        return weights
    return DacWeights(np.array(out), weights.a if weights.a is not None else a)


@dataclass(frozen=True)
class ResponseMatrices:
    """Fixed-weight disturbance-to-state/input response over a 2H window."""

    psi_x: np.ndarray  # (2H, n, n)
    psi_u: np.ndarray  # (2H, m, n)

    @property
    def H(self) -> int:
        return self.psi_x.shape[0] // 2

    @property
    def h_x(self) -> np.ndarray:
        """n x 2Hn horizontal concatenation [psi_x_1 ... psi_x_2H]."""
        two_h, n, _ = self.psi_x.shape
        return self.psi_x.transpose(1, 0, 2).reshape(n, two_h * n)

    @property
    def h_u(self) -> np.ndarray:
        two_h, m, n = self.psi_u.shape
        return self.psi_u.transpose(1, 0, 2).reshape(m, two_h * n)

    def state_radii(self, w_bar: float) -> np.ndarray:
        """Per-coordinate worst case of the state image of the w_bar box."""
        return w_bar * np.abs(self.psi_x).sum(axis=(0, 2))

    def input_radii(self, w_bar: float) -> np.ndarray:
        return w_bar * np.abs(self.psi_u).sum(axis=(0, 2))


class ResponseBuilder:
    """Caches A_K powers (up to 2H), A_K^{i-1} B, and the convolution
    tensor taking weight blocks to response matrices, so each build is a
    single contraction."""

    def __init__(self, sys: LtiSystem, cert: StabilityCertificate, H: int):
        self.sys = sys
        self.cert = cert
        self.H = H
        A_K = sys.A - sys.B @ cert.K
        n = sys.n
        powers = np.empty((2 * H + 1, n, n))
        powers[0] = np.eye(n)
        for k in range(1, 2 * H + 1):
            powers[k] = powers[k - 1] @ A_K
        self.A_K = A_K
        self.powers = powers
        # P[i-1] = A_K^{i-1} B for i = 1..H
        self.P = np.stack([powers[i] @ sys.B for i in range(H)])
        base = np.zeros((2 * H, n, n))
        base[:H] = powers[:H]
        self._base_x = base
        # conv[k, j] = A_K^{k-j-1} B: psi_x[k] = base[k] + sum_j conv[k, j] M[j].
        # Flattened to one GEMM: rows (k, i), columns (j, m), independent in l.
        conv = np.zeros((2 * H, H, n, sys.m))
        for k in range(2 * H):
            for j in range(H):
                i = k - j - 1
                if 0 <= i < H:
                    conv[k, j] = self.P[i]
        self._conv2 = conv.transpose(0, 2, 1, 3).reshape(2 * H * n, H * sys.m)
        self._conv2_T = np.ascontiguousarray(self._conv2.T)
        self.m = sys.m
        self.n = n

    def psi_x(self, weights: DacWeights) -> np.ndarray:
        H, m, n = self.H, self.m, self.n
        prod = self._conv2 @ weights.blocks.reshape(H * m, n)
        return self._base_x + prod.reshape(2 * H, n, n)

    def build(self, weights: DacWeights) -> ResponseMatrices:
        px = self.psi_x(weights)
        pu = -np.matmul(self.cert.K, px)
        pu[: self.H] += weights.blocks
        return ResponseMatrices(psi_x=px, psi_u=pu)

    def adjoint_x(self, lam: np.ndarray) -> np.ndarray:
        """Pull a (2H, n, n) sensitivity on psi_x back to weight blocks."""
        H, m, n = self.H, self.m, self.n
        out = self._conv2_T @ lam.reshape(2 * H * n, n)
        return out.reshape(H, m, n)


def response_matrices(
    sys: LtiSystem,
    cert: StabilityCertificate,
    weights: DacWeights,
    a: float | None = None,
    check: bool = True,
) -> ResponseMatrices:
    """Fixed-weight response; verifies the weights satisfy the decay set."""
    if a is None:
        a = cert.a_default
    if check and not in_weight_set(weights, a, cert.gamma):
        raise GeometryError("weights violate the decay constraint set")
    return ResponseBuilder(sys, cert, weights.H).build(weights)


class DisturbanceHistory:
    """Ring buffer of the last 2H disturbances, most recent first.

    Zero-padded before time zero. Single-writer: owned by one run loop.
    """

    def __init__(self, H: int, n: int, w_bar: float):
        self.depth = 2 * H
        self.w_bar = w_bar
        self._buf = np.zeros((self.depth, n))

    def push(self, w) -> None:
        w = np.asarray(w, dtype=float)
        if np.max(np.abs(w)) > self.w_bar + 1e-9:
            raise DisturbanceBoundError("history push outside the disturbance set")
        self._buf[1:] = self._buf[:-1]
        self._buf[0] = w

    def as_array(self) -> np.ndarray:
        """(2H, n) with row k-1 holding w_{t-k}."""
        return self._buf

    def copy(self) -> "DisturbanceHistory":
        out = DisturbanceHistory(self.depth // 2, self._buf.shape[1], self.w_bar)
        out._buf = self._buf.copy()
        return out


def surrogate(resp: ResponseMatrices, hist: DisturbanceHistory):
    """Surrogate state and input from the last 2H disturbances."""
    W = hist.as_array()
    if W.shape[0] != resp.psi_x.shape[0]:
        raise DimensionMismatchError("history depth must equal 2H")
    x_tilde = np.einsum("kij,kj->i", resp.psi_x, W)
    u_tilde = np.einsum("kij,kj->i", resp.psi_u, W)
    return x_tilde, u_tilde


def control_input(
    cert: StabilityCertificate, weights: DacWeights, x, hist: DisturbanceHistory
) -> np.ndarray:
    """u = -K x + sum_{i=1..H} M[i] w_{t-i}."""
    W = hist.as_array()[: weights.H]
    return -cert.K @ np.asarray(x, float) + np.einsum("imn,in->m", weights.blocks, W)


def dac_from_linear(
    sys: LtiSystem,
    cert: StabilityCertificate,
    K_prime,
    H: int,
    a: float | None = None,
    gamma: float | None = None,
) -> DacWeights:
    """Lift a linear policy K' into weights M[i] = (K - K') (A - B K')^{i-1}.

    The closed loop under the lifted weights replays u = -K' x exactly for
    the first H steps. Raises if the lift leaves the decay constraint set,
    which signals an invalid certificate for K'.
    """
    K_prime = np.atleast_2d(np.asarray(K_prime, dtype=float))
    if a is None:
        a = cert.a_default
    if gamma is None:
        gamma = cert.gamma
    A_Kp = sys.A - sys.B @ K_prime
    diff = cert.K - K_prime
    blocks = np.empty((H, sys.m, sys.n))
    P = np.eye(sys.n)
    for i in range(H):
        blocks[i] = diff @ P
        P = P @ A_Kp
    weights = DacWeights(blocks, a)
    if not in_weight_set(weights, a, gamma):
        radii = weight_radii(H, a, gamma)
        worst = np.max(weights.spectral_norms() / radii)
        raise LiftOutsideConstraintError(
            f"lifted policy violates the decay set (worst ratio {worst:.4g}); "
            "the supplied certificate does not cover K'"
        )
    return weights

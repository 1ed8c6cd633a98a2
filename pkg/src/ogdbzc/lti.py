"""LTI system model, strong-stability certificates, and linear-policy safety.

The closed loop x_{t+1} = (A - BK) x_t + w_t is certified quantitatively:
a (kappa, gamma) certificate factors A - BK = H L H^{-1} with ||L||_2 <=
1 - gamma and max(||K||, ||H||, ||H^{-1}||) <= kappa, which forces
||(A - BK)^s||_2 <= kappa^2 (1 - gamma)^s for every s.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    DimensionMismatchError,
    DisturbanceBoundError,
    GeometryError,
    ModelMismatchError,
    UnstableSystemError,
)
from .geometry import ConvexSet, Norm, box_image_contained, shrink

RECONSTRUCTION_TOL = 1e-10
L_NORM_SLACK = 1e-9
DEFAULT_HORIZON_CAP = 200


@dataclass(frozen=True)
class LtiSystem:
    """x_{t+1} = A x_t + B u_t + w_t with ||w_t||_inf <= w_bar."""

    A: np.ndarray
    B: np.ndarray
    w_bar: float

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        B = np.array(self.B, dtype=float)
        A.setflags(write=False)
        B.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "w_bar", float(self.w_bar))
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DimensionMismatchError("A must be square")
        if B.ndim != 2 or B.shape[0] != A.shape[0]:
            raise DimensionMismatchError("B must be n x m")
        if self.w_bar < 0:
            raise GeometryError("w_bar must be nonnegative")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]


def step(sys: LtiSystem, x, u, w) -> np.ndarray:
    """One exact transition; rejects disturbances outside the model set."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    if x.shape != (sys.n,) or u.shape != (sys.m,) or w.shape != (sys.n,):
        raise DimensionMismatchError("step arguments have wrong shapes")
    if np.max(np.abs(w)) > sys.w_bar + 1e-12:
        raise DisturbanceBoundError(
            f"||w||_inf = {np.max(np.abs(w)):.6g} exceeds w_bar = {sys.w_bar:.6g}"
        )
    return sys.A @ x + sys.B @ u + w


def advance(sys: LtiSystem, x, u, w) -> np.ndarray:
    """Environment-side transition without the disturbance model check.

    The run loop observes states produced by reality and never trusts w
    directly; model violations surface through recover_disturbance.
    """
    return sys.A @ np.asarray(x, float) + sys.B @ np.asarray(u, float) + np.asarray(w, float)


def recover_disturbance(sys: LtiSystem, x, u, x_next) -> np.ndarray:
    """w_t = x_{t+1} - A x_t - B u_t; errors if outside the model set."""
    w = np.asarray(x_next, float) - sys.A @ np.asarray(x, float) - sys.B @ np.asarray(u, float)
    if np.max(np.abs(w)) > sys.w_bar + 1e-9:
        raise ModelMismatchError(
            f"recovered disturbance ||w||_inf = {np.max(np.abs(w)):.6g} "
            f"exceeds w_bar = {sys.w_bar:.6g}; dynamics model is inconsistent"
        )
    return w


@dataclass(frozen=True)
class StabilityCertificate:
    """Witness of (kappa, gamma) strong stability of A - BK."""

    K: np.ndarray
    kappa: float
    gamma: float
    H_mat: np.ndarray
    L_mat: np.ndarray
    kappa_B: float

    def __post_init__(self):
        for name in ("K", "H_mat", "L_mat"):
            a = np.array(getattr(self, name), dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def a_default(self) -> float:
        """Decay coefficient for the weight constraint set: a = 2 kappa^3."""
        return 2.0 * self.kappa**3

    def validate(self, sys: LtiSystem) -> None:
        A_K = sys.A - sys.B @ self.K
        H_inv = np.linalg.inv(self.H_mat)
        recon = np.linalg.norm(A_K - self.H_mat @ self.L_mat @ H_inv, 2)
        if recon > RECONSTRUCTION_TOL:
            raise GeometryError(f"certificate reconstruction error {recon:.3g}")
        if np.linalg.norm(self.L_mat, 2) > 1.0 - self.gamma + 1e-12:
            raise GeometryError("||L|| exceeds 1 - gamma")
        worst = max(
            np.linalg.norm(self.K, 2),
            np.linalg.norm(self.H_mat, 2),
            np.linalg.norm(H_inv, 2),
        )
        if worst > self.kappa + 1e-12:
            raise GeometryError("transform norms exceed kappa")
        if not (self.kappa > 1.0 and 0.0 < self.gamma <= 1.0):
            raise GeometryError("kappa must exceed 1 and gamma lie in (0, 1]")


def _real_block_form(A_K: np.ndarray):
    """Eigenvector-based real block diagonalization.

    Real eigenvalues give 1x1 blocks; complex pairs give rotation-scaling
    blocks [[a, b], [-b, a]] whose spectral norm equals |lambda|. Returns
    None when the eigenbasis is too ill-conditioned to be useful.
    """
    lam, V = np.linalg.eig(A_K)
    n = A_K.shape[0]
    cols = []
    used = np.zeros(n, dtype=bool)
    for i in range(n):
        if used[i]:
            continue
        if abs(lam[i].imag) < 1e-14:
            cols.append(V[:, i].real)
            used[i] = True
        else:
            # pair with the conjugate eigenvalue
            j = None
            for k in range(i + 1, n):
                if not used[k] and abs(lam[k] - lam[i].conj()) < 1e-8:
                    j = k
                    break
            if j is None:
                return None
            v = V[:, i]
            blk = np.column_stack([v.real, v.imag])
            scale = np.linalg.norm(blk, 2)
            cols.append(blk[:, 0] / scale)
            cols.append(blk[:, 1] / scale)
            used[i] = used[j] = True
    H = np.column_stack(cols)
    if abs(np.linalg.det(H)) < 1e-12:
        return None
    cond = np.linalg.cond(H)
    if not np.isfinite(cond) or cond > 1e8:
        return None
    L = np.linalg.solve(H, A_K @ H)
    return H, L


def _schur_scaled_forms(A_K: np.ndarray):
    """Schur-based factor candidates with geometric inter-block scaling.

    Shrinking the coupling between diagonal blocks trades ||L|| against
    cond(H); a sweep of scales yields candidates for defective or
    ill-conditioned spectra.
    """
    T, Q = scipy.linalg.schur(A_K, output="real")
    n = A_K.shape[0]
    # block boundaries of the quasi-triangular form
    blocks = []
    i = 0
    while i < n:
        if i + 1 < n and abs(T[i + 1, i]) > 1e-14:
            blocks.append((i, i + 2))
            i += 2
        else:
            blocks.append((i, i + 1))
            i += 1
    block_of = np.empty(n, dtype=int)
    for bi, (a, b) in enumerate(blocks):
        block_of[a:b] = bi
    out = []
    for s in np.geomspace(1.0, 1e-4, 33):
        d = s ** block_of.astype(float)
        H = Q * d  # Q @ diag(d)
        L = (T * d[None, :]) / d[:, None]
        out.append((H, L))
    return out


def _balance(H: np.ndarray) -> np.ndarray:
    nH = np.linalg.norm(H, 2)
    nHi = np.linalg.norm(np.linalg.inv(H), 2)
    return H / np.sqrt(nH / nHi)


def certify_strong_stability(sys: LtiSystem, K) -> StabilityCertificate:
    """Construct a valid (kappa, gamma) certificate for u = -K x.

    Among candidate factorizations picks the one minimizing kappa^3 /
    gamma, the shape of the constants the certificate feeds. The result
    is valid, not globally optimal.
    """
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if K.shape != (sys.m, sys.n):
        raise DimensionMismatchError(f"K must be {sys.m} x {sys.n}")
    A_K = sys.A - sys.B @ K
    rho = max(abs(np.linalg.eigvals(A_K)))
    if rho >= 1.0:
        raise UnstableSystemError(f"spectral radius {rho:.6g} >= 1; K does not stabilize")

    kappa_B = max(np.linalg.norm(sys.B, 2), 1.0)
    norm_K = np.linalg.norm(K, 2)

    candidates = []
    eig_form = _real_block_form(A_K)
    if eig_form is not None:
        candidates.append(eig_form)
    # the eigenbasis form has block norms equal to eigenvalue moduli, which
    # no scaling improves; the Schur sweep only matters for defective or
    # badly conditioned spectra
    if eig_form is None or np.linalg.cond(eig_form[0]) > 1e3:
        candidates.extend(_schur_scaled_forms(A_K))

    best = None
    for H, L in candidates:
        H = _balance(H)
        L = np.linalg.solve(H, A_K @ H)
        norm_L = np.linalg.norm(L, 2)
        recon = np.linalg.norm(A_K - H @ L @ np.linalg.inv(H), 2)
        if recon > RECONSTRUCTION_TOL:
            continue
        slack = 0.0 if norm_L == 0.0 else L_NORM_SLACK * max(1.0, norm_L)
        gamma = 1.0 - norm_L - slack
        if gamma <= 0.0:
            continue
        kappa = max(norm_K, np.linalg.norm(H, 2), np.linalg.norm(np.linalg.inv(H), 2), 1.0 + 1e-9)
        score = kappa**3 / gamma
        if best is None or score < best[0]:
            best = (score, kappa, gamma, H, L)
    if best is None:
        raise UnstableSystemError("no valid strong-stability factorization found")
    _, kappa, gamma, H, L = best
    cert = StabilityCertificate(K=K, kappa=kappa, gamma=gamma, H_mat=H, L_mat=L, kappa_B=kappa_B)
    cert.validate(sys)
    return cert


@dataclass(frozen=True)
class SafetySpec:
    """State and input safety sets; both must contain the origin."""

    state_set: ConvexSet
    input_set: ConvexSet

    def __post_init__(self):
        for s, name in ((self.state_set, "state"), (self.input_set, "input")):
            if not s.contains(np.zeros(s.dim), tol=1e-12):
                raise GeometryError(f"{name} safety set must contain the origin")


def worst_case_reach_radii(
    sys: LtiSystem, cert: StabilityCertificate, horizon_cap: int = DEFAULT_HORIZON_CAP
):
    """Per-coordinate certified reach radii of the closed loop under cert.K.

    rho_x[i] = w_bar * sum_s ||row_i((A-BK)^{s-1})||_1 over s <= cap, plus a
    geometric tail bound from the certificate. Same for the input through
    K (A-BK)^{s-1}. The box hull of the reachable set, sound but not tight.
    """
    A_K = sys.A - sys.B @ cert.K
    n = sys.n
    P = np.eye(n)
    acc_x = np.zeros(n)
    acc_u = np.zeros(sys.m)
    for _ in range(horizon_cap):
        acc_x += np.abs(P).sum(axis=1)
        acc_u += np.abs(cert.K @ P).sum(axis=1)
        P = P @ A_K
    decay = (1.0 - cert.gamma) ** horizon_cap
    tail_x = np.sqrt(n) * cert.kappa**2 * decay / cert.gamma
    tail_u = np.sqrt(n) * cert.kappa**3 * decay / cert.gamma
    rho_x = sys.w_bar * (acc_x + tail_x)
    rho_u = sys.w_bar * (acc_u + tail_u)
    return rho_x, rho_u


def certify_linear_policy_safety(
    sys: LtiSystem,
    cert: StabilityCertificate,
    spec: SafetySpec,
    horizon_cap: int = DEFAULT_HORIZON_CAP,
) -> float | None:
    """Certified strict-safety margin of u = -K x, or None if infeasible.

    Returns the largest eps0 >= 0 such that the certified reach boxes fit
    inside the eps0-shrunk safety sets (bisection; the predicate is
    monotone in eps0). Conservative: a certified margin never overstates
    true safety.
    """
    rho_x, rho_u = worst_case_reach_radii(sys, cert, horizon_cap)

    def fits(eps: float) -> bool:
        sx = shrink(spec.state_set, eps, Norm.LINF)
        su = shrink(spec.input_set, eps, Norm.LINF)
        return box_image_contained(rho_x, sx) and box_image_contained(rho_u, su)

    if not fits(0.0):
        return None
    hi = 1.0
    while fits(hi):
        hi *= 2.0
        if hi > 1e12:
            return hi
    lo = 0.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if fits(mid):
            lo = mid
        else:
            hi = mid
    return lo

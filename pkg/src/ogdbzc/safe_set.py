"""The safe policy set: weights whose worst-case disturbance images stay
inside buffer-shrunk safety sets.

Membership is certified through per-coordinate L1 row norms of the fixed
weight response: the image of the disturbance box is enclosed in a
coordinate box, which is then checked against the shrunk sets in closed
form. Certification is exact for box targets and sound (conservative)
in general; an exhaustive vertex oracle provides ground truth at small
sizes.

Projection returns a certified member unconditionally. Violated
constraints are corrected along their subgradient field with a small
interior overshoot, so iterates settle strictly inside the set where
tangential gradient steps survive; if the correction cannot certify, the
output is completed by bisection along the segment to a feasible anchor.
"""

from __future__ import annotations

import numpy as np

from .dac import (
    DacWeights,
    ResponseBuilder,
    ResponseMatrices,
    dac_from_linear,
    in_weight_set,
    project_into_M,
    weight_radii,
)
from .errors import (
    EmptyBufferWindowError,
    EnumerationTooLargeError,
    GeometryError,
    SeedInfeasibleError,
)
from .geometry import (
    Box,
    ConvexSet,
    L2Ball,
    Norm,
    Polytope,
    ShrunkL2Ball,
    box_image_contained,
    shrink,
)
from .lti import LtiSystem, SafetySpec, StabilityCertificate

TOL_PROJ = 1e-6
MAX_PROJ_ITERS = 500
MAX_EXACT_DIM = 22
_CHUNK = 1 << 13


def _box_caps(s: ConvexSet) -> np.ndarray:
    """Per-coordinate caps c with box(r) in s iff r <= c (box targets)."""
    return np.minimum(s.upper, -s.lower)


def _containment_violation(radii: np.ndarray, s: ConvexSet):
    """Violation value g (<= 0 iff contained) and d g / d radii.

    g is expressed in the natural units of the target: coordinate slack
    for boxes, norm slack for balls, halfspace slack for polytopes.
    """
    if isinstance(s, Box):
        caps = _box_caps(s)
        slack = radii - caps
        i = int(np.argmax(slack))
        coef = np.zeros(len(radii))
        coef[i] = 1.0
        return float(slack[i]), coef
    if isinstance(s, L2Ball):
        v = radii + np.abs(s.center)
        nrm = float(np.linalg.norm(v))
        coef = v / nrm if nrm > 0 else np.zeros_like(v)
        return nrm - s.radius, coef
    if isinstance(s, ShrunkL2Ball):
        v = radii + np.abs(s.center) + s.delta
        nrm = float(np.linalg.norm(v))
        coef = v / nrm if nrm > 0 else np.zeros_like(v)
        return nrm - s.radius, coef
    if isinstance(s, Polytope):
        slack = np.abs(s.rows) @ radii - s.offsets
        i = int(np.argmax(slack))
        return float(slack[i]), np.abs(s.rows[i])
    raise GeometryError(f"no containment rule for {type(s).__name__}")


class SafePolicySet:
    """Certified safe weight set for one certificate, spec and buffer size."""

    def __init__(
        self,
        sys: LtiSystem,
        cert: StabilityCertificate,
        spec: SafetySpec,
        epsilon: float,
        H: int,
        a: float | None = None,
    ):
        if epsilon < 0:
            raise GeometryError("buffer size must be nonnegative")
        self.sys = sys
        self.cert = cert
        self.spec = spec
        self.epsilon = float(epsilon)
        self.H = int(H)
        self.a = cert.a_default if a is None else float(a)
        self.w_bar = sys.w_bar
        self.shrunk_state = shrink(spec.state_set, self.epsilon, Norm.LINF)
        self.shrunk_input = shrink(spec.input_set, self.epsilon, Norm.LINF)
        if self.shrunk_state.is_empty() or self.shrunk_input.is_empty():
            raise EmptyBufferWindowError(
                f"buffer {self.epsilon:.6g} empties the shrunk safety sets; "
                "the admissible window is empty"
            )
        self.builder = ResponseBuilder(sys, cert, self.H)
        # correction overshoot: keeps iterates strictly interior so the
        # curved containment boundary does not pin tangential progress
        self.interior_pad = min(5e-3, 0.05 * max(self.epsilon, 0.02))

    # -- membership ---------------------------------------------------

    def response(self, weights: DacWeights) -> ResponseMatrices:
        return self.builder.build(weights)

    def member(self, weights: DacWeights) -> bool:
        """Certified membership: decay set plus both box-enclosure containments."""
        if not in_weight_set(weights, self.a, self.cert.gamma):
            return False
        resp = self.builder.build(weights)
        if not box_image_contained(resp.state_radii(self.w_bar), self.shrunk_state):
            return False
        return box_image_contained(resp.input_radii(self.w_bar), self.shrunk_input)

    def membership_report(self, weights: DacWeights) -> dict:
        """Constraint-by-constraint slack, for diagnostics."""
        resp = self.builder.build(weights)
        gx, _ = _containment_violation(resp.state_radii(self.w_bar), self.shrunk_state)
        gu, _ = _containment_violation(resp.input_radii(self.w_bar), self.shrunk_input)
        radii = weight_radii(weights.H, self.a, self.cert.gamma)
        ratios = weights.spectral_norms() / radii
        return {
            "in_weight_set": bool(np.all(ratios <= 1.0 + 1e-9)),
            "worst_weight_ratio": float(np.max(ratios)),
            "state_violation": gx,
            "input_violation": gu,
        }

    def member_exact(self, weights: DacWeights) -> bool:
        """Ground truth by enumerating every sign-pattern disturbance vertex.

        The image of the disturbance box is the convex hull of the vertex
        images, so containment of all vertex images is exact. Exponential
        in 2Hn; guarded.
        """
        d = 2 * self.H * self.sys.n
        if d > MAX_EXACT_DIM:
            raise EnumerationTooLargeError(f"2^{d} vertices exceed the exact oracle cap")
        if not in_weight_set(weights, self.a, self.cert.gamma):
            return False
        resp = self.builder.build(weights)
        hx = resp.h_x
        hu = resp.h_u
        total = 1 << d
        for start in range(0, total, _CHUNK):
            idx = np.arange(start, min(start + _CHUNK, total), dtype=np.uint64)
            bits = (idx[:, None] >> np.arange(d, dtype=np.uint64)[None, :]) & 1
            V = self.w_bar * (2.0 * bits.astype(float) - 1.0)
            if not np.all(self.shrunk_state.contains_batch(V @ hx.T, tol=1e-12)):
                return False
            if not np.all(self.shrunk_input.contains_batch(V @ hu.T, tol=1e-12)):
                return False
        return True

    # -- projection ---------------------------------------------------

    def _violations(self, blocks: np.ndarray):
        """Containment violations at the given blocks with cut gradients."""
        w = DacWeights(blocks)
        resp = self.builder.build(w)
        gx, coef_x = _containment_violation(resp.state_radii(self.w_bar), self.shrunk_state)
        gu, coef_u = _containment_violation(resp.input_radii(self.w_bar), self.shrunk_input)
        out = []
        if gx > -self.interior_pad:
            lam = self.w_bar * coef_x[:, None] * np.sign(resp.psi_x)  # (2H, n, n)
            out.append((gx, self.builder.adjoint_x(lam)))
        if gu > -self.interior_pad:
            lam_u = self.w_bar * coef_u[:, None] * np.sign(resp.psi_u)  # (2H, m, n)
            grad = lam_u[: self.H].copy()
            grad += self.builder.adjoint_x(-np.einsum("mn,kml->knl", self.cert.K, lam_u))
            out.append((gu, grad))
        return out

    def _correct(self, blocks: np.ndarray, max_iters: int) -> np.ndarray:
        """Drive violated containments to an interior pad along their
        subgradient field; the decay set is re-projected exactly."""
        pad = self.interior_pad
        x = blocks
        for _ in range(max_iters):
            x = project_into_M(DacWeights(x), self.a, self.cert.gamma).blocks
            cuts = [(g, s) for g, s in self._violations(x) if g > -0.5 * pad]
            if not cuts:
                return x
            for g, s in cuts:
                denom = float(np.sum(s * s))
                if denom > 0:
                    x = x - ((g + pad) / denom) * s
        return project_into_M(DacWeights(x), self.a, self.cert.gamma).blocks

    def project(self, candidate: DacWeights, anchor: DacWeights) -> DacWeights:
        """Feasibility-certified, approximately nearest projection.

        (i) a member candidate returns unchanged; (ii) violated
        constraints are corrected along their subgradient normals with an
        interior overshoot (near-boundary candidates land just inside,
        preserving the tangential component of the originating step);
        (iii) any remainder is completed by bisecting the segment to the
        anchor, which is feasible by precondition, so the output is a
        member without exception.
        """
        if self.member(candidate):
            return candidate
        if not self.member(anchor):
            raise SeedInfeasibleError(
                "projection anchor is not a member; cannot restore feasibility"
            )
        x = self._correct(candidate.blocks, max_iters=60)
        w = DacWeights(x, candidate.a)
        if self.member(w):
            return w
        # certified completion along the segment to the anchor
        lo, hi = 0.0, 1.0  # 0 = corrected iterate, 1 = anchor

        def point(t: float) -> DacWeights:
            return DacWeights((1 - t) * x + t * anchor.blocks, candidate.a)

        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if self.member(point(mid)):
                hi = mid
            else:
                lo = mid
        out = point(hi)
        if not self.member(out):  # hi landed on the boundary from outside
            out = point(min(1.0, hi + 1e-9))
        if not self.member(out):
            out = DacWeights(anchor.blocks.copy(), candidate.a)
        return out


def feasible_seed(omega: SafePolicySet, k_ss_cert: StabilityCertificate) -> DacWeights:
    """Lift the strictly safe reference policy and verify membership.

    The certified containment may be more conservative than the theory
    window; failures report which constraint broke and by how much.
    """
    weights = dac_from_linear(
        omega.sys, omega.cert, k_ss_cert.K, omega.H, omega.a, omega.cert.gamma
    )
    if not omega.member(weights):
        report = omega.membership_report(weights)
        raise SeedInfeasibleError(
            "lifted reference policy is outside the safe policy set at "
            f"buffer {omega.epsilon:.6g}: weight-set ok={report['in_weight_set']} "
            f"(worst ratio {report['worst_weight_ratio']:.4g}), "
            f"state containment slack {report['state_violation']:+.4g}, "
            f"input containment slack {report['input_violation']:+.4g} "
            "(positive slack means violation)"
        )
    return weights


def max_feasible_epsilon(
    sys: LtiSystem,
    cert: StabilityCertificate,
    spec: SafetySpec,
    H: int,
    k_ss_cert: StabilityCertificate,
    a: float | None = None,
) -> float | None:
    """Largest buffer size at which the lifted reference policy is a member.

    Membership is monotone in the buffer (shrinkage nesting), so bisection
    applies. None if the seed is infeasible even with no buffer.
    """
    if a is None:
        a = cert.a_default
    weights = dac_from_linear(sys, cert, k_ss_cert.K, H, a, cert.gamma)
    if not in_weight_set(weights, a, cert.gamma):
        return None
    resp = ResponseBuilder(sys, cert, H).build(weights)
    radii_x = resp.state_radii(sys.w_bar)
    radii_u = resp.input_radii(sys.w_bar)

    def fits(eps: float) -> bool:
        sx = shrink(spec.state_set, eps, Norm.LINF)
        su = shrink(spec.input_set, eps, Norm.LINF)
        if sx.is_empty() or su.is_empty():
            return False
        return box_image_contained(radii_x, sx) and box_image_contained(radii_u, su)

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

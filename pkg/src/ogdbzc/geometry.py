"""Computational convex geometry for buffer-zone safety sets.

Set vocabulary: axis-aligned boxes, Euclidean balls, H-representation
polytopes, the implicit set obtained by shrinking a Euclidean ball with
an L-infinity ball (``ShrunkL2Ball``), and implicit Minkowski expansions.
Shrinkage D_delta = {x : x + y in D for all ||y|| <= delta} and expansion
D_{-delta} = D + ball(delta) follow the erosion/dilation calculus; every
operation is either closed-form or a small LP.

All sets are immutable; operations are pure functions.
"""

from __future__ import annotations

import itertools
from dataclasses import InitVar, dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import linprog

from .errors import (
    DimensionMismatchError,
    EmptySetError,
    EnumerationTooLargeError,
    GeometryError,
)

MEMBERSHIP_TOL = 1e-9
PROJECTION_TOL = 1e-8
_MAX_VERTEX_DIM = 20


class Norm(Enum):
    """Norm tag for shrink/expand operations. LINF is the default
    convention; the disturbance set is an L-infinity ball."""

    LINF = "linf"
    L2 = "l2"

    def ball_dual_norm(self, y: np.ndarray) -> float:
        # support function of the unit ball of this norm
        if self is Norm.LINF:
            return float(np.abs(y).sum())
        return float(np.linalg.norm(y))


def _as_vector(x, dim: int, what: str = "vector") -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.shape != (dim,):
        raise DimensionMismatchError(f"{what} has shape {v.shape}, expected ({dim},)")
    return v


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


class ConvexSet:
    """Common interface; concrete variants subclass."""

    dim: int

    def support(self, direction) -> float:
        """h(y) = sup { <y, u> : u in the set }."""
        raise NotImplementedError

    def contains(self, point, tol: float = MEMBERSHIP_TOL) -> bool:
        """Membership within additive tolerance on the defining inequalities."""
        raise NotImplementedError

    def contains_batch(self, points: np.ndarray, tol: float = MEMBERSHIP_TOL) -> np.ndarray:
        """Vectorized membership for an (N, dim) array of points."""
        return np.array([self.contains(p, tol) for p in points])

    def project_point(self, point) -> np.ndarray:
        """Euclidean projection onto the set."""
        raise GeometryError(f"projection onto {type(self).__name__} is not supported")

    def is_empty(self) -> bool:
        return False

    def boundary_margin(self, point) -> float:
        """Signed slack of the defining inequalities at a point (>= 0 inside).

        Used for run diagnostics; normalized so the value is a distance-like
        quantity in the native scale of each constraint.
        """
        raise NotImplementedError


@dataclass(frozen=True)
class EmptySet(ConvexSet):
    """Flagged marker for an empty shrinkage result."""

    dim: int

    def support(self, direction) -> float:
        raise EmptySetError("support of the empty set is undefined")

    def contains(self, point, tol: float = MEMBERSHIP_TOL) -> bool:
        return False

    def contains_batch(self, points, tol=MEMBERSHIP_TOL):
        return np.zeros(len(points), dtype=bool)

    def project_point(self, point) -> np.ndarray:
        raise EmptySetError("cannot project onto the empty set")

    def is_empty(self) -> bool:
        return True


@dataclass(frozen=True)
class Box(ConvexSet):
    """Axis-aligned box {x : lower <= x <= upper}."""

    lower: np.ndarray
    upper: np.ndarray
    check_origin: InitVar[bool] = False

    def __post_init__(self, check_origin):
        object.__setattr__(self, "lower", _frozen(self.lower))
        object.__setattr__(self, "upper", _frozen(self.upper))
        if self.lower.ndim != 1 or self.lower.shape != self.upper.shape:
            raise DimensionMismatchError("box bounds must be 1-D and equal length")
        if np.any(self.lower > self.upper):
            raise GeometryError("box has lower > upper")
        if check_origin and (np.any(self.lower > 0) or np.any(self.upper < 0)):
            raise GeometryError("safety set must contain the origin")

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def support(self, direction) -> float:
        y = _as_vector(direction, self.dim, "direction")
        return float(np.sum(np.where(y >= 0, y * self.upper, y * self.lower)))

    def contains(self, point, tol: float = MEMBERSHIP_TOL) -> bool:
        x = _as_vector(point, self.dim, "point")
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def contains_batch(self, points, tol=MEMBERSHIP_TOL):
        p = np.asarray(points, dtype=float)
        return np.all((p >= self.lower - tol) & (p <= self.upper + tol), axis=1)

    def project_point(self, point) -> np.ndarray:
        x = _as_vector(point, self.dim, "point")
        return np.clip(x, self.lower, self.upper)

    def boundary_margin(self, point) -> float:
        x = _as_vector(point, self.dim, "point")
        return float(min((x - self.lower).min(), (self.upper - x).min()))


@dataclass(frozen=True)
class L2Ball(ConvexSet):
    """Euclidean ball {x : ||x - center||_2 <= radius}."""

    center: np.ndarray
    radius: float
    check_origin: InitVar[bool] = False

    def __post_init__(self, check_origin):
        object.__setattr__(self, "center", _frozen(self.center))
        object.__setattr__(self, "radius", float(self.radius))
        if self.center.ndim != 1:
            raise DimensionMismatchError("center must be a vector")
        if self.radius < 0:
            raise GeometryError("ball radius must be nonnegative")
        if check_origin and np.linalg.norm(self.center) > self.radius + 1e-12:
            raise GeometryError("safety set must contain the origin")

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def support(self, direction) -> float:
        y = _as_vector(direction, self.dim, "direction")
        return float(y @ self.center + self.radius * np.linalg.norm(y))

    def contains(self, point, tol: float = MEMBERSHIP_TOL) -> bool:
        x = _as_vector(point, self.dim, "point")
        return bool(np.linalg.norm(x - self.center) <= self.radius + tol)

    def contains_batch(self, points, tol=MEMBERSHIP_TOL):
        p = np.asarray(points, dtype=float)
        return np.linalg.norm(p - self.center, axis=1) <= self.radius + tol

    def project_point(self, point) -> np.ndarray:
        x = _as_vector(point, self.dim, "point")
        d = x - self.center
        nd = np.linalg.norm(d)
        if nd <= self.radius:
            return x
        return self.center + d * (self.radius / nd)

    def boundary_margin(self, point) -> float:
        x = _as_vector(point, self.dim, "point")
        return float(self.radius - np.linalg.norm(x - self.center))


@dataclass(frozen=True)
class Polytope(ConvexSet):
    """H-representation polytope {x : rows @ x <= offsets}."""

    rows: np.ndarray
    offsets: np.ndarray
    check_origin: InitVar[bool] = False

    def __post_init__(self, check_origin):
        object.__setattr__(self, "rows", _frozen(np.atleast_2d(self.rows)))
        object.__setattr__(self, "offsets", _frozen(self.offsets))
        if self.rows.ndim != 2 or self.offsets.shape != (self.rows.shape[0],):
            raise DimensionMismatchError("rows must be (k, n) with offsets (k,)")
        if np.any(np.linalg.norm(self.rows, axis=1) == 0.0):
            raise GeometryError("polytope rows must be nonzero")
        if check_origin and np.any(self.offsets < 0):
            raise GeometryError("safety set must contain the origin")

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def support(self, direction) -> float:
        y = _as_vector(direction, self.dim, "direction")
        if self.dim <= 2:
            verts = self.vertices()
            if verts.shape[0] == 0:
                raise EmptySetError("polytope has no vertices (empty or unbounded)")
            return float(np.max(verts @ y))
        res = linprog(-y, A_ub=self.rows, b_ub=self.offsets, bounds=(None, None), method="highs")
        if res.status == 3:
            return float("inf")
        if not res.success:
            raise GeometryError(f"support LP failed: {res.message}")
        return float(-res.fun)

    def contains(self, point, tol: float = MEMBERSHIP_TOL) -> bool:
        x = _as_vector(point, self.dim, "point")
        return bool(np.all(self.rows @ x <= self.offsets + tol))

    def contains_batch(self, points, tol=MEMBERSHIP_TOL):
        p = np.asarray(points, dtype=float)
        return np.all(p @ self.rows.T <= self.offsets + tol, axis=1)

    def project_point(self, point) -> np.ndarray:
        x = _as_vector(point, self.dim, "point")
        return _dykstra_halfspaces(self.rows, self.offsets, x)

    def is_empty(self) -> bool:
        res = linprog(
            np.zeros(self.dim), A_ub=self.rows, b_ub=self.offsets, bounds=(None, None), method="highs"
        )
        return res.status == 2

    def vertices(self) -> np.ndarray:
        """Vertex enumeration; exact for dim <= 2 (pairwise row intersection).
        Cached: the set is immutable."""
        cached = getattr(self, "_verts", None)
        if cached is not None:
            return cached
        out = self._vertices()
        object.__setattr__(self, "_verts", out)
        return out

    def _vertices(self) -> np.ndarray:
        if self.dim == 1:
            a = self.rows[:, 0]
            b = self.offsets
            hi = np.min(b[a > 0] / a[a > 0]) if np.any(a > 0) else np.inf
            lo = np.max(b[a < 0] / a[a < 0]) if np.any(a < 0) else -np.inf
            if not np.isfinite(hi) or not np.isfinite(lo) or lo > hi + 1e-12:
                return np.zeros((0, 1))
            return np.array([[lo], [hi]])
        if self.dim != 2:
            raise GeometryError("vertex enumeration implemented for dim <= 2 only")
        pts = []
        k = self.rows.shape[0]
        for i in range(k):
            for j in range(i + 1, k):
                M = self.rows[[i, j]]
                if abs(np.linalg.det(M)) < 1e-12:
                    continue
                v = np.linalg.solve(M, self.offsets[[i, j]])
                if np.all(self.rows @ v <= self.offsets + 1e-9):
                    pts.append(v)
        if not pts:
            return np.zeros((0, 2))
        uniq = []
        for v in pts:
            if not any(np.linalg.norm(v - u) < 1e-10 for u in uniq):
                uniq.append(v)
        return np.array(uniq)

    def boundary_margin(self, point) -> float:
        x = _as_vector(point, self.dim, "point")
        scale = np.linalg.norm(self.rows, axis=1)
        return float(np.min((self.offsets - self.rows @ x) / scale))


@dataclass(frozen=True)
class ShrunkL2Ball(ConvexSet):
    """L-infinity shrinkage of a Euclidean ball, kept in closed form.

    Membership: sum_i (|x_i - c_i| + delta)^2 <= radius^2. The worst
    perturbation of the erosion definition sits at a vertex of the
    delta-box, which yields this exact description.
    """

    center: np.ndarray
    radius: float
    delta: float

    def __post_init__(self):
        object.__setattr__(self, "center", _frozen(self.center))
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "delta", float(self.delta))
        if self.delta < 0 or self.radius < 0:
            raise GeometryError("radius and delta must be nonnegative")

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def is_empty(self) -> bool:
        return self.dim * self.delta**2 > self.radius**2 + 1e-15

    def contains(self, point, tol: float = MEMBERSHIP_TOL) -> bool:
        x = _as_vector(point, self.dim, "point")
        lhs = np.sqrt(np.sum((np.abs(x - self.center) + self.delta) ** 2))
        return bool(lhs <= self.radius + tol)

    def contains_batch(self, points, tol=MEMBERSHIP_TOL):
        p = np.asarray(points, dtype=float)
        lhs = np.sqrt(np.sum((np.abs(p - self.center) + self.delta) ** 2, axis=1))
        return lhs <= self.radius + tol

    def support(self, direction) -> float:
        y = _as_vector(direction, self.dim, "direction")
        if self.is_empty():
            raise EmptySetError("support of an empty shrinkage is undefined")
        if self.delta == 0.0:
            return float(y @ self.center + self.radius * np.linalg.norm(y))
        ay = np.abs(y)
        if not np.any(ay > 0):
            return float(y @ self.center)
        # maximize sum |y_i| t_i subject to sum (t_i + delta)^2 <= r^2, t >= 0;
        # KKT gives t_i(lam) = max(|y_i|/(2 lam) - delta, 0), solve for the
        # multiplier by bisection on the constraint residual.
        r2 = self.radius**2

        def residual(lam):
            t = np.maximum(ay / (2.0 * lam) - self.delta, 0.0)
            return np.sum((t + self.delta) ** 2) - r2

        lo = ay.max() / (2.0 * (self.radius + self.delta))  # t <= r guaranteed feasible side
        while residual(lo) < 0:
            lo *= 0.5
            if lo < 1e-300:
                break
        hi = max(ay.max() / (2.0 * self.delta) if self.delta > 0 else lo * 4, lo * 2)
        while residual(hi) > 0:
            hi *= 2.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if residual(mid) > 0:
                lo = mid
            else:
                hi = mid
        t = np.maximum(ay / (2.0 * hi) - self.delta, 0.0)
        return float(y @ self.center + ay @ t)

    def project_point(self, point) -> np.ndarray:
        x = _as_vector(point, self.dim, "point")
        if self.is_empty():
            raise EmptySetError("cannot project onto an empty shrinkage")
        if self.contains(x, tol=1e-12):
            return x
        d = x - self.center
        p = np.abs(d)
        sign = np.where(d >= 0, 1.0, -1.0)
        r2 = self.radius**2

        # minimize ||t - p||^2 s.t. sum (t_i + delta)^2 = r^2, t >= 0:
        # t_i(lam) = max((p_i - lam*delta) / (1 + lam), 0), lam >= 0 by bisection.
        def constraint(lam):
            t = np.maximum((p - lam * self.delta) / (1.0 + lam), 0.0)
            return np.sum((t + self.delta) ** 2) - r2

        lo, hi = 0.0, 1.0
        while constraint(hi) > 0:
            hi *= 2.0
            if hi > 1e12:
                break
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if constraint(mid) > 0:
                lo = mid
            else:
                hi = mid
        t = np.maximum((p - hi * self.delta) / (1.0 + hi), 0.0)
        return self.center + sign * t

    def boundary_margin(self, point) -> float:
        x = _as_vector(point, self.dim, "point")
        lhs = np.sqrt(np.sum((np.abs(x - self.center) + self.delta) ** 2))
        return float(self.radius - lhs)


@dataclass(frozen=True)
class MinkowskiExpansion(ConvexSet):
    """Implicit Minkowski sum: base + ball(delta) under the tagged norm.

    Support is exact (h_base + delta * dual norm); membership reduces to a
    norm-distance query against the base set.
    """

    base: ConvexSet
    delta: float
    norm: Norm

    def __post_init__(self):
        object.__setattr__(self, "delta", float(self.delta))
        if self.delta < 0:
            raise GeometryError("expansion delta must be nonnegative")

    @property
    def dim(self) -> int:
        return self.base.dim

    def is_empty(self) -> bool:
        return self.base.is_empty()

    def support(self, direction) -> float:
        y = _as_vector(direction, self.dim, "direction")
        return self.base.support(y) + self.delta * self.norm.ball_dual_norm(y)

    def contains(self, point, tol: float = MEMBERSHIP_TOL) -> bool:
        x = _as_vector(point, self.dim, "point")
        return distance_to_set(self.base, x, self.norm) <= self.delta + tol

    def boundary_margin(self, point) -> float:
        x = _as_vector(point, self.dim, "point")
        return float(self.delta - distance_to_set(self.base, x, self.norm))


@dataclass(frozen=True)
class VertexShrink(ConvexSet):
    """Generic L-infinity shrinkage kept as a membership oracle.

    x is a member iff x + v lies in the base for every vertex v of the
    delta-box; exact for convex bases. Fallback for bases without a
    closed-form erosion (e.g. implicit expansions).
    """

    base: ConvexSet
    delta: float

    def __post_init__(self):
        object.__setattr__(self, "delta", float(self.delta))
        if self.delta < 0:
            raise GeometryError("shrink delta must be nonnegative")
        if self.base.dim > _MAX_VERTEX_DIM:
            raise EnumerationTooLargeError("vertex-reduction shrink limited to small dimensions")

    @property
    def dim(self) -> int:
        return self.base.dim

    def contains(self, point, tol: float = MEMBERSHIP_TOL) -> bool:
        x = _as_vector(point, self.dim, "point")
        for v in box_vertices(np.full(self.dim, self.delta)):
            if not self.base.contains(x + v, tol):
                return False
        return True


def box_vertices(radii: np.ndarray):
    """Iterate the 2^n sign-pattern vertices of {x : |x_i| <= radii_i}."""
    radii = np.asarray(radii, dtype=float)
    n = radii.shape[0]
    if n > _MAX_VERTEX_DIM:
        raise EnumerationTooLargeError(f"2^{n} vertices exceed the enumeration cap")
    for signs in itertools.product((-1.0, 1.0), repeat=n):
        yield np.array(signs) * radii


def distance_to_set(base: ConvexSet, x: np.ndarray, norm: Norm) -> float:
    """min_z in base of ||x - z|| under the given norm."""
    if isinstance(base, MinkowskiExpansion) and base.norm is norm:
        # distance to an expansion shrinks by its delta
        return max(distance_to_set(base.base, x, norm) - base.delta, 0.0)
    if norm is Norm.L2:
        return float(np.linalg.norm(x - base.project_point(x)))
    # L-infinity distances case by case
    if isinstance(base, Box):
        return float(np.max(np.maximum(base.lower - x, x - base.upper).clip(min=0.0)))
    if isinstance(base, L2Ball):
        d = np.abs(x - base.center)

        def feasible(t):
            return np.linalg.norm(np.maximum(d - t, 0.0)) <= base.radius

        if feasible(0.0):
            return 0.0
        lo, hi = 0.0, float(d.max())
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if feasible(mid):
                hi = mid
            else:
                lo = mid
        return hi
    if isinstance(base, ShrunkL2Ball):
        d = np.abs(x - base.center)

        def feasible(t):
            inner = np.maximum(d - t, 0.0) + base.delta
            return np.sqrt(np.sum(inner**2)) <= base.radius

        if base.is_empty():
            raise EmptySetError("distance to an empty set is undefined")
        if feasible(0.0):
            return 0.0
        lo, hi = 0.0, float(d.max())
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if feasible(mid):
                hi = mid
            else:
                lo = mid
        return hi
    if isinstance(base, Polytope):
        # min t s.t. A z <= b, -t <= z_i - x_i <= t
        n = base.dim
        k = base.rows.shape[0]
        c = np.zeros(n + 1)
        c[-1] = 1.0
        A = np.zeros((k + 2 * n, n + 1))
        b = np.zeros(k + 2 * n)
        A[:k, :n] = base.rows
        b[:k] = base.offsets
        A[k : k + n, :n] = np.eye(n)
        A[k : k + n, -1] = -1.0
        b[k : k + n] = x
        A[k + n :, :n] = -np.eye(n)
        A[k + n :, -1] = -1.0
        b[k + n :] = -x
        res = linprog(c, A_ub=A, b_ub=b, bounds=(None, None), method="highs")
        if not res.success:
            raise GeometryError(f"distance LP failed: {res.message}")
        return float(res.x[-1])
    raise GeometryError(f"L-infinity distance to {type(base).__name__} is not supported")


def _dykstra_halfspaces(rows: np.ndarray, offsets: np.ndarray, x0: np.ndarray,
                        tol: float = PROJECTION_TOL, max_iters: int = 20000) -> np.ndarray:
    """Dykstra's alternating projections onto halfspace intersections.

    Converges to the Euclidean projection of x0; iterates until the worst
    constraint violation is below 1e-13 so repeated projection is a no-op.
    """
    if np.all(rows @ x0 <= offsets + 1e-13):
        return x0.copy()
    k = rows.shape[0]
    sq = np.einsum("ij,ij->i", rows, rows)
    x = x0.copy()
    corr = np.zeros((k, x0.shape[0]))
    for it in range(max_iters):
        max_move = 0.0
        for i in range(k):
            z = x + corr[i]
            viol = rows[i] @ z - offsets[i]
            if viol > 0:
                xn = z - (viol / sq[i]) * rows[i]
            else:
                xn = z
            corr[i] = z - xn
            max_move = max(max_move, np.linalg.norm(xn - x))
            x = xn
        if np.all(rows @ x <= offsets + 1e-13) and max_move <= tol:
            return x
    if np.all(rows @ x <= offsets + 1e-10):
        return x
    raise GeometryError("halfspace projection failed to converge")


def shrink(s: ConvexSet, delta: float, norm: Norm = Norm.LINF) -> ConvexSet:
    """Erosion of a set by the delta-ball of the given norm.

    Zero delta returns the set unchanged. Empty results come back as an
    EmptySet marker, not an error.
    """
    if delta < 0:
        raise GeometryError("shrink delta must be nonnegative")
    if delta == 0.0:
        return s
    if isinstance(s, EmptySet):
        return s
    if isinstance(s, Box):
        # worst perturbation is axis-aligned for both norms
        lo, hi = s.lower + delta, s.upper - delta
        if np.any(lo > hi):
            return EmptySet(s.dim)
        return Box(lo, hi)
    if isinstance(s, L2Ball):
        if norm is Norm.L2:
            r = s.radius - delta
            return L2Ball(s.center, r) if r >= 0 else EmptySet(s.dim)
        out = ShrunkL2Ball(s.center, s.radius, delta)
        return EmptySet(s.dim) if out.is_empty() else out
    if isinstance(s, ShrunkL2Ball):
        if norm is not Norm.LINF:
            return _generic_shrink(s, delta, norm)
        out = ShrunkL2Ball(s.center, s.radius, s.delta + delta)
        return EmptySet(s.dim) if out.is_empty() else out
    if isinstance(s, Polytope):
        scale = np.abs(s.rows).sum(axis=1) if norm is Norm.LINF else np.linalg.norm(s.rows, axis=1)
        out = Polytope(s.rows, s.offsets - delta * scale)
        return EmptySet(s.dim) if out.is_empty() else out
    return _generic_shrink(s, delta, norm)


def _generic_shrink(s: ConvexSet, delta: float, norm: Norm) -> ConvexSet:
    if norm is not Norm.LINF:
        raise GeometryError(f"no shrink rule for {type(s).__name__} under {norm}")
    return VertexShrink(s, delta)


def expand(s: ConvexSet, delta: float, norm: Norm = Norm.LINF) -> ConvexSet:
    """Minkowski sum with the delta-ball of the given norm."""
    if delta < 0:
        raise GeometryError("expand delta must be nonnegative")
    if delta == 0.0:
        return s
    if isinstance(s, EmptySet):
        return s
    if isinstance(s, Box) and norm is Norm.LINF:
        return Box(s.lower - delta, s.upper + delta)
    if isinstance(s, L2Ball) and norm is Norm.L2:
        return L2Ball(s.center, s.radius + delta)
    return MinkowskiExpansion(s, delta, norm)


def box_image_contained(radii, s: ConvexSet) -> bool:
    """Certify {x : |x_i| <= radii_i} subseteq s; exact for every variant.

    Box and Polytope targets check each halfspace against the box support;
    ball-like targets use the worst sign-pattern vertex in closed form.
    """
    if isinstance(s, EmptySet):
        return False
    r = _as_vector(radii, s.dim, "radii")
    if np.any(r < 0):
        raise GeometryError("radii must be nonnegative")
    if isinstance(s, Box):
        return bool(np.all(r <= s.upper) and np.all(-r >= s.lower))
    if isinstance(s, Polytope):
        return bool(np.all(np.abs(s.rows) @ r <= s.offsets))
    if isinstance(s, L2Ball):
        return bool(np.sqrt(np.sum((r + np.abs(s.center)) ** 2)) <= s.radius)
    if isinstance(s, ShrunkL2Ball):
        lhs = np.sqrt(np.sum((r + np.abs(s.center) + s.delta) ** 2))
        return bool(lhs <= s.radius)
    # fallback: exhaustive vertex check
    return all(s.contains(v, tol=0.0) for v in box_vertices(r))

"""Shared generators and set-algebra checkers for the test suite."""

import numpy as np

from ogdbzc.geometry import (
    Box,
    EmptySet,
    L2Ball,
    Norm,
    Polytope,
    expand,
    shrink,
)

SUPPORT_TOL = 1e-8
BOUNDARY_TOL = 1e-7


def random_box(rng, n=2):
    lower = -rng.uniform(0.2, 2.0, n)
    upper = rng.uniform(0.2, 2.0, n)
    return Box(lower, upper)


def random_l2ball(rng, n=2, centered=False):
    r = rng.uniform(0.5, 2.0)
    if centered:
        c = np.zeros(n)
    else:
        c = rng.uniform(-0.5, 0.5, n)
        if np.linalg.norm(c) > 0.8 * r:
            c *= 0.8 * r / np.linalg.norm(c)
    return L2Ball(c, r)


def random_polytope(rng, n=2, k=6):
    """Bounded polygon containing the origin: spread normals, positive offsets."""
    angles = np.sort(rng.uniform(0, 2 * np.pi, k))
    rows = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    rows = np.vstack([rows, np.eye(n), -np.eye(n)])
    offsets = rng.uniform(0.5, 2.0, rows.shape[0])
    return Polytope(rows, offsets)


def sample_points(rng, s, count, spread=1.5):
    """Points around the set, scaled from its axis supports."""
    n = s.dim
    scale = np.array([max(s.support(_e(n, i)), s.support(-_e(n, i)), 0.1) for i in range(n)])
    return rng.uniform(-spread, spread, (count, n)) * scale


def _e(n, i):
    v = np.zeros(n)
    v[i] = 1.0
    return v


def random_directions(rng, n, count=64):
    d = rng.standard_normal((count, n))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def memberships_agree(a, b, points, tol=BOUNDARY_TOL):
    """Membership of two sets agrees away from their boundaries.

    Points whose classification differs are accepted only if both sets
    place them within tol of the boundary (checked via +-tol membership).
    """
    for p in points:
        in_a = a.contains(p, tol=0.0)
        in_b = b.contains(p, tol=0.0)
        if in_a == in_b:
            continue
        near_a = a.contains(p, tol=tol) != a.contains(p, tol=-tol)
        near_b = b.contains(p, tol=tol) != b.contains(p, tol=-tol)
        if not (near_a or near_b):
            return False
    return True


def check_shrink_additive(s, d1, d2, rng, n_dirs=64, n_pts=120):
    lhs = shrink(shrink(s, d1, Norm.LINF), d2, Norm.LINF)
    rhs = shrink(s, d1 + d2, Norm.LINF)
    if isinstance(lhs, EmptySet) or isinstance(rhs, EmptySet):
        assert isinstance(lhs, EmptySet) == isinstance(rhs, EmptySet)
        return
    for y in random_directions(rng, s.dim, n_dirs):
        assert abs(lhs.support(y) - rhs.support(y)) <= SUPPORT_TOL
    assert memberships_agree(lhs, rhs, sample_points(rng, s, n_pts))


def check_expand_additive(s, d1, d2, rng, n_dirs=64, n_pts=120):
    lhs = expand(expand(s, d1, Norm.LINF), d2, Norm.LINF)
    rhs = expand(s, d1 + d2, Norm.LINF)
    for y in random_directions(rng, s.dim, n_dirs):
        assert abs(lhs.support(y) - rhs.support(y)) <= SUPPORT_TOL
    assert memberships_agree(lhs, rhs, sample_points(rng, s, n_pts, spread=2.5))


def check_expand_then_shrink(s, d1, d2, rng, n_pts=120):
    """(D_{-d1})_{d2} equals the net operation exactly."""
    lhs = shrink(expand(s, d1, Norm.LINF), d2, Norm.LINF)
    if d2 >= d1:
        rhs = shrink(s, d2 - d1, Norm.LINF)
    else:
        rhs = expand(s, d1 - d2, Norm.LINF)
    if isinstance(lhs, EmptySet) or isinstance(rhs, EmptySet):
        pts = sample_points(rng, s, n_pts)
        empty_like_lhs = isinstance(lhs, EmptySet) or not any(
            lhs.contains(p, 0.0) for p in pts
        )
        empty_like_rhs = isinstance(rhs, EmptySet) or not any(
            rhs.contains(p, 0.0) for p in pts
        )
        assert empty_like_lhs == empty_like_rhs
        return
    assert memberships_agree(lhs, rhs, sample_points(rng, s, n_pts, spread=2.0))


def check_shrink_then_expand_subset(s, d1, d2, rng, n_dirs=64, n_samples=60):
    """(D_{d2})_{-d1} is contained in D_{d2-d1} for d1 <= d2."""
    assert d1 <= d2
    inner = shrink(s, d2, Norm.LINF)
    rhs = shrink(s, d2 - d1, Norm.LINF)
    if isinstance(inner, EmptySet):
        return
    lhs = expand(inner, d1, Norm.LINF)
    if isinstance(rhs, EmptySet):
        raise AssertionError("nested shrinkage produced empty superset")
    for y in random_directions(rng, s.dim, n_dirs):
        assert lhs.support(y) <= rhs.support(y) + SUPPORT_TOL
    # membership: points of the left set must lie in the right set
    found = 0
    for p in sample_points(rng, s, 400):
        if inner.contains(p, 0.0):
            found += 1
            offs = rng.uniform(-d1, d1, s.dim)
            assert rhs.contains(p + offs, tol=1e-9)
            if found >= n_samples:
                break

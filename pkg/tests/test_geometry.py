"""Convex-set operations: closed forms against independent oracles."""

import itertools

import numpy as np
import pytest

from ogdbzc.errors import DimensionMismatchError, EmptySetError, GeometryError
from ogdbzc.geometry import (
    Box,
    EmptySet,
    L2Ball,
    MinkowskiExpansion,
    Norm,
    Polytope,
    ShrunkL2Ball,
    box_image_contained,
    box_vertices,
    expand,
    shrink,
)

from helpers import (
    check_expand_additive,
    check_expand_then_shrink,
    check_shrink_additive,
    check_shrink_then_expand_subset,
    random_box,
    random_directions,
    random_l2ball,
    random_polytope,
    sample_points,
)


def l1_ball_2d():
    rows = np.array([[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]])
    return Polytope(rows, np.ones(4))


class TestSupport:
    def test_l2ball(self):
        assert L2Ball(np.zeros(2), 1.0).support([3.0, 4.0]) == pytest.approx(5.0)

    def test_box_vertex(self):
        b = Box([-1.0, -1.0], [1.0, 1.0])
        assert b.support([1.0, -2.0]) == pytest.approx(3.0)

    def test_l1_ball_polytope(self):
        # oracle: enumerate the four vertices
        p = l1_ball_2d()
        verts = p.vertices()
        y = np.array([0.5, 0.5])
        assert p.support(y) == pytest.approx(float(np.max(verts @ y)))
        assert p.support(y) == pytest.approx(0.5)

    def test_positive_homogeneity(self):
        rng = np.random.default_rng(3)
        for s in (random_box(rng), random_l2ball(rng), random_polytope(rng)):
            for y in random_directions(rng, 2, 16):
                lam = rng.uniform(0.1, 5.0)
                assert s.support(lam * y) == pytest.approx(lam * s.support(y), rel=1e-10)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            L2Ball(np.zeros(2), 1.0).support([1.0, 2.0, 3.0])

    def test_shrunk_ball_support_vs_sampling(self):
        # maximize <y, x> over the shrunk set by dense boundary sampling
        rng = np.random.default_rng(4)
        s = ShrunkL2Ball(np.zeros(2), 1.0, 0.2)
        theta = np.linspace(0, 2 * np.pi, 4001)
        # boundary: (|x1|+d)^2 + (|x2|+d)^2 = 1 parameterized by angle
        px = np.maximum(np.abs(np.cos(theta)) - s.delta, 0.0) * np.sign(np.cos(theta))
        py = np.maximum(np.abs(np.sin(theta)) - s.delta, 0.0) * np.sign(np.sin(theta))
        pts = np.stack([px, py], axis=1)
        pts = pts[[s.contains(p, 1e-9) for p in pts]]
        for y in random_directions(rng, 2, 16):
            brute = float(np.max(pts @ y))
            assert s.support(y) >= brute - 1e-4
            assert s.support(y) <= brute + 0.05  # grid resolution slack


class TestContains:
    def test_boundary_point(self):
        assert L2Ball(np.zeros(2), 1.0).contains([0.6, 0.8], tol=0.0)

    def test_box_outside(self):
        assert not Box([-0.7, -0.7], [0.7, 0.7]).contains([0.71, 0.0], tol=1e-9)

    def test_shrunk_ball_vs_definition(self):
        # brute force the erosion definition on an L-infinity grid of y
        rng = np.random.default_rng(5)
        ball = L2Ball(np.zeros(2), 1.0)
        s = shrink(ball, 0.1, Norm.LINF)
        grid = np.linspace(-0.1, 0.1, 21)
        offsets = np.array(list(itertools.product(grid, grid)))
        for p in sample_points(rng, ball, 200):
            brute = all(ball.contains(p + y, tol=0.0) for y in offsets)
            ours = s.contains(p, tol=0.0)
            if ours:
                assert brute  # certified membership implies the sampled check
            elif brute:
                # grid misses the worst vertex only near the boundary
                assert not s.contains(p, tol=-1e-3)

    def test_support_consistency(self):
        # x in D implies <y, x> <= h_D(y) for every direction
        rng = np.random.default_rng(6)
        for s in (random_box(rng), random_l2ball(rng), random_polytope(rng),
                  ShrunkL2Ball(np.zeros(2), 1.5, 0.3)):
            pts = [p for p in sample_points(rng, s, 300) if s.contains(p, 0.0)]
            dirs = random_directions(rng, 2, 64)
            for p in pts:
                assert np.all(dirs @ p <= [s.support(y) + 1e-9 for y in dirs])


class TestShrinkExpand:
    def test_box_shrink(self):
        out = shrink(Box([-1.0, -1.0], [1.0, 1.0]), 0.3, Norm.LINF)
        np.testing.assert_allclose(out.lower, [-0.7, -0.7])
        np.testing.assert_allclose(out.upper, [0.7, 0.7])

    def test_zero_delta_identity(self):
        for s in (Box([-1.0], [1.0]), L2Ball(np.zeros(2), 2.0), l1_ball_2d()):
            assert shrink(s, 0.0, Norm.LINF) is s
            assert expand(s, 0.0, Norm.L2) is s

    def test_shrunk_l2ball_members(self):
        s = shrink(L2Ball(np.zeros(2), 1.0), 0.1, Norm.LINF)
        # worst perturbation sits at a vertex of the delta box
        for p, expected in (([0.5, 0.5], True), ([0.65, 0.65], False)):
            p = np.array(p)
            brute = bool(
                max(np.linalg.norm(p + v) for v in box_vertices(np.full(2, 0.1))) <= 1.0
            )
            assert brute == expected
            assert s.contains(p, tol=0.0) == expected

    def test_box_expand(self):
        out = expand(Box([-0.7, -0.7], [0.7, 0.7]), 0.3, Norm.LINF)
        np.testing.assert_allclose(out.lower, [-1.0, -1.0])
        np.testing.assert_allclose(out.upper, [1.0, 1.0])

    def test_expand_shrink_box_roundtrip(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            b = random_box(rng)
            d = rng.uniform(0.01, 0.5)
            out = shrink(expand(b, d, Norm.LINF), d, Norm.LINF)
            np.testing.assert_allclose(out.lower, b.lower, atol=1e-12)
            np.testing.assert_allclose(out.upper, b.upper, atol=1e-12)

    def test_expand_of_shrink_subset_polytopes(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            p = random_polytope(rng)
            d = rng.uniform(0.05, 0.4)
            inner = shrink(p, d, Norm.LINF)
            if isinstance(inner, EmptySet):
                continue
            back = expand(inner, d, Norm.LINF)
            for y in random_directions(rng, 2, 64):
                assert back.support(y) <= p.support(y) + 1e-9

    def test_empty_shrink_flagged(self):
        assert isinstance(shrink(Box([-0.1, -0.1], [0.1, 0.1]), 0.2, Norm.LINF), EmptySet)
        assert isinstance(shrink(L2Ball(np.zeros(2), 0.1), 0.5, Norm.LINF), EmptySet)

    def test_l2_norm_shrink_expand(self):
        b = L2Ball(np.ones(2) * 0.1, 1.0)
        s = shrink(b, 0.25, Norm.L2)
        assert isinstance(s, L2Ball) and s.radius == pytest.approx(0.75)
        e = expand(b, 0.25, Norm.L2)
        assert isinstance(e, L2Ball) and e.radius == pytest.approx(1.25)


class TestMinkowskiIdentities:
    """Shrink/expand algebra on random instances of every variant."""

    N = 12  # per-variant instances here; the acceptance suite runs 200

    def _gen(self, rng, variant):
        if variant == "box":
            return random_box(rng)
        if variant == "l2ball":
            return random_l2ball(rng)
        if variant == "centered_ball":
            return random_l2ball(rng, centered=True)
        return random_polytope(rng)

    @pytest.mark.parametrize("variant", ["box", "l2ball", "centered_ball", "polytope"])
    def test_all_identities(self, variant):
        rng = np.random.default_rng(hash(variant) % 2**32)
        for _ in range(self.N):
            s = self._gen(rng, variant)
            d1, d2 = rng.uniform(0.02, 0.35, 2)
            check_shrink_additive(s, d1, d2, rng)
            check_expand_additive(s, d1, d2, rng)
            check_expand_then_shrink(s, d1, d2, rng)
            lo, hi = min(d1, d2), max(d1, d2)
            check_shrink_then_expand_subset(s, lo, hi, rng)


class TestProjectPoint:
    def test_box_clamp(self):
        out = Box([-1.0, -1.0], [1.0, 1.0]).project_point([2.0, 0.5])
        np.testing.assert_allclose(out, [1.0, 0.5])

    def test_ball_radial(self):
        out = L2Ball(np.zeros(2), 1.0).project_point([3.0, 4.0])
        np.testing.assert_allclose(out, [0.6, 0.8])

    def test_polytope_vs_grid_oracle(self):
        rng = np.random.default_rng(9)
        for _ in range(12):
            p = random_polytope(rng)
            x = rng.uniform(-3, 3, 2)
            ours = p.project_point(x)
            d_ours = np.linalg.norm(ours - x)
            d_grid = _grid_refine_distance(p, x)
            assert abs(d_ours - d_grid) <= 1e-4
            assert p.contains(ours, tol=1e-10)

    def test_idempotent(self):
        rng = np.random.default_rng(10)
        sets = [random_box(rng), random_l2ball(rng), random_polytope(rng),
                ShrunkL2Ball(np.zeros(2), 1.0, 0.2)]
        for s in sets:
            for _ in range(10):
                p = rng.uniform(-3, 3, 2)
                once = s.project_point(p)
                twice = s.project_point(once)
                assert np.max(np.abs(twice - once)) <= 1e-12

    def test_empty_error(self):
        with pytest.raises(EmptySetError):
            EmptySet(2).project_point([0.0, 0.0])


def _grid_refine_distance(s, x, levels=6):
    """Brute-force nearest distance by coarse-to-fine grid search."""
    center = np.zeros(2)
    half = 4.0
    best = None
    for _ in range(levels):
        g1 = np.linspace(center[0] - half, center[0] + half, 101)
        g2 = np.linspace(center[1] - half, center[1] + half, 101)
        P = np.array(np.meshgrid(g1, g2)).reshape(2, -1).T
        mask = s.contains_batch(P, tol=0.0)
        if not mask.any():
            half *= 1.5
            continue
        cand = P[mask]
        d = np.linalg.norm(cand - x, axis=1)
        i = int(np.argmin(d))
        best = d[i]
        center = cand[i]
        half = half * 8.0 / 100
    return best


class TestBoxImageContained:
    def test_l2ball_trivial(self):
        assert box_image_contained([0.5, 0.5], L2Ball(np.zeros(2), 1.0))

    def test_box_false(self):
        assert not box_image_contained([0.8, 0.8], Box([-0.7, -0.7], [0.7, 0.7]))

    def test_shrunk_ball_matches_vertex_truth(self):
        rng = np.random.default_rng(11)
        s = ShrunkL2Ball(np.zeros(2), 1.0, 0.15)
        for _ in range(300):
            radii = rng.uniform(0.0, 0.8, 2)
            truth = all(s.contains(v, tol=0.0) for v in box_vertices(radii))
            assert box_image_contained(radii, s) == truth

    def test_soundness_all_vertices(self):
        rng = np.random.default_rng(12)
        for s in (random_box(rng, 3), random_l2ball(rng, 3), l1_ball_2d()):
            n = s.dim
            for _ in range(200):
                radii = rng.uniform(0.0, 1.5, n)
                if box_image_contained(radii, s):
                    for v in box_vertices(radii):
                        assert s.contains(v, tol=1e-12)

    def test_polytope_rows_exact(self):
        p = l1_ball_2d()
        assert box_image_contained([0.5, 0.5], p)
        assert not box_image_contained([0.51, 0.5], p)


class TestConstruction:
    def test_box_invalid(self):
        with pytest.raises(GeometryError):
            Box([1.0], [0.0])

    def test_polytope_zero_row(self):
        with pytest.raises(GeometryError):
            Polytope(np.array([[0.0, 0.0]]), np.array([1.0]))

    def test_origin_check_opt_in(self):
        with pytest.raises(GeometryError):
            Box([0.5], [1.0], check_origin=True)
        Box([0.5], [1.0])  # structural-only by default

    def test_negative_radius(self):
        with pytest.raises(GeometryError):
            L2Ball(np.zeros(2), -0.1)

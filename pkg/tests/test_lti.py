"""System stepping, strong-stability certificates, linear-policy safety."""

import numpy as np
import pytest

from ogdbzc.errors import (
    DisturbanceBoundError,
    ModelMismatchError,
    UnstableSystemError,
)
from ogdbzc.geometry import Box, L2Ball, Norm, shrink
from ogdbzc.lti import (
    LtiSystem,
    SafetySpec,
    StabilityCertificate,
    advance,
    certify_linear_policy_safety,
    certify_strong_stability,
    recover_disturbance,
    step,
    worst_case_reach_radii,
)

A2 = np.array([[1.0, 1.0], [0.0, 0.5]])
B2 = np.array([[1.0], [1.0]])
K2 = np.array([[0.5, 0.0]])
K_DB = np.array([[2.0 / 3.0, 5.0 / 6.0]])  # two-step deadbeat


def sys2(w_bar=0.3):
    return LtiSystem(A2, B2, w_bar)


def unit_spec(n=2, m=1):
    return SafetySpec(L2Ball(np.zeros(n), 1.0), L2Ball(np.zeros(m), 1.0))


class TestStep:
    def test_from_origin(self):
        out = step(sys2(), [0.0, 0.0], [0.0], [0.3, 0.3])
        np.testing.assert_allclose(out, [0.3, 0.3])

    def test_matrix_multiply(self):
        out = step(sys2(), [1.0, 2.0], [0.0], [0.0, 0.0])
        np.testing.assert_allclose(out, [3.0, 1.0])

    def test_random_against_recomputation(self):
        rng = np.random.default_rng(0)
        s = sys2()
        for _ in range(50):
            x = rng.standard_normal(2)
            u = rng.standard_normal(1)
            w = rng.uniform(-0.3, 0.3, 2)
            manual = np.array([
                s.A[0, 0] * x[0] + s.A[0, 1] * x[1] + s.B[0, 0] * u[0] + w[0],
                s.A[1, 0] * x[0] + s.A[1, 1] * x[1] + s.B[1, 0] * u[0] + w[1],
            ])
            np.testing.assert_array_equal(step(s, x, u, w), manual)

    def test_disturbance_bound(self):
        with pytest.raises(DisturbanceBoundError):
            step(sys2(), [0.0, 0.0], [0.0], [0.4, 0.0])


class TestRecoverDisturbance:
    def test_basic(self):
        w = recover_disturbance(sys2(), [0.0, 0.0], [0.0], [0.3, 0.3])
        np.testing.assert_allclose(w, [0.3, 0.3])

    def test_inverse_of_step(self):
        rng = np.random.default_rng(1)
        s = sys2()
        for _ in range(30):
            x = rng.standard_normal(2)
            u = rng.standard_normal(1)
            w = rng.uniform(-0.3, 0.3, 2)
            rec = recover_disturbance(s, x, u, step(s, x, u, w))
            np.testing.assert_allclose(rec, w, rtol=0, atol=1e-14)

    def test_mismatch_flagged(self):
        s = sys2()
        x_next = step(s, [0.0, 0.0], [0.0], [0.3, 0.3]) + np.array([1.0, 0.0])
        with pytest.raises(ModelMismatchError):
            recover_disturbance(s, [0.0, 0.0], [0.0], x_next)


class TestCertifyStrongStability:
    def test_experiment_system(self):
        s = sys2()
        A_K = A2 - B2 @ K2
        eig = np.linalg.eigvals(A_K)
        assert np.allclose(sorted(eig.imag), [-np.sqrt(2) / 2, np.sqrt(2) / 2], atol=1e-12)
        assert max(abs(eig)) == pytest.approx(np.sqrt(0.75))
        cert = certify_strong_stability(s, K2)
        cert.validate(s)
        assert 1.0 - cert.gamma >= max(abs(eig)) - 1e-12
        assert cert.kappa_B == pytest.approx(np.sqrt(2.0))

    def test_zero_closed_loop(self):
        # B = I and K = A zero the closed loop exactly
        A = np.array([[0.3, 0.1], [0.0, 0.2]])
        s = LtiSystem(A, np.eye(2), 0.1)
        cert = certify_strong_stability(s, A)
        assert cert.gamma == pytest.approx(1.0)
        assert cert.kappa == pytest.approx(max(np.linalg.norm(A, 2), 1.0), abs=1e-6)
        assert np.linalg.norm(cert.L_mat, 2) == pytest.approx(0.0, abs=1e-15)

    def test_diagonal_closed_loop(self):
        A = np.diag([0.5, 0.25])
        s = LtiSystem(A, np.eye(2), 0.1)
        cert = certify_strong_stability(s, np.zeros((2, 2)))
        assert cert.gamma == pytest.approx(0.5, abs=1e-6)
        assert cert.kappa == pytest.approx(1.0, abs=1e-6)

    def test_power_decay_soundness(self):
        rng = np.random.default_rng(2)
        s = sys2()
        for K in (K2, K_DB, np.array([[0.4, 0.1]]), np.array([[0.7, 0.6]])):
            cert = certify_strong_stability(s, K)
            cert.validate(s)
            A_K = A2 - B2 @ K
            P = np.eye(2)
            for k in range(51):
                bound = cert.kappa**2 * (1.0 - cert.gamma) ** k
                assert np.linalg.norm(P, 2) <= bound + 1e-9, (K, k)
                P = P @ A_K

    def test_defective_deadbeat(self):
        # nilpotent closed loop: defective spectrum still certifies
        cert = certify_strong_stability(sys2(), K_DB)
        cert.validate(sys2())
        assert cert.gamma > 0.05

    def test_unstable_rejected(self):
        with pytest.raises(UnstableSystemError):
            certify_strong_stability(sys2(), np.array([[0.0, 0.0]]))


class TestLinearPolicySafety:
    def test_huge_sets(self):
        s = sys2()
        cert = certify_strong_stability(s, K2)
        spec = SafetySpec(L2Ball(np.zeros(2), 1e6), L2Ball(np.zeros(1), 1e6))
        margin = certify_linear_policy_safety(s, cert, spec)
        assert margin is not None
        # slack dominates: margin close to the set radius scale
        assert margin > 1e5

    def test_experiment_gain_is_not_strictly_safe(self):
        # the bare stabilizing gain amplifies worst-case disturbances past
        # the unit ball; certification must refuse a margin, and the
        # worst-case sign-pattern simulation agrees
        s = sys2()
        cert = certify_strong_stability(s, K2)
        assert certify_linear_policy_safety(s, cert, unit_spec()) is None
        worst = _simulate_worst_sign_norm(s, K2, steps=200)
        assert worst > 1.0

    def test_deadbeat_margin_vs_simulation_oracle(self):
        s = sys2()
        cert = certify_strong_stability(s, K_DB)
        margin = certify_linear_policy_safety(s, cert, unit_spec())
        assert margin is not None and margin > 0
        assert margin == pytest.approx(0.1781180555, abs=1e-6)
        # certified radii must dominate simulated worst-case reach
        rho_x, rho_u = worst_case_reach_radii(s, cert)
        worst = _simulate_worst_sign_norm(s, K_DB, steps=200)
        assert worst <= np.linalg.norm(rho_x) + 1e-9

    def test_zero_disturbance_full_margin(self):
        s = LtiSystem(A2, B2, 0.0)
        cert = certify_strong_stability(s, K_DB)
        margin = certify_linear_policy_safety(s, cert, unit_spec())
        # reachable set is the origin; margin is the L-infinity distance
        # from the origin to the unit-ball boundary
        assert margin == pytest.approx(1.0 / np.sqrt(2.0), abs=1e-9)

    def test_certificate_is_conservative(self):
        # closed loop under a certified margin never exits the shrunk set
        rng = np.random.default_rng(3)
        s = sys2()
        cert = certify_strong_stability(s, K_DB)
        spec = unit_spec()
        margin = certify_linear_policy_safety(s, cert, spec)
        shrunk = shrink(spec.state_set, margin * (1 - 1e-6), Norm.LINF)
        shrunk_u = shrink(spec.input_set, margin * (1 - 1e-6), Norm.LINF)
        for _ in range(1000):
            x = np.zeros(2)
            for t in range(60):
                u = -K_DB @ x
                assert shrunk.contains(x, tol=1e-9)
                assert shrunk_u.contains(u, tol=1e-9)
                x = advance(s, x, u, rng.uniform(-0.3, 0.3, 2))


def _simulate_worst_sign_norm(s, K, steps):
    """Greedy per-coordinate extreme disturbances; lower bound on the
    true worst-case state norm."""
    A_K = s.A - s.B @ K
    n = s.n
    worst = 0.0
    # maximize each coordinate magnitude: w_t = w_bar * sign(row of A_K^s)
    P = np.eye(n)
    acc = np.zeros(n)
    for _ in range(steps):
        acc += np.abs(P).sum(axis=1)
        P = P @ A_K
    per_coord = s.w_bar * acc
    worst = float(np.max(per_coord))
    return worst

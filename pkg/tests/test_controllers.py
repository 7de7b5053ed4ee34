import math

import cvxpy as cp
import numpy as np
import pytest

from safe_inverter.controllers import (
    LqrWeights,
    SynthesisError,
    certify,
    check_eigvec_inequality,
    check_norm_expansion,
    closed_loop,
    feedback_law,
    is_hurwitz,
    lqr_gain,
    riccati_residual,
    safe_gain_from_lambda,
    solve_lyapunov2,
    sym2_eigvals,
    synthesize_safe_gain,
)
from safe_inverter.plant import LinearPlant, PlantParams, Reference, build_linear_plant, solve_linear_reference

from oracles import eigvec_inequality_instance, safe_gain_closed_form, lqr_oracle, random_rotation, random_stable_plant

PARAMS = PlantParams()
PLANT = build_linear_plant(PARAMS)
WEIGHTS = LqrWeights.default(PARAMS)
REF = solve_linear_reference(5.0, PLANT, 5.0)


@pytest.fixture(scope="module")
def k_lqr():
    return lqr_gain(PLANT, WEIGHTS)


@pytest.fixture(scope="module")
def safe_cert():
    return synthesize_safe_gain(PLANT, REF.x_star)


def test_default_weights():
    assert WEIGHTS.R_w == pytest.approx(120 / (10 * 0.0035))
    np.testing.assert_array_equal(WEIGHTS.Q, np.eye(2))
    with pytest.raises(ValueError):
        LqrWeights(Q=np.eye(2), R_w=0.0)
    with pytest.raises(ValueError):
        LqrWeights(Q=-np.eye(2), R_w=1.0)


def test_sym2_eigvals_matches_numpy():
    rng = np.random.default_rng(1)
    for _ in range(100):
        G = rng.normal(size=(2, 2)) * 100
        S = G + G.T
        np.testing.assert_allclose(sym2_eigvals(S), np.linalg.eigvalsh(S), rtol=1e-12, atol=1e-10)


def test_lyapunov_solver():
    rng = np.random.default_rng(2)
    for _ in range(20):
        A, _ = random_stable_plant(rng)
        W = np.eye(2) + 0.1 * np.diag(rng.uniform(size=2))
        P = solve_lyapunov2(A, W)
        np.testing.assert_allclose(A.T @ P + P @ A + W, 0.0, atol=1e-12)


def test_lqr_published_values(k_lqr):
    assert np.round(k_lqr, 4) == pytest.approx([0.0009, 0.0099], abs=5e-5)


def test_lqr_matches_scipy_riccati(k_lqr):
    np.testing.assert_allclose(k_lqr, lqr_oracle(PLANT.A, PLANT.B, WEIGHTS.Q, WEIGHTS.R_w), rtol=1e-8)


def test_lqr_riccati_residual(k_lqr):
    P = solve_lyapunov2(closed_loop(PLANT, k_lqr), WEIGHTS.Q + WEIGHTS.R_w * np.outer(k_lqr, k_lqr))
    assert np.linalg.norm(riccati_residual(PLANT, WEIGHTS, P)) <= 1e-8 * np.linalg.norm(WEIGHTS.Q)
    assert np.all(np.linalg.eigvalsh(P) >= 0)
    assert is_hurwitz(closed_loop(PLANT, k_lqr))


def test_lqr_random_plants_match_scipy():
    rng = np.random.default_rng(4)
    for _ in range(30):
        A, B = random_stable_plant(rng)
        plant = LinearPlant(A, B)
        Q = np.diag(rng.uniform(0.1, 3, size=2))
        r = rng.uniform(0.1, 10)
        np.testing.assert_allclose(lqr_gain(plant, LqrWeights(Q, r)), lqr_oracle(A, B, Q, r), rtol=1e-7, atol=1e-10)


def test_lqr_rejects_zero_input():
    with pytest.raises(SynthesisError, match="controllable"):
        lqr_gain(LinearPlant(PLANT.A, [0.0, 0.0]), WEIGHTS)


def test_safe_gain_from_lambda_eigvec():
    for lam in [-1.0, -371.0, -1e4, 0.0]:
        K = safe_gain_from_lambda(PLANT, REF.x_star, lam)
        N = closed_loop(PLANT, K)
        resid = REF.x_star @ N - lam * REF.x_star
        assert np.linalg.norm(resid) <= 1e-10 * max(1.0, abs(lam)) * np.linalg.norm(REF.x_star)


def test_safe_gain_lambda_zero_example():
    K = safe_gain_from_lambda(PLANT, [3.56, 3.51], 0.0)
    np.testing.assert_allclose(np.array([3.56, 3.51]) @ closed_loop(PLANT, K), 0.0, atol=1e-10)


def test_safe_gain_matches_safe_gain_closed_form():
    rng = np.random.default_rng(5)
    for lam in -np.exp(rng.uniform(-3, 9, size=10)):
        ours = safe_gain_from_lambda(PLANT, REF.x_star, lam)
        theirs = safe_gain_closed_form(PLANT.A, PLANT.B, lam)
        np.testing.assert_allclose(ours, theirs, rtol=1e-10, atol=1e-10 * np.abs(theirs).max())


def test_safe_gain_from_lambda_rejects_orthogonal_reference():
    with pytest.raises(SynthesisError):
        safe_gain_from_lambda(PLANT, [1.0, 0.0], -1.0)


def test_safe_gain_published_values(safe_cert):
    assert safe_cert.K == pytest.approx([-0.0111, 0.0111], abs=1e-3)
    assert safe_cert.valid
    assert safe_cert.eig_max <= safe_cert.lam < 0


def test_safe_gain_matches_convex_solver(safe_cert):
    K = cp.Variable((1, 2))
    lam = cp.Variable()
    A, B = PLANT.A, PLANT.B.reshape(2, 1)
    S = cp.Variable((2, 2), symmetric=True)
    N = A - B @ K
    cons = [REF.x_star @ N == lam * REF.x_star, S == N + N.T, S << lam * np.eye(2), S << -1e-8 * np.eye(2)]
    cp.Problem(cp.Minimize(cp.norm(K, 2)), cons).solve(solver="CLARABEL")
    assert np.linalg.norm(safe_cert.K) <= np.linalg.norm(K.value) * (1 + 1e-6)
    np.testing.assert_allclose(safe_cert.K, K.value.ravel(), atol=1e-5)


def test_safe_gain_random_plants():
    rng = np.random.default_rng(6)
    for _ in range(100):
        A, B = random_stable_plant(rng)
        plant = LinearPlant(A, B)
        x_star = -np.linalg.solve(A, B) * rng.uniform(-3, 3)
        cert = synthesize_safe_gain(plant, x_star)
        assert cert.valid
        N = closed_loop(plant, cert.K)
        assert np.linalg.norm(x_star @ N - cert.lam * x_star) <= 1e-8 * max(1, np.linalg.norm(x_star))
        assert np.linalg.eigvalsh(N + N.T).max() <= cert.lam + 1e-8
        assert np.linalg.eigvalsh(N + N.T).max() <= -1e-8


def test_safe_gain_rejects_unstable_symmetric_part():
    with pytest.raises(SynthesisError, match="negative definite"):
        synthesize_safe_gain(LinearPlant(np.eye(2), [0.0, 1.0]), [1.0, 1.0])


def test_certificate_detects_bad_gain(k_lqr):
    bad = certify(PLANT, REF.x_star, k_lqr, -1.0)
    assert not bad.valid


def test_closed_loops_hurwitz(k_lqr, safe_cert):
    assert is_hurwitz(closed_loop(PLANT, k_lqr))
    assert is_hurwitz(closed_loop(PLANT, safe_cert.K))


def test_closed_loop_boundary_inequality(safe_cert):
    A_bar = -closed_loop(PLANT, safe_cert.K)
    phi = np.arange(360) * 2 * math.pi / 360
    for p in phi:
        x = 5.0 * np.array([math.cos(p), math.sin(p)])
        assert x @ A_bar @ x - x @ A_bar @ REF.x_star >= -1e-8


def test_feedback_law_examples(k_lqr):
    assert feedback_law(k_lqr, REF, REF.x_star) == REF.u_star
    assert feedback_law(np.zeros(2), REF, [1.0, -2.0]) == REF.u_star
    ref = Reference([3.56, 3.51], 0.0772)
    assert feedback_law(k_lqr, ref, [0.0, 0.0]) == pytest.approx(0.1152, abs=5e-4)
    assert feedback_law([0.0009, 0.0099], ref, [0.0, 0.0]) == pytest.approx(0.0772 + 0.0009 * 3.56 + 0.0099 * 3.51)


def test_eigvec_inequality_examples():
    rng = np.random.default_rng(7)
    M, y, _ = eigvec_inequality_instance(rng)
    assert check_eigvec_inequality(M, y, y)
    for _ in range(100):
        y = rng.normal(size=2)
        z = y * rng.uniform(1, 2)
        z = random_rotation(rng) @ z
        assert check_eigvec_inequality(np.eye(2), y, z)


def test_eigvec_inequality_random_sweep():
    rng = np.random.default_rng(8)
    assert all(check_eigvec_inequality(*eigvec_inequality_instance(rng)) for _ in range(10_000))


def test_eigvec_inequality_rejects_bad_hypotheses():
    y = np.array([1.0, 0.0])
    with pytest.raises(ValueError, match="\\|y\\|"):
        check_eigvec_inequality(np.eye(2), 2 * y, y)
    with pytest.raises(ValueError, match="semidefinite"):
        check_eigvec_inequality(-np.eye(2), y, y)
    with pytest.raises(ValueError, match="eigenvector"):
        check_eigvec_inequality(np.array([[1.0, 1.0], [0.0, 1.0]]), y, y)
    with pytest.raises(ValueError, match="lam_min"):
        check_eigvec_inequality(np.diag([3.0, 0.5]), y, y)


def test_norm_expansion_random_sweep():
    rng = np.random.default_rng(9)
    for _ in range(10_000):
        U = random_rotation(rng)
        if rng.random() < 0.5:
            U[:, 1] *= -1
        gamma = rng.normal(size=2)
        zeta = random_rotation(rng) @ gamma * rng.uniform(1, 3)
        assert check_norm_expansion(U[:, 0], U[:, 1], zeta, gamma)

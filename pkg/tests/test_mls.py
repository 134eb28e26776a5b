"""Local affine solver checked against a brute-force normal-equation oracle.

The oracle builds the (p+1)-dimensional augmented system by explicit
summation over pairs and solves for the map and intercept jointly. The
intercept is unpenalized, so eliminating it reproduces the centered
closed form the implementation uses; both routes must agree to high
relative accuracy on well-conditioned instances.
"""

import numpy as np
import pytest

from conftest import random_pointset
from spectramls import (
    AffineColorMap,
    ControlPointSet,
    MlsConfig,
    SchemaError,
    SingularSystemError,
    ZeroSignatureError,
    apply_map,
    apply_map_unclamped,
    objective,
    sad,
    solve_affine,
    weighted_centroids,
    weights,
)

RELATIVE_TOL = 1e-8


def oracle_solve(u, v, w, lam):
    """Augmented normal equations, summed pair by pair."""
    n, p = u.shape
    N = np.zeros((p + 1, p + 1))
    R = np.zeros((p + 1, 3))
    for k in range(n):
        a = np.append(u[k], 1.0)
        N += w[k] * np.outer(a, a)
        R += w[k] * np.outer(a, v[k])
    ridge = np.eye(p + 1)
    ridge[p, p] = 0.0  # the intercept carries no penalty
    M = np.linalg.solve(N + lam * ridge, R)
    return M[:p], M[p]


def oracle_lambda(u, w, ridge_factor, p):
    """Effective ridge from the centered weighted scatter, re-derived."""
    if ridge_factor == 0:
        return 0.0
    ubar = np.zeros(p)
    for k in range(len(w)):
        ubar += w[k] * u[k]
    ubar /= w.sum()
    trace = 0.0
    for k in range(len(w)):
        trace += w[k] * float(((u[k] - ubar) ** 2).sum())
    scaled = ridge_factor * trace / p
    return scaled if scaled > 0 else ridge_factor


def oracle_objective(F, b, u, v, w):
    total = 0.0
    for k in range(len(w)):
        r = F.T @ u[k] + b - v[k]
        total += w[k] * float(r @ r)
    return total


def rel_err(got, want):
    denom = max(np.linalg.norm(want), 1e-30)
    return np.linalg.norm(got - want) / denom


class TestSad:
    def test_identical_is_zero(self):
        x = np.array([1.0, 2.0, 3.0])
        assert sad(x, x) == 0.0

    def test_orthogonal_is_half_pi(self):
        assert sad([1.0, 0.0], [0.0, 1.0]) == pytest.approx(np.pi / 2)

    def test_opposite_is_pi(self):
        assert sad([1.0, 1.0], [-1.0, -1.0]) == pytest.approx(np.pi)

    def test_scale_invariant(self):
        x = np.array([3.0, 1.0, 4.0])
        u = np.array([1.0, 5.0, 9.0])
        assert sad(2.0 * x, u) == sad(x, u)
        assert sad(x, 0.25 * u) == sad(x, u)

    def test_symmetric(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            x, u = rng.uniform(0.1, 10, (2, 6))
            assert sad(x, u) == sad(u, x)

    def test_near_parallel_stays_finite(self):
        x = np.array([1.0, 1.0, 1.0])
        assert np.isfinite(sad(x, x * (1 + 1e-15)))

    def test_zero_vector_rejected(self):
        with pytest.raises(ZeroSignatureError):
            sad([0.0, 0.0], [1.0, 1.0])

    def test_shape_mismatch(self):
        with pytest.raises(SchemaError):
            sad([1.0, 2.0], [1.0, 2.0, 3.0])


class TestWeights:
    def test_exact_match_hits_epsilon_cap(self):
        cps = random_pointset(1, n=4, p=3)
        cfg = MlsConfig(sad_epsilon=1e-8, ridge_lambda=0.0)
        w = weights(cps.u[2], cps, cfg)
        assert w[2] == pytest.approx(1e8)

    def test_matches_scalar_angles(self):
        cps = random_pointset(2, n=6, p=4)
        x = np.array([2.0, 7.0, 1.0, 3.0])
        cfg = MlsConfig()
        w = weights(x, cps, cfg)
        for k in range(cps.n):
            angle = max(sad(x, cps.u[k]), cfg.sad_epsilon)
            assert w[k] == pytest.approx(1.0 / angle, rel=1e-12)

    def test_exponent_composes(self):
        cps = random_pointset(3, n=5, p=3)
        x = np.array([1.0, 4.0, 2.0])
        w1 = weights(x, cps, MlsConfig(weight_exponent=1.0))
        w2 = weights(x, cps, MlsConfig(weight_exponent=2.0))
        assert w2 == pytest.approx(w1**2, rel=1e-12)

    def test_closer_angle_weighs_more(self):
        u = np.array([[1.0, 0.1], [1.0, 0.5], [1.0, 2.0]])
        cps = ControlPointSet(u, np.full((3, 3), 10.0), sensor="")
        w = weights(np.array([1.0, 0.1]), cps, MlsConfig())
        assert w[0] > w[1] > w[2]

    def test_zero_query_rejected(self):
        cps = random_pointset(4, n=3, p=2)
        with pytest.raises(ZeroSignatureError):
            weights(np.zeros(2), cps, MlsConfig())


class TestCentroids:
    def test_equal_weights_reduce_to_mean(self):
        cps = random_pointset(5, n=7, p=4)
        ubar, vbar = weighted_centroids(cps, np.ones(7))
        assert ubar == pytest.approx(cps.u.mean(axis=0))
        assert vbar == pytest.approx(cps.v.mean(axis=0))

    def test_weight_scale_drops_out_exactly(self):
        cps = random_pointset(6, n=5, p=3)
        w = np.random.default_rng(6).uniform(0.5, 4.0, 5)
        a = weighted_centroids(cps, w)
        b = weighted_centroids(cps, 8.0 * w)
        assert np.array_equal(a[0], b[0])
        assert np.array_equal(a[1], b[1])

    def test_rejects_nonpositive_weights(self):
        cps = random_pointset(7, n=3, p=2)
        with pytest.raises(SchemaError):
            weighted_centroids(cps, np.array([1.0, 0.0, 1.0]))


class TestSolveOracle:
    @pytest.mark.parametrize("p", [2, 4, 8])
    @pytest.mark.parametrize("n", [12, 32])
    def test_matches_summation_form_without_ridge(self, p, n):
        cfg = MlsConfig(ridge_lambda=0.0)
        rng = np.random.default_rng(100 * p + n)
        for _ in range(5):
            cps = ControlPointSet(
                rng.uniform(1.0, 100.0, (n, p)), rng.uniform(0.0, 255.0, (n, 3)), sensor=""
            )
            x = rng.uniform(1.0, 100.0, p)
            m = solve_affine(x, cps, cfg)
            w = weights(x, cps, cfg)
            F0, b0 = oracle_solve(cps.u, cps.v, w, 0.0)
            assert rel_err(m.F, F0) < RELATIVE_TOL
            assert rel_err(m.b, b0) < RELATIVE_TOL
            got = objective(m, x, cps, cfg)
            want = oracle_objective(F0, b0, cps.u, cps.v, w)
            assert abs(got - want) <= RELATIVE_TOL * max(abs(want), 1.0)

    @pytest.mark.parametrize("p", [3, 6])
    def test_matches_summation_form_with_ridge(self, p):
        cfg = MlsConfig(ridge_lambda=1e-4)
        rng = np.random.default_rng(50 + p)
        cps = ControlPointSet(
            rng.uniform(1.0, 100.0, (20, p)), rng.uniform(0.0, 255.0, (20, 3)), sensor=""
        )
        x = rng.uniform(1.0, 100.0, p)
        m = solve_affine(x, cps, cfg)
        w = weights(x, cps, cfg)
        lam = oracle_lambda(cps.u, w, cfg.ridge_lambda, p)
        F0, b0 = oracle_solve(cps.u, cps.v, w, lam)
        assert rel_err(m.F, F0) < RELATIVE_TOL
        assert rel_err(m.b, b0) < RELATIVE_TOL

    def test_gradient_vanishes_at_solution(self):
        cfg = MlsConfig(ridge_lambda=0.0)
        rng = np.random.default_rng(77)
        for _ in range(10):
            p = int(rng.integers(2, 9))
            n = int(rng.integers(p + 3, 40))
            cps = ControlPointSet(
                rng.uniform(1.0, 100.0, (n, p)), rng.uniform(0.0, 255.0, (n, 3)), sensor=""
            )
            x = rng.uniform(1.0, 100.0, p)
            m = solve_affine(x, cps, cfg)
            w = weights(x, cps, cfg)
            residuals = cps.u @ m.F + m.b - cps.v
            grad_F = 2.0 * (w[:, None] * cps.u).T @ residuals
            grad_b = 2.0 * (w[:, None] * residuals).sum(axis=0)
            scale = np.linalg.norm((w[:, None] * cps.u).T @ cps.v) + 1.0
            assert np.linalg.norm(grad_F) / scale < RELATIVE_TOL
            assert np.linalg.norm(grad_b) / scale < RELATIVE_TOL

    def test_no_perturbation_improves_the_objective(self):
        cfg = MlsConfig(ridge_lambda=0.0)
        rng = np.random.default_rng(404)
        cps = ControlPointSet(
            rng.uniform(1.0, 100.0, (24, 4)), rng.uniform(0.0, 255.0, (24, 3)), sensor=""
        )
        x = rng.uniform(1.0, 100.0, 4)
        m = solve_affine(x, cps, cfg)
        base = objective(m, x, cps, cfg)
        for _ in range(100):
            delta = rng.standard_normal(15)
            delta *= 1e-3 / np.linalg.norm(delta)
            shifted = AffineColorMap(F=m.F + delta[:12].reshape(4, 3), b=m.b + delta[12:])
            assert objective(shifted, x, cps, cfg) >= base - 1e-12

    def test_exact_affine_data_recovered(self):
        rng = np.random.default_rng(11)
        p = 5
        A = rng.uniform(-0.2, 0.2, (p, 3))
        c = np.array([120.0, 100.0, 90.0])
        u = rng.uniform(1.0, 60.0, (p + 8, p))
        v = u @ A + c
        assert (v >= 0).all() and (v <= 255).all()
        cps = ControlPointSet(u, v, sensor="")
        cfg = MlsConfig(ridge_lambda=0.0)
        x = rng.uniform(1.0, 60.0, p)
        m = solve_affine(x, cps, cfg)
        assert objective(m, x, cps, cfg) < 1e-10
        query = rng.uniform(1.0, 60.0, p)
        assert apply_map_unclamped(m, query) == pytest.approx(A.T @ query + c, abs=1e-8)

    def test_single_pair_returns_its_color(self):
        cps = ControlPointSet(np.array([[3.0, 4.0]]), np.array([[10.0, 200.0, 45.0]]), sensor="")
        m = solve_affine(np.array([5.0, 1.0]), cps, MlsConfig())
        assert m.F == pytest.approx(np.zeros((2, 3)))
        assert m.b == pytest.approx(cps.v[0])

    def test_uniform_signature_rescaling_cancels(self):
        rng = np.random.default_rng(21)
        u = rng.uniform(1.0, 100.0, (10, 4))
        v = rng.uniform(0.0, 255.0, (10, 3))
        x = rng.uniform(1.0, 100.0, 4)
        cfg = MlsConfig()
        y1 = apply_map_unclamped(solve_affine(x, ControlPointSet(u, v, sensor=""), cfg), x)
        y2 = apply_map_unclamped(
            solve_affine(4.0 * x, ControlPointSet(4.0 * u, v, sensor=""), cfg), 4.0 * x
        )
        np.testing.assert_allclose(y2, y1, rtol=1e-12)


class TestDegenerate:
    def test_singular_without_ridge_raises(self):
        u = np.tile(np.array([[2.0, 3.0, 4.0]]), (5, 1))
        cps = ControlPointSet(u, np.random.default_rng(1).uniform(0, 255, (5, 3)), sensor="")
        with pytest.raises(SingularSystemError, match="ridge_lambda"):
            solve_affine(np.array([1.0, 1.0, 1.0]), cps, MlsConfig(ridge_lambda=0.0))

    def test_default_ridge_keeps_it_finite(self):
        u = np.tile(np.array([[2.0, 3.0, 4.0]]), (5, 1))
        cps = ControlPointSet(u, np.random.default_rng(2).uniform(0, 255, (5, 3)), sensor="")
        m = solve_affine(np.array([1.0, 1.0, 1.0]), cps, MlsConfig())
        y = apply_map(m, np.array([1.0, 1.0, 1.0]))
        assert np.isfinite(y).all()
        assert (y >= 0).all() and (y <= 255).all()


class TestApply:
    def test_clamps_to_gamut(self):
        m = AffineColorMap(F=np.array([[300.0, 0.0, -300.0]]), b=np.array([0.0, 128.0, 0.0]))
        y = apply_map(m, np.array([2.0]))
        assert y.tolist() == [255.0, 128.0, 0.0]

    def test_unclamped_passes_through(self):
        m = AffineColorMap(F=np.array([[300.0, 0.0, -300.0]]), b=np.array([0.0, 128.0, 0.0]))
        y = apply_map_unclamped(m, np.array([2.0]))
        assert y.tolist() == [600.0, 128.0, -600.0]

    def test_objective_excludes_the_ridge_term(self):
        rng = np.random.default_rng(31)
        cps = ControlPointSet(
            rng.uniform(1.0, 50.0, (8, 3)), rng.uniform(0.0, 255.0, (8, 3)), sensor=""
        )
        x = rng.uniform(1.0, 50.0, 3)
        cfg = MlsConfig(ridge_lambda=10.0)
        m = solve_affine(x, cps, cfg)
        w = weights(x, cps, cfg)
        assert objective(m, x, cps, cfg) == pytest.approx(
            oracle_objective(m.F, m.b, cps.u, cps.v, w), rel=1e-12
        )


class TestConfig:
    def test_rejects_bad_values(self):
        with pytest.raises(SchemaError):
            MlsConfig(sad_epsilon=0.0)
        with pytest.raises(SchemaError):
            MlsConfig(ridge_lambda=-1.0)
        with pytest.raises(SchemaError):
            MlsConfig(weight_exponent=0.0)

    def test_map_rejects_nonfinite(self):
        with pytest.raises(SchemaError):
            AffineColorMap(F=np.full((2, 3), np.nan), b=np.zeros(3))
        with pytest.raises(SchemaError):
            AffineColorMap(F=np.zeros((2, 3)), b=np.array([0.0, np.inf, 0.0]))

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from pcd.metrics import constraint_satisfaction, displacements
from pcd.projections import (
    Ball,
    Box,
    ConvexHull,
    Identity,
    Singleton,
    VelocityChain,
    project,
    project_convex_hull,
    project_velocity_chain,
    project_velocity_chain_batch,
)
from pcd.schedules import ConfigurationError

from oracles import chain_qp, simplex_qp


def test_closed_form_examples():
    x = np.array([1.0, -2.0, 3.5])
    np.testing.assert_array_equal(project(Identity(), x), x)
    assert project(Box([3.0], [6.0]), np.array([7.0]))[0] == 6.0
    np.testing.assert_allclose(project(Ball([0.0, 0.0], 1.0), np.array([3.0, 4.0])), [0.6, 0.8])
    np.testing.assert_array_equal(project(Singleton([2.0]), np.array([[5.0], [-1.0]])), [[2.0], [2.0]])


def test_invalid_sets_rejected():
    with pytest.raises(ConfigurationError):
        Box([1.0], [0.0])
    with pytest.raises(ConfigurationError):
        Ball([0.0], -1.0)
    with pytest.raises(ConfigurationError):
        VelocityChain(np.zeros(2), 1.0, 1.0, 0)
    with pytest.raises(ConfigurationError):
        ConvexHull(np.zeros((3, 0)))
    with pytest.raises(ValueError):
        Box([0.0, 0.0], [1.0, 1.0])(np.zeros(3))


vecs = arrays(np.float64, (3,), elements=st.floats(-50, 50, allow_nan=False))


@settings(max_examples=100)
@given(vecs, vecs)
def test_closed_form_idempotent_nonexpansive_feasible(a, b):
    ops = [Identity(), Singleton([1.0, 2.0, 3.0]), Box([-1.0, 0.0, 2.0], [1.0, 5.0, 2.5]), Ball([0.5, 0.0, -1.0], 2.0)]
    for op in ops:
        pa, pb = op(a), op(b)
        np.testing.assert_allclose(op(pa), pa, atol=1e-8)
        assert np.linalg.norm(pa - pb) <= np.linalg.norm(a - b) + 1e-9
    assert np.all((ops[2](a) >= ops[2].lower) & (ops[2](a) <= ops[2].upper))
    assert np.linalg.norm(ops[3](a) - ops[3].center) <= 2.0 * (1 + 1e-12)


def test_chain_examples():
    op = VelocityChain(np.zeros(2), 1.0, 1.0, 2)
    X, ok = project_velocity_chain(op, np.array([[2.0, 0.0], [4.0, 0.0]]))
    assert ok
    np.testing.assert_allclose(X, [[1.0, 0.0], [2.0, 0.0]], atol=1e-4)
    op1 = VelocityChain(np.zeros(2), 1.0, 1.0, 1)
    X, ok = project_velocity_chain(op1, np.array([[3.0, 4.0]]))
    assert ok
    np.testing.assert_allclose(X, [[0.6, 0.8]], atol=1e-4)


def test_feasible_input_is_fixed_point_in_one_iteration():
    rng = np.random.default_rng(0)
    H = 12
    steps = rng.normal(size=(8, H, 2))
    steps *= 0.9 / np.maximum(np.linalg.norm(steps, axis=-1, keepdims=True), 1.0)
    x0 = np.array([1.0, -2.0])
    batch = x0 + np.cumsum(steps, axis=1)
    op = VelocityChain(x0, 1.0, 1.0, H)
    X, info = project_velocity_chain_batch(op, batch)
    assert info.converged.all()
    assert info.iterations.max() <= 2
    assert info.primal_residual.max() == 0.0
    np.testing.assert_allclose(X, batch, atol=1e-6)


def _random_instance(rng):
    H = int(rng.integers(1, 9))
    x0 = rng.normal(size=2)
    vmax = float(rng.uniform(0.3, 1.5))
    dt = float(rng.uniform(0.5, 2.0))
    x_hat = x0 + np.cumsum(rng.normal(scale=1.5, size=(H, 2)), axis=0)
    return VelocityChain(x0, vmax, dt, H), x_hat


def test_chain_matches_qp_oracle():
    rng = np.random.default_rng(42)
    for _ in range(25):
        op, x_hat = _random_instance(rng)
        X, ok = project_velocity_chain(op, x_hat)
        ref, ref_val = chain_qp(x_hat, op.x0, op.limit)
        assert ok
        assert np.max(np.abs(X - ref)) <= 1e-4
        assert np.sum((X - x_hat) ** 2) <= ref_val + 1e-3
        assert constraint_satisfaction(X, op.x0, op.v_max, op.dt) == 1


def test_batch_equals_independent_calls():
    rng = np.random.default_rng(3)
    H = 10
    op = VelocityChain(np.zeros(2), 0.7, 1.0, H)
    batch = np.cumsum(rng.normal(scale=1.0, size=(8, H, 2)), axis=1)
    X, info = project_velocity_chain_batch(op, batch)
    for b in range(8):
        Xb, ok = project_velocity_chain(op, batch[b])
        np.testing.assert_array_equal(X[b], Xb)
        assert ok == info.converged[b]
        ref, _ = chain_qp(batch[b], op.x0, op.limit)
        assert np.max(np.abs(X[b] - ref)) <= 1e-4
    X1, _ = project_velocity_chain_batch(op, batch[:1])
    np.testing.assert_array_equal(X1[0], X[0])


def test_chain_idempotent_and_nonexpansive():
    rng = np.random.default_rng(4)
    H = 6
    op = VelocityChain(np.zeros(2), 0.8, 1.0, H)
    for _ in range(20):
        a, b = (np.cumsum(rng.normal(size=(H, 2)), axis=0) for _ in range(2))
        pa, pb = op(a), op(b)
        np.testing.assert_allclose(op(pa), pa, atol=1e-4)
        assert np.linalg.norm(pa - pb) <= np.linalg.norm(a - b) + 1e-4


def test_nonconvergence_is_flagged_not_raised():
    rng = np.random.default_rng(5)
    op = VelocityChain(np.zeros(2), 0.3, 1.0, 20, max_iter=3)
    X, info = op.solve(np.cumsum(rng.normal(size=(4, 20, 2)), axis=1))
    assert not info.converged.any()
    assert np.all(info.iterations == 3)
    # the radial repair still leaves a feasible output
    assert np.all(displacements(X, op.x0) <= op.limit * (1 + 1e-9))


def test_chain_feasibility_100_random_inputs():
    rng = np.random.default_rng(6)
    H = 16
    op = VelocityChain(np.array([0.5, 0.5]), 0.7, 1.0, H)
    X, info = op.solve(np.cumsum(rng.normal(scale=1.2, size=(100, H, 2)), axis=1))
    assert info.converged.all()
    assert np.all(displacements(X, op.x0) <= op.limit + 1e-6)


def _eta(E):
    return 0.5 / np.linalg.norm(E.T @ E, 2)


def test_hull_examples():
    E = np.array([[0.0, 1.0]])
    op = ConvexHull(E, eta=_eta(E), n_iter=20_000)
    y, lam = project_convex_hull(op, np.array([2.0]))
    assert y[0] == pytest.approx(1.0, abs=1e-3)
    E = np.array([[0.0, 1.0], [0.0, 0.0]])
    op = ConvexHull(E, eta=_eta(E), n_iter=20_000)
    y, lam = project_convex_hull(op, np.array([0.5, 1.0]))
    np.testing.assert_allclose(y, [0.5, 0.0], atol=1e-3)
    np.testing.assert_allclose(lam, [0.5, 0.5], atol=1e-3)
    rng = np.random.default_rng(1)
    E = rng.normal(size=(4, 3))
    op = ConvexHull(E, eta=_eta(E), n_iter=20_000)
    y, lam = project_convex_hull(op, E[:, 1])
    np.testing.assert_allclose(y, E[:, 1], atol=1e-3)
    np.testing.assert_allclose(lam, [0, 1, 0], atol=1e-3)


def test_hull_matches_simplex_oracle_and_variational_inequality():
    rng = np.random.default_rng(7)
    for _ in range(30):
        d, M = int(rng.integers(1, 17)), int(rng.integers(1, 6))
        E = rng.normal(size=(d, M))
        x = rng.normal(scale=2.0, size=d)
        op = ConvexHull(E, eta=_eta(E), n_iter=10_000)
        y, lam = project_convex_hull(op, x)
        ref, _ = simplex_qp(E, x)
        assert np.max(np.abs(y - E @ ref)) <= 1e-3
        assert abs(lam.sum() - 1) < 1e-12 and np.all(lam >= 0)
        for _ in range(20):
            other = rng.dirichlet(np.ones(M))
            assert np.dot(x - y, E @ other - y) <= 1e-3


def test_hull_default_parameters_are_the_documented_ones():
    op = ConvexHull(np.eye(2))
    assert (op.eta, op.n_iter) == (1e-5, 10_000)
    y, lam = project_convex_hull(op, np.array([[0.3, 0.7], [0.2, 0.1]]))
    assert y.shape == (2, 2) and lam.shape == (2, 2)

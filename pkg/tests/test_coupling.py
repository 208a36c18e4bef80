import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from pcd.coupling import (
    AffineLogistic,
    CircleScene,
    DegenerateInputError,
    DppCosine,
    GaussianLikelihood,
    LogBarrier,
    Obstacle,
    PairwiseSum,
    SquaredHinge,
    WeightedSum,
    XorClassifier,
    dpp_cost,
    lb_cost,
    obstacle_cost,
    pairwise_sum,
    ps_wrap,
    shd_cost,
    xor_cost,
)
from pcd.schedules import ConfigurationError, DiffusionSchedule, make_linear_schedule
from pcd.scores import Gaussian, Mixture

from conftest import central_diff, grad_close

H = 5


def _check_cost(cost, xs, rtol=1e-5):
    """Compare each variable's gradient with central differences of the value."""
    _, grads = cost(xs)
    for i in range(len(xs)):
        def f(z, i=i):
            ys = list(xs)
            ys[i] = z
            return cost(ys)[0]

        num = central_diff(f, xs[i])
        assert grad_close(grads[i], num, rtol), (i, grads[i], num)


def _pair_points(rng, scale=1.0):
    X = rng.normal(scale=scale, size=(H, 2))
    Y = rng.normal(scale=scale, size=(H, 2))
    return X, Y


def _cos(X, Y):
    return float(np.sum(X * Y) / (np.linalg.norm(X) * np.linalg.norm(Y)))


def test_lb_gradient_random_points():
    rng = np.random.default_rng(0)
    cost = LogBarrier(0.7)
    for _ in range(20):
        _check_cost(cost, list(_pair_points(rng)))


def test_shd_gradient_random_points_away_from_kinks():
    rng = np.random.default_rng(1)
    cost = SquaredHinge(2.0)
    n = 0
    while n < 20:
        X, Y = _pair_points(rng)
        r = np.linalg.norm(X - Y, axis=-1)
        if np.any(np.abs(r - 2.0) < 1e-3) or np.any(r < 1e-3):
            continue
        _check_cost(cost, [X, Y])
        n += 1


def test_dpp_gradient_random_points():
    rng = np.random.default_rng(2)
    cost = DppCosine(0.1)
    n = 0
    while n < 20:
        X, Y = _pair_points(rng)
        if _cos(X, Y) + 0.1 < 0.1:  # keep cos + eps well above 0
            continue
        _check_cost(cost, [X, Y])
        n += 1


def test_xor_gradient_random_points():
    rng = np.random.default_rng(3)
    cost = XorClassifier(AffineLogistic(rng.normal(size=(H, 2)), 0.3))
    for _ in range(20):
        _check_cost(cost, list(_pair_points(rng)))


def test_obstacle_gradient_random_points():
    rng = np.random.default_rng(4)
    scene = CircleScene([[0.0, 0.0], [3.0, 1.0]], [1.0, 0.5])
    cost = Obstacle(scene, 1.0)
    n = 0
    while n < 20:
        xs = [rng.uniform(-2, 4, size=(H, 2)) for _ in range(3)]
        ok = True
        for X in xs:
            D = np.linalg.norm(X[:, None, :] - scene.centers, axis=-1) - scene.radii
            srt = np.sort(D, axis=-1)
            if np.any(np.abs(srt[:, 0] - 1.0) < 1e-3) or np.any(srt[:, 1] - srt[:, 0] < 1e-3):
                ok = False
        if ok:
            _check_cost(cost, xs)
            n += 1


def test_likelihood_weighted_and_pairwise_gradients():
    rng = np.random.default_rng(5)
    scene = CircleScene([[0.0, 0.0]], [1.0])
    weighted = WeightedSum(((1.0, PairwiseSum(LogBarrier(1.1))), (0.25, Obstacle(scene, 2.0))))
    for _ in range(20):
        _check_cost(GaussianLikelihood(0.4), [rng.normal(size=(1, 3)), rng.normal(size=(1, 3))])
        xs = [rng.normal(scale=2, size=(H, 2)) for _ in range(3)]
        _check_cost(weighted, xs)


def _ps_setups():
    sched = make_linear_schedule(10, 0.01, 0.3)
    rng = np.random.default_rng(6)
    gs = [Gaussian(rng.normal(size=(H, 2)), 0.5), Gaussian(rng.normal(size=(H, 2)), 1.5)]
    ms = [Mixture([0.4, 0.6], rng.normal(size=(2, H, 2)), [0.3, 0.8]) for _ in range(2)]
    return sched, gs, ms


PS_BASES = {
    "lb": LogBarrier(0.9),
    "shd": SquaredHinge(3.0),
    "dpp": DppCosine(0.5),
    "xor": XorClassifier(AffineLogistic(np.random.default_rng(8).normal(size=(H, 2)), -0.2)),
    "lik": GaussianLikelihood(0.7),
}


@pytest.mark.parametrize("base", list(PS_BASES.values()), ids=list(PS_BASES))
def test_ps_wrapper_gradient(base):
    sched, gs, ms = _ps_setups()
    rng = np.random.default_rng(7)
    for scores in (gs, ms):
        cost = ps_wrap(base, sched, scores)
        n = 0
        while n < 10:
            t = int(rng.integers(1, sched.T + 1))
            xs = [rng.normal(size=(H, 2)) for _ in range(2)]
            hats, _ = cost.denoise(xs, t)
            r = np.linalg.norm(hats[0] - hats[1], axis=-1)
            if isinstance(base, SquaredHinge) and (np.any(np.abs(r - 3.0) < 1e-3)):
                continue
            if isinstance(base, DppCosine) and _cos(*hats) + 0.5 < 0.1:
                continue
            _, grads = cost(xs, t)
            for i in range(2):
                def f(z, i=i):
                    ys = list(xs)
                    ys[i] = z
                    return cost(ys, t)[0]

                assert grad_close(grads[i], central_diff(f, xs[i]))
            n += 1


def test_ps_identity_at_zero_noise_and_conjugate_value():
    sched = DiffusionSchedule([0.0, 0.0], strict=False)
    rng = np.random.default_rng(8)
    gs = [Gaussian(rng.normal(size=(H, 2)), 0.5) for _ in range(2)]
    base = SquaredHinge(4.0)
    xs = [rng.normal(size=(H, 2)) for _ in range(2)]
    v, g = ps_wrap(base, sched, gs)(xs, 1)
    v0, g0 = base(xs)
    np.testing.assert_allclose(v, v0)
    for a, b in zip(g, g0):
        np.testing.assert_allclose(a, b)
    # squared distance evaluated at conjugate posterior means
    sched = make_linear_schedule(5, 0.05, 0.3)
    lik = GaussianLikelihood(1.0)
    t = 3
    v, _ = ps_wrap(lik, sched, gs)(xs, t)
    a = sched.bar_alpha_at(t)
    pm = [m.posterior_mean(x, a) for m, x in zip(gs, xs)]
    np.testing.assert_allclose(v, lik(pm)[0], rtol=1e-12)


def test_ps_stop_gradient_variant():
    sched = make_linear_schedule(5, 0.05, 0.3)
    gs = [Gaussian(np.zeros((H, 2)), 0.5) for _ in range(2)]
    rng = np.random.default_rng(9)
    xs = [rng.normal(size=(H, 2)) for _ in range(2)]
    cost = ps_wrap(LogBarrier(1.0), sched, gs, through_denoiser=False)
    hats, _ = cost.denoise(xs, 2)
    _, g = LogBarrier(1.0)(hats)
    _, g_ps = cost(xs, 2)
    for a, b in zip(g_ps, g):
        np.testing.assert_allclose(a, b / np.sqrt(sched.bar_alpha_at(2)))
    with pytest.raises(ConfigurationError):
        cost(xs, 6)
    with pytest.raises(ConfigurationError):
        ps_wrap(cost, sched, gs)


def test_lb_examples():
    v, gx, gy = lb_cost(np.array([[0.0, 0.0]]), np.array([[1.0, 0.0]]), 0.5)
    assert v == pytest.approx(-np.log(1.5))
    X = np.random.default_rng(0).normal(size=(H, 2))
    v, gx, gy = lb_cost(X, X, 1.0)
    assert v == 0.0
    assert not gx.any() and not gy.any()
    with pytest.raises(ConfigurationError):
        lb_cost(X, X, 0.0)
    with pytest.raises(ValueError):
        lb_cost(X, X[:3], 1.0)


def test_shd_examples():
    v, _, _ = shd_cost(np.array([[0.0, 0.0]]), np.array([[1.0, 0.0]]), 2.0)
    assert v == pytest.approx(1.0)
    X = np.zeros((H, 2))
    Y = X + np.array([3.0, 0.0])
    v, gx, gy = shd_cost(X, Y, 2.0)
    assert v == 0 and not gx.any() and not gy.any()
    # boundary: active, value and gradient zero
    v, gx, _ = shd_cost(X, X + np.array([2.0, 0.0]), 2.0)
    assert v == 0 and not gx.any()


def test_pairwise_examples_and_enumeration():
    rng = np.random.default_rng(10)
    X, Y = _pair_points(rng)
    base = SquaredHinge(3.0)
    v2, g2 = pairwise_sum(base.pair, [X, Y])
    v, gx, gy = base.pair(X, Y)
    assert v2 == v
    np.testing.assert_array_equal(g2[0], gx)
    np.testing.assert_array_equal(g2[1], gy)
    far = [np.zeros((H, 2)) + 10 * k for k in range(3)]
    v3, g3 = pairwise_sum(base.pair, far)
    assert v3 == 0 and not any(g.any() for g in g3)
    xs = [rng.normal(size=(H, 2)) for _ in range(3)]
    v3, g3 = PairwiseSum(base)(xs)
    v01, a0, a1 = base.pair(xs[0], xs[1])
    v02, b0, b2 = base.pair(xs[0], xs[2])
    v12, c1, c2 = base.pair(xs[1], xs[2])
    np.testing.assert_allclose(v3, v01 + v02 + v12)
    np.testing.assert_allclose(g3[0], a0 + b0)
    np.testing.assert_allclose(g3[1], a1 + c1)
    np.testing.assert_allclose(g3[2], b2 + c2)
    with pytest.raises(ConfigurationError):
        pairwise_sum(base.pair, [X])


def test_dpp_examples():
    X = np.random.default_rng(11).normal(size=(H, 2))
    assert dpp_cost(X, 2 * X, 1e-6)[0] == pytest.approx(-np.log(1 + 1e-6))
    A = np.array([[1.0, 0.0]])
    B = np.array([[0.0, 1.0]])
    assert dpp_cost(A, B, 1e-6)[0] == pytest.approx(-np.log(1e-6))
    with pytest.raises(DegenerateInputError):
        dpp_cost(np.zeros((H, 2)), X, 1e-6)
    with pytest.raises(DegenerateInputError):
        dpp_cost(A, -A, 1e-6)


class _Fixed:
    """Classifier with constant probabilities, for hand-checked XOR values."""

    def __init__(self, p):
        self.p = p

    def probs_and_jacobian(self, x):
        q = self.p(x)
        probs = np.array([q, 1 - q])
        return probs, np.zeros((2,) + np.shape(x))


def test_xor_examples():
    x, y = np.zeros(1), np.ones(1)
    clf = _Fixed(lambda z: 1.0 if z[0] == 0 else 0.0)
    assert xor_cost(x, y, clf)[0] == pytest.approx(-2.0)
    assert xor_cost(x, y, _Fixed(lambda z: 0.5))[0] == pytest.approx(-1.0)
    assert xor_cost(x, x, clf)[0] == 0.0
    assert xor_cost(y, y, clf)[0] == 0.0


def test_affine_logistic_probabilities():
    rng = np.random.default_rng(12)
    clf = AffineLogistic(rng.normal(size=(H, 2)), -0.4)
    p, _ = clf.probs_and_jacobian(rng.normal(size=(7, H, 2)))
    assert np.all((p > 0) & (p < 1))
    np.testing.assert_allclose(p.sum(-1), 1.0)


def test_obstacle_examples():
    scene = CircleScene([[0.0, 0.0]], [1.0])
    v, _ = obstacle_cost([np.array([[1.5, 0.0]])], scene, 1.0)
    assert v == pytest.approx(0.5)
    v, g = obstacle_cost([np.array([[5.0, 0.0]])], scene, 1.0)
    assert v == 0 and not g[0].any()
    v, g = obstacle_cost([np.ones((H, 2))], CircleScene.empty(), 1.0)
    assert v == 0


finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
trajs = arrays(np.float64, (3, 2), elements=finite)


@settings(max_examples=60)
@given(trajs, trajs, arrays(np.float64, (2,), elements=finite))
def test_lb_shd_symmetry_and_translation(X, Y, shift):
    for f, p in ((lb_cost, 0.8), (shd_cost, 4.0)):
        v, gx, gy = f(X, Y, p)
        v2, gy2, gx2 = f(Y, X, p)
        np.testing.assert_allclose(v, v2, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(gx, gx2, atol=1e-12)
        np.testing.assert_allclose(gy, gy2, atol=1e-12)
        v3, gx3, _ = f(X + shift, Y + shift, p)
        np.testing.assert_allclose(v3, v, rtol=1e-9, atol=1e-9)
        np.testing.assert_allclose(gx3, gx, atol=1e-6)


@settings(max_examples=60)
@given(trajs, trajs, st.floats(0.1, 10), st.floats(0.1, 10))
def test_dpp_symmetry_and_scale_invariance(X, Y, a, b):
    nx, ny = np.linalg.norm(X), np.linalg.norm(Y)
    if nx < 1e-3 or ny < 1e-3:
        return
    cos = np.sum(X * Y) / (nx * ny)
    if cos + 0.5 <= 1e-6:
        return
    v, gx, gy = dpp_cost(X, Y, 0.5)
    v2, gy2, gx2 = dpp_cost(Y, X, 0.5)
    np.testing.assert_allclose(v, v2, rtol=1e-12)
    np.testing.assert_allclose(gx, gx2, atol=1e-12)
    np.testing.assert_allclose(dpp_cost(a * X, b * Y, 0.5)[0], v, rtol=1e-9, atol=1e-12)


@settings(max_examples=40)
@given(trajs, trajs)
def test_xor_symmetry(X, Y):
    clf = AffineLogistic(np.arange(6.0).reshape(3, 2) / 10, 0.1)
    v, gx, gy = xor_cost(X, Y, clf)
    v2, gy2, gx2 = xor_cost(Y, X, clf)
    np.testing.assert_allclose(v, v2, rtol=1e-12)
    np.testing.assert_allclose(gx, gx2, atol=1e-12)
    np.testing.assert_allclose(gy, gy2, atol=1e-12)

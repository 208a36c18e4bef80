"""Differentiable coupling costs.

A cost is called with a sequence of per-variable arrays and returns
``(value, grads)``: ``value`` has the common batch shape and ``grads`` holds
one array per variable, shaped like that variable.  Trajectory costs take
arrays of shape ``(..., H, d)`` (one point per row); single points use
``H = 1``.

The two-argument functions (:func:`lb_cost`, :func:`shd_cost`, ...) return
``(value, grad_x, grad_y)`` directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .schedules import ConfigurationError, DiffusionSchedule
from .scores import ScoreModel


class DegenerateInputError(ValueError):
    """Raised when a cost is undefined at the given input."""


def _pair_geometry(X, Y):
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.shape[-2:] != Y.shape[-2:]:
        raise ValueError(f"horizon/dimension mismatch: {X.shape} vs {Y.shape}")
    D = X - Y
    r = np.linalg.norm(D, axis=-1)
    # unit direction; zero at coincident points (subgradient choice)
    unit = np.divide(D, r[..., None], out=np.zeros_like(D), where=r[..., None] > 0)
    return r, unit


def lb_cost(X, Y, alpha: float):
    """Log-barrier ``-sum_h log(|X_h - Y_h| + alpha)``."""
    if not alpha > 0:
        raise ConfigurationError("alpha must be positive")
    r, unit = _pair_geometry(X, Y)
    value = -np.sum(np.log(r + alpha), axis=-1)
    gX = -unit / (r + alpha)[..., None]
    return value, gX, -gX


def shd_cost(X, Y, rho: float):
    """Squared hinge ``sum_h 1[r_h <= rho] (r_h - rho)^2``."""
    if not rho > 0:
        raise ConfigurationError("rho must be positive")
    r, unit = _pair_geometry(X, Y)
    active = r <= rho
    gap = np.where(active, r - rho, 0.0)
    value = np.sum(gap**2, axis=-1)
    gX = 2.0 * gap[..., None] * unit
    return value, gX, -gX


def dpp_cost(X, Y, eps: float):
    """``-log(cos(X, Y) + eps)`` on the flattened trajectories."""
    if not eps > 0:
        raise ConfigurationError("eps must be positive")
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.shape[-2:] != Y.shape[-2:]:
        raise ValueError(f"horizon/dimension mismatch: {X.shape} vs {Y.shape}")
    x = X.reshape(X.shape[:-2] + (-1,))
    y = Y.reshape(Y.shape[:-2] + (-1,))
    nx = np.linalg.norm(x, axis=-1, keepdims=True)
    ny = np.linalg.norm(y, axis=-1, keepdims=True)
    if np.any(nx == 0) or np.any(ny == 0):
        raise DegenerateInputError("cosine similarity undefined for a zero vector")
    cos = np.sum(x * y, axis=-1, keepdims=True) / (nx * ny)
    arg = cos + eps
    if np.any(arg <= 0):
        raise DegenerateInputError("cos + eps must be positive")
    dx = y / (nx * ny) - cos * x / nx**2
    dy = x / (nx * ny) - cos * y / ny**2
    value = -np.log(arg[..., 0])
    return value, (-dx / arg).reshape(X.shape), (-dy / arg).reshape(Y.shape)


class Classifier:
    """Differentiable class-probability map."""

    def probs_and_jacobian(self, x):
        """Return probabilities ``(..., C)`` and their gradients ``(..., C, *event)``."""
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class AffineLogistic(Classifier):
    """Two-class logistic model ``p(class 0 | x) = sigmoid(<w, x> + bias)``.

    ``weights`` fixes the event shape of the inputs.
    """

    weights: np.ndarray
    bias: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))

    def probs_and_jacobian(self, x):
        x = np.asarray(x, dtype=float)
        w = self.weights
        axes = tuple(range(-w.ndim, 0))
        z = np.sum(x * w, axis=axes) + self.bias
        p = 0.5 * (1.0 + np.tanh(0.5 * z))  # overflow-free sigmoid
        probs = np.stack([p, 1.0 - p], axis=-1)
        dp = (p * (1.0 - p)).reshape(p.shape + (1,) * w.ndim) * w
        jac = np.stack([dp, -dp], axis=p.ndim)
        return probs, jac


def xor_cost(x, y, classifier: Classifier):
    """``-sum_a [p(a|x)(1 - p(a|y)) + p(a|y)(1 - p(a|x))]``."""
    px, jx = classifier.probs_and_jacobian(x)
    py, jy = classifier.probs_and_jacobian(y)
    value = -np.sum(px * (1.0 - py) + py * (1.0 - px), axis=-1)
    pad = (1,) * (jx.ndim - px.ndim)
    cx = -(1.0 - 2.0 * py).reshape(py.shape + pad)
    cy = -(1.0 - 2.0 * px).reshape(px.shape + pad)
    k = px.ndim - 1
    return value, np.sum(cx * jx, axis=k), np.sum(cy * jy, axis=k)


def gaussian_likelihood_cost(x, y, var: float):
    """``-log N(y; x, var I)`` summed over the last axis."""
    if not var > 0:
        raise ConfigurationError("observation variance must be positive")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = y - x
    value = 0.5 * np.sum(d * d, axis=-1) / var + 0.5 * x.shape[-1] * np.log(2 * np.pi * var)
    return value, -d / var, d / var


# --- signed distance scenes --------------------------------------------------


@dataclass(frozen=True, eq=False)
class CircleScene:
    """Signed distance to the closest of a set of discs.

    ``centers`` is ``(K, 2)`` and ``radii`` is ``(K,)``.  With several discs the
    field is the minimum over discs and its gradient is that of the argmin
    disc (lowest index on ties).  An empty scene has distance ``+inf``.
    """

    centers: np.ndarray
    radii: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=float).reshape(-1, 2)
        r = np.asarray(self.radii, dtype=float).reshape(-1)
        if c.shape[0] != r.size:
            raise ConfigurationError("one radius per centre required")
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "radii", r)

    @classmethod
    def empty(cls) -> "CircleScene":
        return cls(np.zeros((0, 2)), np.zeros(0))

    def __len__(self):
        return self.radii.size

    def sdf(self, p):
        """Distance ``(...)`` and gradient ``(..., 2)`` at points ``(..., 2)``."""
        p = np.asarray(p, dtype=float)
        if len(self) == 0:
            return np.full(p.shape[:-1], np.inf), np.zeros_like(p)
        D = p[..., None, :] - self.centers  # (..., K, 2)
        n = np.linalg.norm(D, axis=-1)
        phi = n - self.radii
        k = np.argmin(phi, axis=-1)
        dist = np.take_along_axis(phi, k[..., None], axis=-1)[..., 0]
        Dk = np.take_along_axis(D, k[..., None, None], axis=-2)[..., 0, :]
        nk = np.take_along_axis(n, k[..., None], axis=-1)[..., 0]
        grad = np.divide(Dk, nk[..., None], out=np.zeros_like(Dk), where=nk[..., None] > 0)
        return dist, grad


def obstacle_cost(xs: Sequence[np.ndarray], field: CircleScene, margin: float):
    """``sum_h sum_i 1[phi(X^i_h) <= margin] (margin - phi(X^i_h))``."""
    if not margin > 0:
        raise ConfigurationError("margin must be positive")
    value = 0.0
    grads = []
    for X in xs:
        phi, g = field.sdf(X)
        active = phi <= margin
        value = value + np.sum(np.where(active, margin - phi, 0.0), axis=-1)
        grads.append(np.where(active[..., None], -g, 0.0))
    return value, grads


def pairwise_sum(base, xs: Sequence[np.ndarray]):
    """Sum a two-argument cost over all pairs ``i < j``.

    ``base(X, Y)`` returns ``(value, grad_X, grad_Y)``.
    """
    if len(xs) < 2:
        raise ConfigurationError("pairwise sum needs at least two variables")
    value = 0.0
    grads = [np.zeros_like(np.asarray(x, dtype=float)) for x in xs]
    for i, j in combinations(range(len(xs)), 2):
        v, gi, gj = base(xs[i], xs[j])
        value = value + v
        grads[i] = grads[i] + gi
        grads[j] = grads[j] + gj
    return value, grads


# --- cost objects used by the samplers ---------------------------------------


class CouplingCost:
    """N-ary cost: ``cost(xs) -> (value, grads)``."""

    time_indexed = False

    def __call__(self, xs):
        raise NotImplementedError


class PairCost(CouplingCost):
    """A two-argument cost; with more than two variables it is summed over pairs."""

    def pair(self, X, Y):
        raise NotImplementedError

    def __call__(self, xs):
        if len(xs) == 2:
            v, gx, gy = self.pair(xs[0], xs[1])
            return v, [gx, gy]
        return pairwise_sum(self.pair, xs)


@dataclass(frozen=True)
class LogBarrier(PairCost):
    alpha: float

    def pair(self, X, Y):
        return lb_cost(X, Y, self.alpha)


@dataclass(frozen=True)
class SquaredHinge(PairCost):
    rho: float

    def pair(self, X, Y):
        return shd_cost(X, Y, self.rho)


@dataclass(frozen=True)
class DppCosine(PairCost):
    eps: float = 1e-6

    def pair(self, X, Y):
        return dpp_cost(X, Y, self.eps)


@dataclass(frozen=True)
class XorClassifier(PairCost):
    classifier: Classifier

    def pair(self, X, Y):
        return xor_cost(X, Y, self.classifier)


@dataclass(frozen=True)
class GaussianLikelihood(CouplingCost):
    """Negative log-likelihood of the second variable given the first."""

    var: float = 1.0

    def __call__(self, xs):
        if len(xs) != 2:
            raise ConfigurationError("likelihood cost couples exactly two variables")
        v, gx, gy = gaussian_likelihood_cost(xs[0], xs[1], self.var)
        return v, [gx, gy]


@dataclass(frozen=True)
class PairwiseSum(CouplingCost):
    """Explicit pairwise extension of a :class:`PairCost`."""

    base: PairCost

    def __call__(self, xs):
        return pairwise_sum(self.base.pair, xs)


@dataclass(frozen=True, eq=False)
class Obstacle(CouplingCost):
    field: CircleScene
    margin: float

    def __call__(self, xs):
        return obstacle_cost(xs, self.field, self.margin)


@dataclass(frozen=True)
class WeightedSum(CouplingCost):
    """``sum_k weight_k * cost_k``; terms are ``(weight, cost)`` pairs."""

    terms: tuple

    def __call__(self, xs):
        value = 0.0
        grads = [np.zeros_like(np.asarray(x, dtype=float)) for x in xs]
        for w, cost in self.terms:
            v, gs = cost(xs)
            value = value + w * v
            grads = [a + w * g for a, g in zip(grads, gs)]
        return value, grads


@dataclass(frozen=True, eq=False)
class PosteriorCost(CouplingCost):
    """Cost evaluated on Tweedie estimates of the clean variables.

    ``cost(xs, t)`` denoises each ``x^i`` with its score at step ``t`` and
    evaluates ``base`` there.  With ``through_denoiser`` the gradient follows
    the chain rule through the score (using its exact Hessian); otherwise
    the score is held fixed and only the ``1 / sqrt(abar_t)`` factor remains.
    """

    base: CouplingCost
    scores: tuple
    schedule: DiffusionSchedule
    through_denoiser: bool = True
    time_indexed = True

    def denoise(self, xs, t):
        abar = self.schedule.bar_alpha_at(t)
        hats, ss = [], []
        for x, model in zip(xs, self.scores):
            s = model.score(x, abar)
            ss.append(s)
            hats.append((np.asarray(x, dtype=float) + (1.0 - abar) * s) / np.sqrt(abar))
        return hats, ss

    def __call__(self, xs, t):
        if len(xs) != len(self.scores):
            raise ConfigurationError("one score model per variable required")
        abar = self.schedule.bar_alpha_at(t)
        hats, _ = self.denoise(xs, t)
        value, g_hat = self.base(hats)
        grads = []
        for x, g, model in zip(xs, g_hat, self.scores):
            if self.through_denoiser:
                g = g + (1.0 - abar) * model.hvp(x, g, abar)
            grads.append(g / np.sqrt(abar))
        return value, grads


def ps_wrap(
    base: CouplingCost,
    schedule: DiffusionSchedule,
    scores: Sequence[ScoreModel],
    through_denoiser: bool = True,
) -> PosteriorCost:
    """Posterior-sampling variant of ``base``."""
    if getattr(base, "time_indexed", False):
        raise ConfigurationError("cost is already time indexed")
    return PosteriorCost(base, tuple(scores), schedule, through_denoiser)

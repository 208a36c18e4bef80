"""Analytic score models with closed-form noised densities.

Every model describes a clean density ``p_0`` over arrays of a fixed event
shape.  Under the variance-preserving forward process a component
``N(mu, s2 I)`` becomes ``N(sqrt(abar) mu, (abar s2 + 1 - abar) I)``, so the
noised score stays closed form at every level.  Inputs may carry arbitrary
leading batch dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .schedules import ConfigurationError, DiffusionSchedule, NoiseLevel

LOG_2PI = float(np.log(2.0 * np.pi))


def _level(level) -> float:
    if level is None:
        return 1.0
    abar = float(level.bar_alpha if isinstance(level, NoiseLevel) else level)
    if not 0.0 < abar <= 1.0:
        raise ConfigurationError(f"bar_alpha must lie in (0, 1], got {abar}")
    return abar


class ScoreModel:
    """Base class.  Subclasses set ``shape`` and implement the three hooks."""

    shape: tuple[int, ...]

    @property
    def dim(self) -> int:
        return int(np.prod(self.shape))

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[x.ndim - len(self.shape):] != self.shape or x.ndim < len(self.shape):
            raise ValueError(f"expected trailing shape {self.shape}, got {x.shape}")
        return x

    @property
    def _axes(self):
        return tuple(range(-len(self.shape), 0))

    def score(self, x, level=None) -> np.ndarray:
        return self._score(self._check(x), _level(level))

    def log_density(self, x, level=None) -> np.ndarray:
        return self._log_density(self._check(x), _level(level))

    def hvp(self, x, v, level=None) -> np.ndarray:
        """Hessian of the noised log-density at ``x`` applied to ``v``."""
        return self._hvp(self._check(x), np.asarray(v, dtype=float), _level(level))


class Gaussian(ScoreModel):
    """Gaussian with diagonal covariance.

    Parameters
    ----------
    mean : array_like
        Mean; its shape is the event shape.
    var : float or array_like
        Variance, broadcastable to ``mean``.
    """

    def __init__(self, mean, var=1.0):
        self.mean = np.array(mean, dtype=float)
        if self.mean.ndim == 0:
            self.mean = self.mean.reshape(1)
        self.var = np.broadcast_to(np.asarray(var, dtype=float), self.mean.shape).copy()
        if np.any(self.var <= 0):
            raise ConfigurationError("variances must be positive")
        self.shape = self.mean.shape

    def noised(self, level=None):
        """Mean and variance of the noised marginal."""
        a = _level(level)
        return np.sqrt(a) * self.mean, a * self.var + (1.0 - a)

    def _score(self, x, a):
        m, v = self.noised(a)
        return -(x - m) / v

    def _log_density(self, x, a):
        m, v = self.noised(a)
        return -0.5 * np.sum((x - m) ** 2 / v + np.log(v) + LOG_2PI, axis=self._axes)

    def _hvp(self, x, g, a):
        _, v = self.noised(a)
        return -np.broadcast_to(g, x.shape) / v

    def posterior_mean(self, x, level) -> np.ndarray:
        """``E[x_0 | x_t = x]`` for the conjugate Gaussian pair."""
        a = _level(level)
        m, v = self.noised(a)
        return self.mean + np.sqrt(a) * self.var / v * (np.asarray(x, dtype=float) - m)


class NominalPath(Gaussian):
    """Trajectory prior: independent isotropic Gaussians around a nominal path.

    ``path`` has shape ``(H, 2)``; ``var`` is a scalar or per-waypoint ``(H,)``.
    """

    def __init__(self, path, var):
        path = np.asarray(path, dtype=float)
        if path.ndim != 2:
            raise ValueError("nominal path must be an (H, d) array")
        var = np.asarray(var, dtype=float)
        if var.ndim == 1:
            var = var[:, None]
        super().__init__(path, var)


class Mixture(ScoreModel):
    """Mixture of isotropic Gaussians ``sum_k w_k N(mu_k, s2_k I)``."""

    def __init__(self, weights, means, variances):
        w = np.asarray(weights, dtype=float)
        if w.ndim != 1 or np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ConfigurationError("mixture weights must be positive and sum to 1")
        means = np.asarray(means, dtype=float)
        if means.ndim == 1:
            means = means[:, None]
        s2 = np.asarray(variances, dtype=float).reshape(-1)
        if means.shape[0] != w.size or s2.size != w.size:
            raise ConfigurationError("weights, means and variances disagree on component count")
        if np.any(s2 <= 0):
            raise ConfigurationError("variances must be positive")
        self.weights, self.means, self.variances = w, means, s2
        self.shape = means.shape[1:]

    def _parts(self, x, a):
        k_shape = (-1,) + (1,) * len(self.shape)
        m = np.sqrt(a) * self.means  # (K, *shape)
        v = (a * self.variances + (1.0 - a)).reshape(k_shape)
        diff = m - np.expand_dims(x, -len(self.shape) - 1)
        axes = tuple(range(-len(self.shape), 0))
        logc = (
            np.log(self.weights)
            - 0.5 * np.sum(diff**2 / v, axis=axes)
            - 0.5 * self.dim * (np.log(v.reshape(-1)) + LOG_2PI)
        )
        return diff, v, logc

    def _log_density(self, x, a):
        _, _, logc = self._parts(x, a)
        return logsumexp(logc, axis=-1)

    def _resp(self, logc):
        return np.exp(logc - logsumexp(logc, axis=-1, keepdims=True))

    def _score(self, x, a):
        diff, v, logc = self._parts(x, a)
        r = self._resp(logc)
        r = r.reshape(r.shape + (1,) * len(self.shape))
        return np.sum(r * diff / v, axis=-len(self.shape) - 1)

    def _hvp(self, x, g, a):
        diff, v, logc = self._parts(x, a)
        r = self._resp(logc)
        pad = (1,) * len(self.shape)
        axes = tuple(range(-len(self.shape), 0))
        d = diff / v
        g_ = np.expand_dims(np.broadcast_to(g, x.shape), -len(self.shape) - 1)
        dg = np.sum(d * g_, axis=axes).reshape(r.shape + pad)
        rr = r.reshape(r.shape + pad)
        kax = -len(self.shape) - 1
        s = np.sum(rr * d, axis=kax)
        sg = np.sum(s * np.broadcast_to(g, x.shape), axis=axes).reshape(s.shape[: s.ndim - len(self.shape)] + pad)
        return np.sum(rr * (-g_ / v + d * dg), axis=kax) - s * sg


def score(model: ScoreModel, x, level: NoiseLevel | None = None) -> np.ndarray:
    """Gradient of the noised log-density of ``model`` at ``x``."""
    return model.score(x, level)


def log_density(model: ScoreModel, x, level: NoiseLevel | None = None) -> np.ndarray:
    """Fully normalised log of the noised density."""
    return model.log_density(x, level)


def tweedie_denoise(schedule: DiffusionSchedule, s, x, t: int) -> np.ndarray:
    """Posterior-mean estimate ``(x + (1 - abar_t) s) / sqrt(abar_t)``."""
    a = schedule.bar_alpha_at(t)
    return (np.asarray(x, dtype=float) + (1.0 - a) * np.asarray(s, dtype=float)) / np.sqrt(a)

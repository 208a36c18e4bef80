"""Variance-preserving DDPM noise schedules."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ConfigurationError(ValueError):
    """Raised for invalid sampler, schedule or scenario parameters."""


@dataclass(frozen=True)
class DiffusionSchedule:
    """Forward-process schedule indexed by ``t = 1..T``.

    Arrays are stored 0-based, so ``beta[t - 1]`` is the variance added at
    step ``t``.  ``bar_alpha`` is the cumulative product of ``alpha`` and
    ``posterior_var`` uses ``bar_alpha_0 = 1``.

    Parameters
    ----------
    beta : array_like, shape (T,)
        Per-step noise variances in ``(0, 1)``.
    strict : bool
        When False, ``beta = 0`` entries are accepted.  Only useful for
        degenerate test schedules where every step is noise free.
    """

    beta: np.ndarray
    strict: bool = True
    alpha: np.ndarray = field(init=False, repr=False)
    bar_alpha: np.ndarray = field(init=False, repr=False)
    posterior_var: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float).reshape(-1)
        if beta.size == 0:
            raise ConfigurationError("schedule needs at least one step")
        lo_ok = beta > 0 if self.strict else beta >= 0
        if not (np.all(lo_ok) and np.all(beta < 1)):
            raise ConfigurationError("beta values must lie in (0, 1)")
        alpha = 1.0 - beta
        bar_alpha = np.cumprod(alpha)
        prev = np.concatenate([[1.0], bar_alpha[:-1]])
        with np.errstate(invalid="ignore", divide="ignore"):
            post = np.where(1.0 - bar_alpha > 0, (1.0 - prev) / (1.0 - bar_alpha) * beta, 0.0)
        for name, arr in (("beta", beta), ("alpha", alpha), ("bar_alpha", bar_alpha), ("posterior_var", post)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def T(self) -> int:
        return int(self.beta.size)

    def check_step(self, t: int) -> int:
        if not 1 <= int(t) <= self.T:
            raise ConfigurationError(f"step {t} outside 1..{self.T}")
        return int(t)

    def alpha_at(self, t: int) -> float:
        return float(self.alpha[self.check_step(t) - 1])

    def bar_alpha_at(self, t: int) -> float:
        return float(self.bar_alpha[self.check_step(t) - 1])


def make_linear_schedule(T: int, beta_min: float, beta_max: float) -> DiffusionSchedule:
    """Linearly spaced betas from ``beta_min`` to ``beta_max`` inclusive."""
    if int(T) != T or T < 1:
        raise ConfigurationError(f"T must be a positive integer, got {T!r}")
    if not 0 < beta_min <= beta_max < 1:
        raise ConfigurationError(
            f"need 0 < beta_min <= beta_max < 1, got {beta_min}, {beta_max}"
        )
    return DiffusionSchedule(np.linspace(beta_min, beta_max, int(T)))


@dataclass(frozen=True)
class NoiseLevel:
    """Noise level at which a score is queried.

    ``bar_alpha = 1`` is the clean data distribution (used by LMC).
    """

    bar_alpha: float = 1.0
    step: int | None = None

    @classmethod
    def data(cls) -> "NoiseLevel":
        return cls(1.0, None)

    @classmethod
    def at_step(cls, schedule: DiffusionSchedule, t: int) -> "NoiseLevel":
        return cls(schedule.bar_alpha_at(t), int(t))

    @property
    def variance(self) -> float:
        """Variance of the injected noise, ``1 - bar_alpha``."""
        return 1.0 - self.bar_alpha

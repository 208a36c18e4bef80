"""Projected coupled diffusion over N variables: LMC, DDPM and DPS loops.

One loop per inference family.  Coupling (``gamma > 0`` with a cost) and
projection (non-identity operators) are pure configuration, so plain,
projected-only and coupled-only sampling all run through the same code.

Noise is drawn from :class:`~pcd.rng.NoiseStream` keyed by (variable, step)
and sliced per sample, and the batch is processed in fixed-size blocks.
Results are therefore bitwise identical for any number of workers.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .coupling import CouplingCost, GaussianLikelihood, ps_wrap
from .projections import Identity, Projection, Singleton
from .rng import NoiseStream
from .schedules import ConfigurationError, DiffusionSchedule
from .scores import Gaussian, ScoreModel


@dataclass(frozen=True, eq=False)
class CoupledVariable:
    name: str
    score: ScoreModel
    projection: Projection = field(default_factory=Identity)

    def __post_init__(self):
        shape = self.projection.shape
        if shape is not None and tuple(shape) != tuple(self.score.shape):
            raise ConfigurationError(
                f"{self.name}: projection shape {shape} does not match score shape {self.score.shape}"
            )

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.score.shape)

    @property
    def dim(self) -> int:
        return self.score.dim


@dataclass(frozen=True, eq=False)
class CoupledSystem:
    """Sampler configuration.

    ``schedule`` drives DDPM/DPS; ``step_size`` and ``n_steps`` drive LMC.
    ``noise_scale`` multiplies the DDPM noise standard deviation.
    """

    variables: tuple
    cost: CouplingCost | None = None
    gamma: float = 0.0
    schedule: DiffusionSchedule | None = None
    step_size: float | None = None
    n_steps: int | None = None
    noise_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        if len(self.variables) < 1:
            raise ConfigurationError("system needs at least one variable")
        if not self.gamma >= 0:
            raise ConfigurationError("gamma must be non-negative")
        if self.step_size is not None and not self.step_size > 0:
            raise ConfigurationError("LMC step size must be positive")
        if not self.noise_scale >= 1:
            raise ConfigurationError("noise scale k must be >= 1")

    @property
    def coupled(self) -> bool:
        return self.cost is not None and self.gamma > 0


@dataclass
class SampleBatch:
    """Final samples plus per-step projection convergence flags.

    ``converged`` has shape ``(B, n_steps + 1, N)``; index 0 is the projection
    of the initial draw.
    """

    samples: list
    converged: np.ndarray
    sampler: str
    seed: int
    names: tuple = ()

    @property
    def batch_size(self) -> int:
        return int(self.converged.shape[0])

    def __getitem__(self, name):
        return self.samples[self.names.index(name)]

    @property
    def sample_converged(self) -> np.ndarray:
        return self.converged.all(axis=(1, 2))

    @property
    def nonconverged_count(self) -> int:
        return int(np.count_nonzero(~self.converged))

    @property
    def projection_count(self) -> int:
        return int(self.converged.size)


BLOCK_SIZE = 2048


def _run_blocks(fn: Callable, system: CoupledSystem, B: int, n_steps: int, workers: int, name: str, block_size: int):
    if B < 1:
        raise ConfigurationError("batch size must be positive")
    bounds = [(s, min(s + block_size, B)) for s in range(0, B, block_size)]
    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda ab: fn(*ab), bounds))
    else:
        parts = [fn(a, b) for a, b in bounds]
    N = len(system.variables)
    samples = [np.concatenate([p[0][i] for p in parts], axis=0) for i in range(N)]
    conv = np.concatenate([p[1] for p in parts], axis=0)
    assert conv.shape == (B, n_steps + 1, N)
    return SampleBatch(samples, conv, name, system.seed, tuple(v.name for v in system.variables))


def _init(system, stream, a, b, conv):
    xs = []
    for i, var in enumerate(system.variables):
        x0 = stream.normal(i, 0, var.shape, a, b)
        x, ok = var.projection.apply(x0)
        conv[:, 0, i] = ok
        xs.append(x)
    return xs


def _coupling_grads(system, xs, t=None):
    if not system.coupled:
        return None
    if getattr(system.cost, "time_indexed", False):
        _, grads = system.cost(xs, t)
    else:
        _, grads = system.cost(xs)
    return grads


def run_pcd_lmc(system: CoupledSystem, B: int, noise: bool = True, workers: int = 1,
                block_size: int = BLOCK_SIZE) -> SampleBatch:
    """Projected coupled Langevin sampling.

    Each step updates every variable from its own current value::

        X <- Proj(X + delta * s(X) - gamma * delta * grad_X c + sqrt(2 delta) * eps)

    with the coupling gradient taken at the current joint iterate.
    """
    if system.step_size is None or system.n_steps is None:
        raise ConfigurationError("LMC needs step_size and n_steps")
    delta, T = float(system.step_size), int(system.n_steps)
    sq = np.sqrt(2.0 * delta)
    gd = system.gamma * delta

    def block(a, b):
        stream = NoiseStream(system.seed)
        conv = np.ones((b - a, T + 1, len(system.variables)), dtype=bool)
        xs = _init(system, stream, a, b, conv)
        for k in range(1, T + 1):
            grads = _coupling_grads(system, xs)
            new = []
            for i, (var, x) in enumerate(zip(system.variables, xs)):
                y = x + delta * var.score.score(x)
                if grads is not None:
                    y = y - gd * grads[i]
                if noise:
                    y = y + sq * stream.normal(i, k, var.shape, a, b)
                y, ok = var.projection.apply(y)
                conv[:, k, i] = ok
                new.append(y)
            xs = new
        return xs, conv

    return _run_blocks(block, system, B, T, workers, "lmc", block_size)


def _ddpm(system: CoupledSystem, B: int, noise: bool, workers: int, block_size: int, name: str):
    sched = system.schedule
    if sched is None:
        raise ConfigurationError(f"{name.upper()} needs a diffusion schedule")
    T = sched.T
    k_noise = float(system.noise_scale)

    def block(a, b):
        stream = NoiseStream(system.seed)
        conv = np.ones((b - a, T + 1, len(system.variables)), dtype=bool)
        xs = _init(system, stream, a, b, conv)
        for it, t in enumerate(range(T, 0, -1), start=1):
            alpha = float(sched.alpha[t - 1])
            abar = float(sched.bar_alpha[t - 1])
            grads = _coupling_grads(system, xs, t)
            new = []
            for i, (var, x) in enumerate(zip(system.variables, xs)):
                s = var.score.score(x, abar)
                y = (x + (1.0 - alpha) * s) / np.sqrt(alpha)
                if noise and t > 1:
                    y = y + np.sqrt(1.0 - alpha) * k_noise * stream.normal(i, it, var.shape, a, b)
                if grads is not None:
                    y = y - system.gamma * grads[i]
                y, ok = var.projection.apply(y)
                conv[:, it, i] = ok
                new.append(y)
            xs = new
        return xs, conv

    return _run_blocks(block, system, B, T, workers, name, block_size)


def run_pcd_ddpm(system: CoupledSystem, B: int, noise: bool = True, workers: int = 1,
                 block_size: int = BLOCK_SIZE) -> SampleBatch:
    """Projected coupled DDPM sampling.

    For ``t = T..1``: ancestral step with the noised score, noise scaled by
    ``noise_scale`` and dropped at ``t = 1``; then subtract
    ``gamma * grad c(X_t, ...)`` evaluated at the pre-step iterates; then project.
    """
    if system.coupled and getattr(system.cost, "time_indexed", False):
        raise ConfigurationError("DDPM takes a plain cost; use run_pcd_dps for posterior costs")
    return _ddpm(system, B, noise, workers, block_size, "ddpm")


def run_pcd_dps(system: CoupledSystem, B: int, noise: bool = True, workers: int = 1,
                block_size: int = BLOCK_SIZE, through_denoiser: bool = True) -> SampleBatch:
    """DDPM loop with the coupling cost evaluated on Tweedie estimates.

    A plain cost is wrapped with :func:`~pcd.coupling.ps_wrap` using the
    variables' own score models; an already wrapped cost is used as is.
    """
    if system.schedule is None:
        raise ConfigurationError("DPS needs a diffusion schedule")
    if system.cost is not None and not getattr(system.cost, "time_indexed", False):
        wrapped = ps_wrap(system.cost, system.schedule, [v.score for v in system.variables], through_denoiser)
        system = _replace(system, cost=wrapped)
    return _ddpm(system, B, noise, workers, block_size, "dps")


def _replace(system: CoupledSystem, **changes) -> CoupledSystem:
    kw = {f: getattr(system, f) for f in system.__dataclass_fields__}
    kw.update(changes)
    return CoupledSystem(**kw)


def cg_reduction_system(prior: ScoreModel, obs_var: float, y0, gamma: float, delta: float,
                        T: int, seed: int = 0) -> CoupledSystem:
    """Two-variable system whose LMC marginal in ``x`` is classifier guidance.

    ``y`` is pinned to ``y0`` by a singleton projection and the cost is the
    Gaussian negative log-likelihood of ``y0`` given ``x``, so ``x`` follows
    ``grad log[p(y0|x)^gamma p(x)]``.
    """
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    if y0.shape != tuple(prior.shape):
        raise ConfigurationError("observation must have the prior's shape")
    x_var = CoupledVariable("x", prior, Identity())
    y_var = CoupledVariable("y", Gaussian(np.zeros_like(y0), 1.0), Singleton(y0))
    return CoupledSystem(
        (x_var, y_var), GaussianLikelihood(obs_var), gamma, step_size=delta, n_steps=T, seed=seed
    )


def run_cg_reduction(prior: ScoreModel, obs_var: float, y0, gamma: float, delta: float, T: int,
                     B: int, seed: int = 0, workers: int = 1) -> SampleBatch:
    """Classifier guidance obtained as a special case of projected coupled LMC."""
    system = cg_reduction_system(prior, obs_var, y0, gamma, delta, T, seed)
    return run_pcd_lmc(system, B, workers=workers)


SAMPLERS = {"lmc": run_pcd_lmc, "ddpm": run_pcd_ddpm, "dps": run_pcd_dps}


def run(system: CoupledSystem, sampler: str, B: int, **kw) -> SampleBatch:
    try:
        fn = SAMPLERS[sampler]
    except KeyError:
        raise ConfigurationError(f"unknown sampler {sampler!r}") from None
    return fn(system, B, **kw)


def variables_from(scores: Sequence[ScoreModel], projections: Sequence[Projection] | None = None,
                   names: Sequence[str] | None = None) -> tuple:
    projections = projections or [Identity()] * len(scores)
    names = names or [f"x{i}" for i in range(len(scores))]
    return tuple(CoupledVariable(n, s, p) for n, s, p in zip(names, scores, projections))

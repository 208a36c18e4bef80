"""Scenario builders: the 1-D corridor toy problem and 2-D multi-robot navigation.

Navigation uses analytic nominal-path Gaussian priors in place of trained
trajectory models: a straight line from start to goal in ``empty`` and a
counterclockwise arc around the central disc in ``highways``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .coupling import (
    AffineLogistic,
    CircleScene,
    DppCosine,
    LogBarrier,
    Obstacle,
    SquaredHinge,
    WeightedSum,
    XorClassifier,
)
from .projections import Box, Identity, VelocityChain
from .samplers import CoupledSystem, CoupledVariable
from .schedules import ConfigurationError, DiffusionSchedule, make_linear_schedule
from .scores import Gaussian, NominalPath

COUPLING_KINDS = ("lb", "shd", "dpp", "xor", "none")


class EnvironmentTooCrowded(RuntimeError):
    """Rejection sampling ran out of budget."""


# --- corridor ----------------------------------------------------------------


@dataclass(frozen=True)
class CorridorSpec:
    """Two blocks whose centres must keep both blocks inside ``[0, length]``."""

    length: float = 9.0
    block_lengths: tuple = (6.0, 2.0)
    center: float = 4.5
    prior_std: tuple = (1.5, 1.5)

    def __post_init__(self):
        for L in self.block_lengths:
            if not 0 < L <= self.length:
                raise ConfigurationError(f"block of length {L} does not fit a corridor of length {self.length}")

    def bounds(self, i: int) -> tuple[float, float]:
        L = self.block_lengths[i]
        return L / 2.0, self.length - L / 2.0

    @property
    def overlap_threshold(self) -> float:
        return sum(self.block_lengths) / 2.0


CORRIDOR = CorridorSpec()


def corridor_cost(spec: CorridorSpec, kind: str):
    if kind == "shd":
        return SquaredHinge(spec.overlap_threshold)
    if kind == "lb":
        return LogBarrier(1.0)
    if kind == "dpp":
        return DppCosine(1e-6)
    if kind == "xor":
        # class 0 = "left of centre"; the cost rewards opposite sides
        return XorClassifier(AffineLogistic(np.array([[-2.0]]), 2.0 * spec.center))
    if kind == "none":
        return None
    raise ConfigurationError(f"unknown coupling kind {kind!r}")


def build_corridor(spec: CorridorSpec = CORRIDOR, coupling: str = "shd", gamma: float = 0.0,
                   projection: bool = True, step_size: float = 1e-2, n_steps: int = 3000,
                   schedule: DiffusionSchedule | None = None, seed: int = 0) -> CoupledSystem:
    """Two scalar block centres, each an event of shape ``(1, 1)``."""
    variables = []
    for i, name in enumerate(("big", "small")):
        lo, hi = spec.bounds(i)
        score = Gaussian(np.full((1, 1), spec.center), spec.prior_std[i] ** 2)
        proj = Box(np.full((1, 1), lo), np.full((1, 1), hi)) if projection else Identity()
        variables.append(CoupledVariable(name, score, proj))
    return CoupledSystem(
        tuple(variables), corridor_cost(spec, coupling), gamma,
        schedule=schedule, step_size=step_size, n_steps=n_steps, seed=seed,
    )


def corridor_indicators(spec: CorridorSpec, x, y):
    """Per-sample ``(overlap, violation)`` 0/1 arrays for block centres."""
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    overlap = np.abs(x - y) < spec.overlap_threshold
    (lx, hx), (ly, hy) = spec.bounds(0), spec.bounds(1)
    violation = (x < lx) | (x > hx) | (y < ly) | (y > hy)
    return overlap.astype(int), violation.astype(int)


CORRIDOR_GAMMA_GRID = (0.5, 1.0, 2.0, 5.0, 10.0, 20.0)


def corridor_gamma_sweep(spec: CorridorSpec = CORRIDOR, coupling: str = "shd",
                         gammas=CORRIDOR_GAMMA_GRID, batch_size: int = 1024, seed: int = 10_007,
                         **build_kw) -> tuple[float, dict]:
    """Pick the coupling strength with the lowest overlap rate on a tuning seed.

    Ties go to the smaller value.  Keep ``seed`` disjoint from evaluation
    seeds.  Returns ``(best_gamma, {gamma: overlap_rate})``.
    """
    from .samplers import run_pcd_lmc

    if len(gammas) == 0:
        raise ConfigurationError("empty gamma grid")
    rates = {}
    for g in gammas:
        batch = run_pcd_lmc(build_corridor(spec, coupling, float(g), seed=seed, **build_kw), batch_size)
        overlap, _ = corridor_indicators(spec, batch.samples[0], batch.samples[1])
        rates[float(g)] = float(overlap.mean())
    best = min(rates, key=lambda g: (rates[g], g))
    return best, rates


# --- navigation --------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class NavEnvironment:
    name: str
    half_width: float
    scene: CircleScene = field(default_factory=CircleScene.empty)
    robot_radius: float = 0.6

    def __post_init__(self):
        if not self.robot_radius > 0:
            raise ConfigurationError("robot radius must be positive")
        if len(self.scene) and np.any(np.abs(self.scene.centers) + self.scene.radii[:, None] > self.half_width):
            raise ConfigurationError("obstacles must lie inside the workspace")

    def pattern(self, goal) -> metrics.PatternField:
        if self.name == "highways":
            return metrics.counterclockwise(self.scene.centers[0])
        return metrics.toward_goal(goal)

    def is_free(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        inside = np.all(np.abs(p) <= self.half_width - self.robot_radius, axis=-1)
        phi, _ = self.scene.sdf(p)
        return inside & (phi > self.robot_radius)


def make_environment(name: str, half_width: float = 12.0, robot_radius: float = 0.6,
                     obstacle_radius: float = 4.0) -> NavEnvironment:
    """Preset environments ``empty`` and ``highways``."""
    if name == "empty":
        return NavEnvironment("empty", half_width, CircleScene.empty(), robot_radius)
    if name == "highways":
        return NavEnvironment("highways", half_width, CircleScene([[0.0, 0.0]], [obstacle_radius]), robot_radius)
    raise ConfigurationError(f"unknown environment {name!r}")


# maximum velocities carried over from the benchmark tables
VMAX_PRESETS = {"empty": (0.703, 0.692, 0.675), "highways": (0.878, 0.781, 0.647)}


@dataclass(frozen=True)
class InitialConfiguration:
    starts: np.ndarray
    goals: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.starts, dtype=float).reshape(-1, 2)
        g = np.asarray(self.goals, dtype=float).reshape(-1, 2)
        if s.shape != g.shape:
            raise ConfigurationError("one goal per start required")
        object.__setattr__(self, "starts", s)
        object.__setattr__(self, "goals", g)

    @property
    def n_robots(self) -> int:
        return self.starts.shape[0]


def _separated(p, others, min_dist):
    return all(np.linalg.norm(p - q) > min_dist for q in others)


def sample_initial_configuration(env: NavEnvironment, n_robots: int, seed: int,
                                 max_tries: int = 100_000) -> InitialConfiguration:
    """Starts and goals uniform over free space by rejection sampling.

    Starts are pairwise more than ``2R`` apart, and so are goals.
    """
    if n_robots < 1:
        raise ConfigurationError("need at least one robot")
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(0xC0F1,)))
    lim = env.half_width - env.robot_radius
    pts = {"starts": [], "goals": []}
    tries = 0
    for key in ("starts", "goals"):
        while len(pts[key]) < n_robots:
            tries += 1
            if tries > max_tries:
                raise EnvironmentTooCrowded(f"could not place {n_robots} robots in {env.name}")
            p = rng.uniform(-lim, lim, size=2)
            if env.is_free(p) and _separated(p, pts[key], 2 * env.robot_radius):
                pts[key].append(p)
    return InitialConfiguration(np.array(pts["starts"]), np.array(pts["goals"]))


def head_on_configuration(env: NavEnvironment, seed: int, half_length: float = 9.0,
                          jitter: float = 1.0) -> InitialConfiguration:
    """Two robots swapping ends of a random segment through the middle."""
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(0x4EAD,)))
    for _ in range(10_000):
        c = rng.uniform(-jitter, jitter, size=2)
        th = rng.uniform(0, 2 * np.pi)
        u = np.array([np.cos(th), np.sin(th)])
        a, b = c - half_length * u, c + half_length * u
        if env.is_free(a) and env.is_free(b):
            return InitialConfiguration(np.array([a, b]), np.array([b, a]))
    raise EnvironmentTooCrowded("no free head-on segment found")


def _pattern_curve(env: NavEnvironment, start, goal, n: int = 2049) -> np.ndarray:
    """Dense polyline of the environment's motion pattern from start to goal."""
    u = np.linspace(0.0, 1.0, n)
    if env.name != "highways":
        return start + u[:, None] * (goal - start)
    c = env.scene.centers[0]
    ds, dg = start - c, goal - c
    rs, rg = np.linalg.norm(ds), np.linalg.norm(dg)
    ts, tg = np.arctan2(ds[1], ds[0]), np.arctan2(dg[1], dg[0])
    sweep = (tg - ts) % (2 * np.pi)
    if sweep == 0.0:
        sweep = 2 * np.pi
    theta = ts + u * sweep
    r = rs + u * (rg - rs)
    return c + r[:, None] * np.stack([np.cos(theta), np.sin(theta)], axis=-1)


def nominal_path(env: NavEnvironment, start, goal, horizon: int, max_step: float | None = None) -> np.ndarray:
    """Waypoints ``1..H`` along the environment's motion pattern.

    Empty uses the straight segment and Highways a counterclockwise arc around
    the central disc with linearly interpolated radius.  Progress is uniform in
    arc length.  With ``max_step`` set, no step is longer than it, so a path
    too long for the horizon stops short of the goal.
    """
    start = np.asarray(start, dtype=float)
    goal = np.asarray(goal, dtype=float)
    curve = _pattern_curve(env, start, goal)
    seg = np.linalg.norm(np.diff(curve, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    total = arc[-1]
    step = total / horizon
    if max_step is not None:
        step = min(step, float(max_step))
    s = np.minimum(np.arange(1, horizon + 1) * step, total)
    return np.stack([np.interp(s, arc, curve[:, k]) for k in range(2)], axis=-1)


@dataclass(frozen=True)
class NavSettings:
    """Trajectory, prior and solver parameters shared by navigation runs."""

    horizon: int = 48
    dt: float = 1.0
    prior_std: float = 0.3
    nominal_speed_fraction: float = 0.8
    obstacle_margin_factor: float = 2.0
    admm_penalty: float = 10.0
    admm_max_iter: int = 700
    admm_tol: float = 2e-5


def nav_cost(env: NavEnvironment, kind: str, gamma: float, n_robots: int, settings: NavSettings):
    """``lambda_robo * pairwise(base) + lambda_obst * obstacle``.

    ``lambda_robo = 1`` and ``lambda_obst = 0.1 / gamma``; returns None when
    ``gamma == 0`` or nothing remains to couple.
    """
    if gamma <= 0 or kind == "none":
        return None
    R = env.robot_radius
    terms = []
    if n_robots >= 2:
        if kind == "shd":
            base = SquaredHinge(6.0 * R)
        elif kind == "lb":
            base = LogBarrier(1.9 * R)
        elif kind == "dpp":
            # eps above 1 keeps the cost finite for opposed trajectories
            base = DppCosine(1.01)
        elif kind == "xor":
            # splits robots by which half of the workspace their mean x falls in
            w = np.zeros((settings.horizon, 2))
            w[:, 0] = 1.0 / settings.horizon
            base = XorClassifier(AffineLogistic(w, 0.0))
        else:
            raise ConfigurationError(f"unknown coupling kind {kind!r}")
        terms.append((1.0, base))
    elif kind not in COUPLING_KINDS:
        raise ConfigurationError(f"unknown coupling kind {kind!r}")
    if len(env.scene):
        terms.append((0.1 / gamma, Obstacle(env.scene, settings.obstacle_margin_factor * R)))
    if not terms:
        return None
    return WeightedSum(tuple(terms))


def default_nav_schedule() -> DiffusionSchedule:
    return make_linear_schedule(25, 1e-3, 0.5)


def build_nav_system(env: NavEnvironment, config: InitialConfiguration, coupling: str = "shd",
                     gamma: float = 0.0, v_max: float = 0.703, schedule: DiffusionSchedule | None = None,
                     projection: bool = True, settings: NavSettings = NavSettings(),
                     step_size: float | None = None, n_steps: int | None = None,
                     seed: int = 0) -> CoupledSystem:
    """One trajectory variable per robot with a velocity-chain projection."""
    if not np.all(env.is_free(config.starts)) or not np.all(env.is_free(config.goals)):
        raise ConfigurationError("start or goal is not in free space")
    H = settings.horizon
    variables = []
    for i, (s, g) in enumerate(zip(config.starts, config.goals)):
        cap = settings.nominal_speed_fraction * v_max * settings.dt
        prior = NominalPath(nominal_path(env, s, g, H, cap), settings.prior_std**2)
        if projection:
            proj = VelocityChain(s, v_max, settings.dt, H, settings.admm_penalty,
                                 settings.admm_max_iter, settings.admm_tol)
        else:
            proj = Identity()
        variables.append(CoupledVariable(f"robot{i}", prior, proj))
    return CoupledSystem(
        tuple(variables),
        nav_cost(env, coupling, gamma, config.n_robots, settings),
        gamma,
        schedule=schedule if schedule is not None else default_nav_schedule(),
        step_size=step_size,
        n_steps=n_steps,
        seed=seed,
    )

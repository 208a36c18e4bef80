"""Trajectory dissimilarity and constraint/collision indicators."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .coupling import CircleScene


def _as_points(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2 or a.shape[0] == 0:
        raise ValueError("trajectory must be a non-empty (H, d) array")
    if not np.all(np.isfinite(a)):
        raise ValueError("trajectory has non-finite entries")
    return a


def dtw(a, b) -> float:
    """Dynamic time warping distance, Euclidean local cost, unnormalised.

    Steps are match, insertion and deletion with unit weights.
    """
    a, b = _as_points(a), _as_points(b)
    cost = cdist(a, b).tolist()
    n, m = len(cost), len(cost[0])
    inf = float("inf")
    prev = [inf] * (m + 1)
    prev[0] = 0.0
    for i in range(n):
        row = cost[i]
        cur = [inf] * (m + 1)
        for j in range(m):
            cur[j + 1] = row[j] + min(prev[j], prev[j + 1], cur[j])
        prev = cur
    return prev[m]


def dfd(a, b) -> float:
    """Discrete Frechet distance."""
    a, b = _as_points(a), _as_points(b)
    cost = cdist(a, b).tolist()
    n, m = len(cost), len(cost[0])
    inf = float("inf")
    prev = [inf] * (m + 1)
    prev[0] = -inf  # lets the (0, 0) cell take its own cost
    for i in range(n):
        row = cost[i]
        cur = [inf] * (m + 1)
        for j in range(m):
            best = min(prev[j], prev[j + 1], cur[j])
            cur[j + 1] = row[j] if row[j] > best else best
        prev = cur
        prev[0] = inf
    return prev[m]


def displacements(traj, x0) -> np.ndarray:
    """Step lengths ``|X_1 - x0|, |X_2 - X_1|, ...`` over the last two axes."""
    traj = np.asarray(traj, dtype=float)
    start = np.broadcast_to(np.asarray(x0, dtype=float), traj[..., :1, :].shape)
    return np.linalg.norm(np.diff(np.concatenate([start, traj], axis=-2), axis=-2), axis=-1)


def constraint_satisfaction(traj, x0, v_max: float, dt: float = 1.0, rel_slack: float = 1e-6):
    """1 if every displacement is within ``v_max * dt`` (relative slack ``rel_slack``).

    Accepts a single ``(H, 2)`` trajectory or a batch ``(..., H, 2)``.
    """
    if not v_max > 0:
        raise ValueError("v_max must be positive")
    ok = np.all(displacements(traj, x0) <= v_max * dt * (1.0 + rel_slack), axis=-1)
    return ok.astype(int) if np.ndim(ok) else int(ok)


def min_pairwise_distance(trajs: Sequence[np.ndarray]) -> np.ndarray:
    """Smallest same-step distance over all robot pairs; ``inf`` for one robot."""
    trajs = [np.asarray(t, dtype=float) for t in trajs]
    if any(t.shape[-2] != trajs[0].shape[-2] for t in trajs):
        raise ValueError("trajectories must share a horizon")
    best = np.full(trajs[0].shape[:-2], np.inf)
    for i in range(len(trajs)):
        for j in range(i + 1, len(trajs)):
            d = np.linalg.norm(trajs[i] - trajs[j], axis=-1).min(axis=-1)
            best = np.minimum(best, d)
    return best


def inter_robot_safety(trajs: Sequence[np.ndarray], radius: float):
    """1 if no two robots are within ``2 * radius`` at any step."""
    ok = min_pairwise_distance(trajs) > 2.0 * radius
    return ok.astype(int) if np.ndim(ok) else int(ok)


def obstacle_safe(trajs: Sequence[np.ndarray], field: CircleScene, radius: float):
    """1 if every waypoint of every robot keeps signed distance above ``radius``."""
    ok = None
    for t in trajs:
        phi, _ = field.sdf(np.asarray(t, dtype=float))
        o = np.all(phi > radius, axis=-1)
        ok = o if ok is None else ok & o
    return ok.astype(int) if np.ndim(ok) else int(ok)


def success_rate(per_config: Sequence[np.ndarray]) -> float:
    """Mean over configurations of "at least one collision-free tuple".

    ``per_config`` holds, for each initial configuration, the 0/1 collision-free
    indicators of its sampled tuples.
    """
    if len(per_config) == 0:
        raise ValueError("no configurations")
    hits = []
    for flags in per_config:
        flags = np.asarray(flags)
        if flags.size == 0:
            raise ValueError("empty batch for a configuration")
        hits.append(bool(np.any(flags)))
    return float(np.mean(hits))


PatternField = Callable[[np.ndarray], np.ndarray]


def toward_goal(goal) -> PatternField:
    """Direction field pointing from each point to ``goal`` (Empty pattern)."""
    goal = np.asarray(goal, dtype=float)
    return lambda p: goal - np.asarray(p, dtype=float)


def counterclockwise(center) -> PatternField:
    """Counterclockwise tangent field around ``center`` (Highways pattern)."""
    center = np.asarray(center, dtype=float)

    def field(p):
        d = np.asarray(p, dtype=float) - center
        return np.stack([-d[..., 1], d[..., 0]], axis=-1)

    return field


def data_adherence_proxy(traj, x0, pattern: PatternField):
    """Fraction of steps whose displacement agrees with the motion pattern.

    This is a stand-in for a learned-data adherence score: a step counts when
    its displacement has a positive inner product with the pattern field at
    the waypoint it leaves from.
    """
    traj = np.asarray(traj, dtype=float)
    start = np.broadcast_to(np.asarray(x0, dtype=float), traj[..., :1, :].shape)
    pts = np.concatenate([start, traj], axis=-2)
    steps = np.diff(pts, axis=-2)
    agree = np.sum(steps * pattern(pts[..., :-1, :]), axis=-1) > 0
    return agree.mean(axis=-1)

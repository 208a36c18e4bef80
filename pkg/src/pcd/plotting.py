"""Deterministic SVG rendering of run cells."""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from matplotlib.figure import Figure
from matplotlib.patches import Circle

from . import metrics
from .coupling import CircleScene


@dataclass
class CellData:
    """Raw samples of one run cell, enough to redraw it.

    ``samples`` is ``(C, N, B, H, 2)`` for navigation (configurations, robots,
    batch, horizon) and ``(2, B)`` for the corridor.
    """

    scenario: str
    gamma: float
    samples: np.ndarray
    starts: np.ndarray = field(default_factory=lambda: np.zeros((0, 0, 2)))
    goals: np.ndarray = field(default_factory=lambda: np.zeros((0, 0, 2)))
    obstacle_centers: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    obstacle_radii: np.ndarray = field(default_factory=lambda: np.zeros(0))
    robot_radius: float = 0.0
    v_max: float = np.inf
    dt: float = 1.0
    half_width: float = 0.0
    bounds: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        np.savez(buf, **{k: np.asarray(v) for k, v in self.__dict__.items()})
        return buf.getvalue()

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "CellData":
        with np.load(path, allow_pickle=False) as z:
            kw = {k: z[k] for k in z.files}
        kw["scenario"] = str(kw["scenario"])
        for k in ("gamma", "robot_radius", "v_max", "dt", "half_width"):
            kw[k] = float(kw[k])
        return cls(**kw)


def _svg_bytes(fig: Figure) -> bytes:
    buf = io.BytesIO()
    with _fixed_salt():
        fig.savefig(buf, format="svg", metadata={"Date": None})
    return buf.getvalue()


class _fixed_salt:
    """Pin matplotlib's SVG id salt so repeated renders are byte-identical."""

    def __enter__(self):
        import matplotlib

        self._old = matplotlib.rcParams["svg.hashsalt"]
        matplotlib.rcParams["svg.hashsalt"] = "pcd"

    def __exit__(self, *exc):
        import matplotlib

        matplotlib.rcParams["svg.hashsalt"] = self._old


def _plot_corridor(ax, cell: CellData):
    s = np.asarray(cell.samples, dtype=float)
    if s.ndim != 2 or s.shape[0] != 2:
        raise ValueError("corridor cell needs samples of shape (2, B)")
    bins = np.linspace(0.0, 9.0, 46)
    for row, label, color in ((s[0], "block 6", "tab:orange"), (s[1], "block 2", "tab:blue")):
        if row.size:
            ax.hist(row, bins=bins, density=True, alpha=0.5, color=color, label=label)
    for lo, hi in np.asarray(cell.bounds).reshape(-1, 2):
        ax.axvspan(lo, hi, color="0.9", zorder=0)
    ax.set_xlim(0, 9)
    ax.set_xlabel("block centre")
    ax.set_ylabel("density")
    if s.size:
        ax.legend(loc="upper right")


def _plot_nav(ax, cell: CellData, config: int, max_tuples: int):
    s = np.asarray(cell.samples, dtype=float)
    if s.ndim != 5 or s.shape[-1] != 2:
        raise ValueError("navigation cell needs samples of shape (C, N, B, H, 2)")
    w = cell.half_width
    if w > 0:
        ax.set_xlim(-w, w)
        ax.set_ylim(-w, w)
    ax.set_aspect("equal")
    for c, r in zip(np.asarray(cell.obstacle_centers).reshape(-1, 2), np.asarray(cell.obstacle_radii).reshape(-1)):
        ax.add_patch(Circle(c, r, color="0.6"))
    if s.shape[0] == 0 or s.shape[2] == 0:
        return
    trajs = s[config][:, :max_tuples]  # (N, b, H, 2)
    starts = np.asarray(cell.starts)[config]
    goals = np.asarray(cell.goals)[config]
    colors = [f"C{i % 10}" for i in range(trajs.shape[0])]
    for i, (tr, x0) in enumerate(zip(trajs, starts)):
        for one in tr:
            pts = np.vstack([x0, one])
            ax.plot(pts[:, 0], pts[:, 1], color=colors[i], lw=0.6, alpha=0.6)
            d = metrics.displacements(one, x0)
            bad = d > cell.v_max * cell.dt * (1 + 1e-6)
            if bad.any():
                ax.plot(one[bad, 0], one[bad, 1], "*", color="blue", ms=6)
        ax.plot(*x0, "o", color=colors[i], ms=5)
        ax.plot(*goals[i], "s", color=colors[i], ms=5)
    # red crosses where two robots come within 2R, or a robot touches an obstacle
    scene = CircleScene(np.asarray(cell.obstacle_centers).reshape(-1, 2), np.asarray(cell.obstacle_radii).reshape(-1))
    R = cell.robot_radius
    for b in range(trajs.shape[1]):
        for i in range(trajs.shape[0]):
            for j in range(i + 1, trajs.shape[0]):
                hit = np.linalg.norm(trajs[i, b] - trajs[j, b], axis=-1) <= 2 * R
                if hit.any():
                    mid = 0.5 * (trajs[i, b][hit] + trajs[j, b][hit])
                    ax.plot(mid[:, 0], mid[:, 1], "x", color="red", ms=6)
            if len(scene):
                phi, _ = scene.sdf(trajs[i, b])
                hit = phi <= R
                if hit.any():
                    ax.plot(trajs[i, b][hit, 0], trajs[i, b][hit, 1], "x", color="red", ms=6)


def emit_plot(cell: CellData, path, config: int = 0, max_tuples: int = 16) -> Path:
    """Write an SVG of ``cell`` to ``path`` and return the path.

    Navigation cells show the first ``max_tuples`` sampled tuples of one
    configuration, with red crosses at collisions and blue stars at
    waypoints that break the speed limit.  Corridor cells show histograms of
    the two block centres over their feasible ranges.
    """
    fig = Figure(figsize=(5, 5) if cell.scenario != "corridor" else (6, 3))
    ax = fig.add_subplot(1, 1, 1)
    if cell.scenario == "corridor":
        _plot_corridor(ax, cell)
    elif cell.scenario in ("empty", "highways"):
        _plot_nav(ax, cell, config, max_tuples)
    else:
        raise ValueError(f"cannot plot scenario {cell.scenario!r}")
    ax.set_title(f"{cell.scenario}, gamma = {cell.gamma:g}")
    fig.tight_layout()
    path = Path(path)
    path.write_bytes(_svg_bytes(fig))
    return path

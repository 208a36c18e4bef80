"""Configuration-driven experiment harness.

A run is described in YAML::

    scenario: empty          # corridor | empty | highways
    coupling: shd            # lb | shd | dpp | xor | none
    sampler: ddpm            # lmc | ddpm | dps
    gammas: [0.0, 1.0]       # "auto" (corridor only) picks gamma by sweep
    batch_size: 128
    seeds: [0]
    robots: 2
    configurations: 4

Every ``(gamma, seed)`` pair is one cell.  Each cell writes one CSV row per
sample (or sample tuple), and the run adds a JSON summary with means and
standard deviations per cell.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from itertools import combinations
from pathlib import Path

import numpy as np
import yaml

from . import metrics, scenarios
from .plotting import CellData, emit_plot
from .samplers import run
from .schedules import ConfigurationError, make_linear_schedule

CSV_COLUMNS = (
    "cell", "scenario", "sampler", "coupling", "gamma", "seed", "config_index", "sample",
    "su", "rs", "cs", "dtw", "dfd", "obstacle_safe", "da_proxy", "overlap", "converged",
)
METRIC_COLUMNS = ("su", "rs", "cs", "dtw", "dfd", "obstacle_safe", "da_proxy", "overlap", "converged")
OUTPUT_ROOT_ENV = "PCD_OUTPUT_ROOT"

SCENARIOS = ("corridor", "empty", "highways")
SAMPLER_NAMES = ("lmc", "ddpm", "dps")


class ConfigError(ConfigurationError):
    """Invalid run configuration; ``key`` and ``line`` locate the problem."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        where = []
        if key is not None:
            where.append(f"key {key!r}")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.key = key
        self.line = line


@dataclass(frozen=True)
class ScheduleConfig:
    steps: int = 25
    beta_min: float = 1e-3
    beta_max: float = 0.5


@dataclass(frozen=True)
class LmcConfig:
    step_size: float = 1e-2
    n_steps: int = 3000


@dataclass(frozen=True)
class RunConfig:
    scenario: str
    name: str = ""
    coupling: str = "shd"
    sampler: str = ""
    gammas: tuple = (0.0,)
    projection: bool = True
    batch_size: int = 64
    seeds: tuple = (0,)
    robots: int = 2
    configurations: int = 1
    config_seed: int = 0
    head_on: bool = False
    v_max: float | None = None
    noise_scale: float = 1.0
    schedule: ScheduleConfig | None = None
    lmc: LmcConfig = LmcConfig()
    nav: scenarios.NavSettings = scenarios.NavSettings()
    output: str = ""
    plots: bool = False
    workers: int = 1

    @property
    def label(self) -> str:
        return self.name or self.scenario


@dataclass(frozen=True)
class RunPlan:
    cell: str
    gamma: float | str
    seed: int


_NESTED = {"schedule": ScheduleConfig, "lmc": LmcConfig, "nav": scenarios.NavSettings}


def _key_lines(text: str) -> dict:
    """Map dotted key paths to 1-based line numbers."""
    out = {}
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError:
        return out

    def walk(node, prefix):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                path = f"{prefix}{k.value}"
                out[path] = k.start_mark.line + 1
                walk(v, path + ".")

    if root is not None:
        walk(root, "")
    return out


def _typed(value, kind, key, line):
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError("expected true or false", key, line)
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError("expected an integer", key, line)
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError("expected a number", key, line)
        return float(value)
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError("expected a string", key, line)
        return value
    raise AssertionError(kind)


_TOP_TYPES = {
    "scenario": str, "name": str, "coupling": str, "sampler": str, "projection": bool,
    "batch_size": int, "robots": int, "configurations": int, "config_seed": int,
    "head_on": bool, "v_max": float, "noise_scale": float, "output": str, "plots": bool,
    "workers": int,
}
_NESTED_TYPES = {
    "schedule": {"steps": int, "beta_min": float, "beta_max": float},
    "lmc": {"step_size": float, "n_steps": int},
    "nav": {f.name: (int if f.type in ("int", int) else float) for f in fields(scenarios.NavSettings)},
}


def parse_config(text: str) -> RunConfig:
    """Parse and validate YAML run configuration text.

    Unknown keys are rejected.  Errors carry the offending key and, when it
    can be located, its line.
    """
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"malformed configuration: {getattr(exc, 'problem', exc)}",
                          line=mark.line + 1 if mark else None) from None
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping")
    lines = _key_lines(text)
    kw = {}
    for key, value in data.items():
        line = lines.get(str(key))
        if key in _TOP_TYPES:
            kw[key] = _typed(value, _TOP_TYPES[key], key, line)
        elif key in ("gammas", "seeds"):
            if not isinstance(value, list) or not value:
                raise ConfigError("expected a nonempty list", key, line)
            if key == "seeds":
                kw[key] = tuple(_typed(v, int, key, line) for v in value)
            else:
                kw[key] = tuple(v if v == "auto" else _typed(v, float, key, line) for v in value)
        elif key in _NESTED:
            if not isinstance(value, dict):
                raise ConfigError("expected a mapping", key, line)
            sub = {}
            for k, v in value.items():
                path = f"{key}.{k}"
                if k not in _NESTED_TYPES[key]:
                    raise ConfigError("unknown key", path, lines.get(path))
                sub[k] = _typed(v, _NESTED_TYPES[key][k], path, lines.get(path))
            kw[key] = _NESTED[key](**sub)
        else:
            raise ConfigError("unknown key", str(key), line)
    if "scenario" not in kw:
        raise ConfigError("missing required key", "scenario")
    cfg = RunConfig(**kw)
    validate(cfg, lines)
    return cfg


def validate(cfg: RunConfig, lines: dict | None = None) -> RunConfig:
    lines = lines or {}

    def fail(msg, key):
        raise ConfigError(msg, key, lines.get(key))

    if cfg.scenario not in SCENARIOS:
        fail(f"unknown scenario {cfg.scenario!r}", "scenario")
    if cfg.coupling not in scenarios.COUPLING_KINDS:
        fail(f"unknown coupling kind {cfg.coupling!r}", "coupling")
    if cfg.sampler and cfg.sampler not in SAMPLER_NAMES:
        fail(f"unknown sampler {cfg.sampler!r}", "sampler")
    if not cfg.gammas:
        fail("sweep list must be nonempty", "gammas")
    for g in cfg.gammas:
        if g == "auto":
            if cfg.scenario != "corridor":
                fail("gamma 'auto' is only available for the corridor", "gammas")
        elif not g >= 0:
            fail("gamma must be non-negative", "gammas")
    if not cfg.seeds:
        fail("seed list must be nonempty", "seeds")
    if any(s < 0 for s in cfg.seeds):
        fail("seeds must be non-negative", "seeds")
    for key in ("batch_size", "robots", "configurations", "workers"):
        if getattr(cfg, key) < 1:
            fail("must be at least 1", key)
    if cfg.v_max is not None and not cfg.v_max > 0:
        fail("must be positive", "v_max")
    if cfg.noise_scale < 1:
        fail("must be at least 1", "noise_scale")
    if cfg.head_on and cfg.robots != 2:
        fail("head-on configurations have exactly two robots", "head_on")
    if cfg.schedule is not None:
        s = cfg.schedule
        if s.steps < 1 or not 0 < s.beta_min <= s.beta_max < 1:
            fail("need steps >= 1 and 0 < beta_min <= beta_max < 1", "schedule")
    if cfg.lmc.step_size <= 0 or cfg.lmc.n_steps < 1:
        fail("need step_size > 0 and n_steps >= 1", "lmc")
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text)


def _gamma_label(g) -> str:
    return "auto" if g == "auto" else format(float(g), "g")


def plan_runs(cfg: RunConfig) -> list[RunPlan]:
    """One plan per ``(gamma, seed)``, gamma-major."""
    plans = []
    for gi, g in enumerate(cfg.gammas):
        for seed in cfg.seeds:
            plans.append(RunPlan(f"{cfg.label}_{gi:02d}_g{_gamma_label(g)}_s{seed}", g, int(seed)))
    return plans


def _sampler(cfg: RunConfig) -> str:
    return cfg.sampler or ("lmc" if cfg.scenario == "corridor" else "ddpm")


def _schedule(cfg: RunConfig):
    s = cfg.schedule
    if s is None:
        s = ScheduleConfig() if cfg.scenario != "corridor" else ScheduleConfig(100, 1e-4, 0.05)
    return make_linear_schedule(s.steps, s.beta_min, s.beta_max)


def derive_seed(seed: int, index: int) -> int:
    """Independent 64-bit seed for configuration ``index`` of a run seed."""
    return int(np.random.SeedSequence(int(seed), spawn_key=(int(index),)).generate_state(1, np.uint64)[0])


@dataclass
class CellResult:
    plan: RunPlan
    gamma: float
    rows: list
    data: CellData
    per_config_safe: list
    nonconverged: int
    projections: int
    seconds: float
    extra: dict = field(default_factory=dict)


def _run_corridor(cfg: RunConfig, plan: RunPlan, workers: int) -> CellResult:
    spec = scenarios.CORRIDOR
    extra = {}
    gamma = plan.gamma
    if gamma == "auto":
        gamma, rates = scenarios.corridor_gamma_sweep(
            spec, cfg.coupling, batch_size=min(cfg.batch_size, 1024),
            step_size=cfg.lmc.step_size, n_steps=cfg.lmc.n_steps,
        )
        extra["sweep"] = {format(k, "g"): v for k, v in rates.items()}
    gamma = float(gamma)
    system = scenarios.build_corridor(
        spec, cfg.coupling, gamma, cfg.projection, cfg.lmc.step_size, cfg.lmc.n_steps,
        schedule=_schedule(cfg), seed=plan.seed,
    )
    if cfg.noise_scale != 1.0:
        from .samplers import _replace

        system = _replace(system, noise_scale=cfg.noise_scale)
    t0 = time.perf_counter()
    batch = run(system, _sampler(cfg), cfg.batch_size, workers=workers)
    x = batch.samples[0].reshape(-1)
    y = batch.samples[1].reshape(-1)
    overlap, violation = scenarios.corridor_indicators(spec, x, y)
    conv = batch.sample_converged
    rows = []
    for b in range(cfg.batch_size):
        d = abs(float(x[b]) - float(y[b]))
        rows.append({
            "config_index": 0, "sample": b,
            "su": int((1 - overlap[b]) * (1 - violation[b])), "rs": int(1 - overlap[b]),
            "cs": int(1 - violation[b]), "dtw": d, "dfd": d, "obstacle_safe": 1,
            "da_proxy": math.nan, "overlap": int(overlap[b]), "converged": int(conv[b]),
        })
    data = CellData("corridor", gamma, np.stack([x, y]), bounds=np.array([spec.bounds(0), spec.bounds(1)]))
    safe = [np.array([r["su"] for r in rows])]
    return CellResult(plan, gamma, rows, data, safe, batch.nonconverged_count, batch.projection_count,
                      time.perf_counter() - t0, extra)


def _run_nav(cfg: RunConfig, plan: RunPlan, workers: int) -> CellResult:
    env = scenarios.make_environment(cfg.scenario)
    v_max = cfg.v_max if cfg.v_max is not None else scenarios.VMAX_PRESETS[cfg.scenario][0]
    gamma = float(plan.gamma)
    settings = cfg.nav
    sched = _schedule(cfg)
    rows, per_config, all_samples, starts, goals = [], [], [], [], []
    nonconv = nproj = 0
    t0 = time.perf_counter()
    for c in range(cfg.configurations):
        if cfg.head_on:
            conf = scenarios.head_on_configuration(env, cfg.config_seed + c)
        else:
            conf = scenarios.sample_initial_configuration(env, cfg.robots, cfg.config_seed + c)
        system = scenarios.build_nav_system(
            env, conf, cfg.coupling, gamma, v_max, sched, cfg.projection, settings,
            step_size=cfg.lmc.step_size, n_steps=cfg.lmc.n_steps, seed=derive_seed(plan.seed, c),
        )
        if cfg.noise_scale != 1.0:
            from .samplers import _replace

            system = _replace(system, noise_scale=cfg.noise_scale)
        batch = run(system, _sampler(cfg), cfg.batch_size, workers=workers)
        nonconv += batch.nonconverged_count
        nproj += batch.projection_count
        trajs = batch.samples
        rs = np.atleast_1d(metrics.inter_robot_safety(trajs, env.robot_radius))
        obs = np.atleast_1d(metrics.obstacle_safe(trajs, env.scene, env.robot_radius))
        cs = np.ones(cfg.batch_size, dtype=int)
        da = np.zeros(cfg.batch_size)
        for tr, s, g in zip(trajs, conf.starts, conf.goals):
            cs &= np.atleast_1d(metrics.constraint_satisfaction(tr, s, v_max, settings.dt))
            da += metrics.data_adherence_proxy(tr, s, env.pattern(g))
        da /= conf.n_robots
        su = rs & obs
        conv = batch.sample_converged
        pairs = list(combinations(range(conf.n_robots), 2))
        for b in range(cfg.batch_size):
            if pairs:
                dtw = float(np.mean([metrics.dtw(trajs[i][b], trajs[j][b]) for i, j in pairs]))
                dfd = float(np.mean([metrics.dfd(trajs[i][b], trajs[j][b]) for i, j in pairs]))
            else:
                dtw = dfd = math.nan
            rows.append({
                "config_index": c, "sample": b, "su": int(su[b]), "rs": int(rs[b]), "cs": int(cs[b]),
                "dtw": dtw, "dfd": dfd, "obstacle_safe": int(obs[b]), "da_proxy": float(da[b]),
                "overlap": math.nan, "converged": int(conv[b]),
            })
        per_config.append(su)
        all_samples.append(np.stack(trajs))
        starts.append(conf.starts)
        goals.append(conf.goals)
    data = CellData(
        cfg.scenario, gamma, np.stack(all_samples), np.stack(starts), np.stack(goals),
        env.scene.centers, env.scene.radii, env.robot_radius, v_max, settings.dt, env.half_width,
    )
    return CellResult(plan, gamma, rows, data, per_config, nonconv, nproj, time.perf_counter() - t0)


def run_cell(cfg: RunConfig, plan: RunPlan, workers: int = 1) -> CellResult:
    if cfg.scenario == "corridor":
        return _run_corridor(cfg, plan, workers)
    return _run_nav(cfg, plan, workers)


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_bytes(data)
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}") from None


def csv_bytes(cfg: RunConfig, results: list[CellResult]) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for res in results:
        head = {"cell": res.plan.cell, "scenario": cfg.scenario, "sampler": _sampler(cfg),
                "coupling": cfg.coupling, "gamma": res.gamma, "seed": res.plan.seed}
        for row in res.rows:
            full = {**head, **row}
            w.writerow([_fmt(full[c]) for c in CSV_COLUMNS])
    return buf.getvalue().encode()


def _stats(values) -> tuple:
    a = np.asarray(values, dtype=float)
    if a.size == 0 or np.all(np.isnan(a)):
        return None, None
    return float(np.nanmean(a)), float(np.nanstd(a))


def summarize(cfg: RunConfig, res: CellResult) -> dict:
    out = {
        "cell": res.plan.cell, "scenario": cfg.scenario, "sampler": _sampler(cfg), "coupling": cfg.coupling,
        "gamma": res.gamma, "seed": res.plan.seed, "rows": len(res.rows),
        "mean": {}, "std": {},
        "success_rate": metrics.success_rate(res.per_config_safe),
        "nonconverged_projections": res.nonconverged, "projections": res.projections,
        "seconds": round(res.seconds, 3),
    }
    for col in METRIC_COLUMNS:
        m, s = _stats([r[col] for r in res.rows])
        out["mean"][col], out["std"][col] = m, s
    out.update(res.extra)
    return out


@dataclass
class RunReport:
    config: RunConfig
    cells: list
    output_dir: Path
    csv_path: Path
    json_path: Path
    seconds: float


def output_dir(cfg: RunConfig) -> Path:
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "."))
    return root / (cfg.output or f"runs/{cfg.label}")


def execute(cfg: RunConfig, seed: int | None = None, workers: int | None = None) -> RunReport:
    """Run every cell of ``cfg`` and write results.

    ``seed`` replaces the configured seed list; ``workers`` overrides the
    configured parallelism.  Output bytes of the CSV do not depend on
    ``workers``.
    """
    if seed is not None:
        cfg = replace(cfg, seeds=(int(seed),))
    if workers is not None:
        cfg = replace(cfg, workers=int(workers))
    validate(cfg)
    t0 = time.perf_counter()
    plans = plan_runs(cfg)
    if cfg.workers > 1 and len(plans) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(lambda p: run_cell(cfg, p), plans))
    else:
        results = [run_cell(cfg, p, cfg.workers) for p in plans]

    out = output_dir(cfg)
    try:
        (out / "cells").mkdir(parents=True, exist_ok=True)
        if cfg.plots:
            (out / "plots").mkdir(exist_ok=True)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot create {out}: {exc.strerror}") from None
    for res in results:
        _atomic_write(out / "cells" / f"{res.plan.cell}.npz", res.data.to_bytes())
        if cfg.plots:
            emit_plot(res.data, out / "plots" / f"{res.plan.cell}.svg")
    csv_path = out / "results.csv"
    _atomic_write(csv_path, csv_bytes(cfg, results))
    cells = [summarize(cfg, r) for r in results]
    seconds = time.perf_counter() - t0
    json_path = out / "summary.json"
    doc = {"scenario": cfg.scenario, "seconds": round(seconds, 3), "cells": cells}
    _atomic_write(json_path, (json.dumps(doc, indent=2, allow_nan=False) + "\n").encode())
    return RunReport(cfg, cells, out, csv_path, json_path, seconds)

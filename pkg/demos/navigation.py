"""
Two robots meeting head-on
==========================

Two robots start on opposite sides of an empty workspace and must swap
places.  Their priors are Gaussian tubes around straight-line paths, so
uncoupled samples collide in the middle.  A speed limit is enforced by
projecting every sampled trajectory onto the set of paths whose steps are no
longer than ``v_max * dt``.
"""

# %%
import numpy as np

from pcd import metrics
from pcd.plotting import CellData, emit_plot
from pcd.samplers import run_pcd_ddpm
from pcd.scenarios import VMAX_PRESETS, build_nav_system, head_on_configuration, make_environment

env = make_environment("empty")
conf = head_on_configuration(env, seed=0)
v_max = VMAX_PRESETS["empty"][0]

# %%
# Compare the uncoupled baseline with squared-hinge coupling.
for gamma in (0.0, 1.0):
    out = run_pcd_ddpm(build_nav_system(env, conf, "shd", gamma, v_max, seed=7), 64)
    rs = metrics.inter_robot_safety(out.samples, env.robot_radius)
    cs = np.all([metrics.constraint_satisfaction(t, s, v_max) for t, s in zip(out.samples, conf.starts)], axis=0)
    print(f"gamma = {gamma:g}: RS {rs.mean():.3f}, CS {cs.mean():.3f}, "
          f"unconverged projections {out.nonconverged_count}/{out.projection_count}")

# %%
# Red crosses mark collisions and blue stars mark speed-limit violations.
cell = CellData(
    "empty", gamma, np.stack(out.samples)[None], conf.starts[None], conf.goals[None],
    env.scene.centers, env.scene.radii, env.robot_radius, v_max, 1.0, env.half_width,
)
print("wrote", emit_plot(cell, "navigation.svg", max_tuples=8))

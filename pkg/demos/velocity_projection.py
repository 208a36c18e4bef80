"""
Projecting onto a speed limit
=============================

The nearest trajectory whose waypoints move at most ``v_max * dt`` per step
is found by ADMM.  Each iteration solves one fixed linear system, clips the
step vectors to a ball, and updates the duals.
"""

# %%
import numpy as np

from pcd.metrics import displacements
from pcd.projections import VelocityChain

rng = np.random.default_rng(0)
H = 24
x0 = np.zeros(2)
wild = np.cumsum(rng.normal(scale=1.5, size=(H, 2)), axis=0)
op = VelocityChain(x0, v_max=0.7, dt=1.0, horizon=H)

X, info = op.solve(wild)
print(f"converged: {bool(info.converged)} after {int(info.iterations)} iterations")
print(f"largest step before {displacements(wild, x0).max():.3f}, after {displacements(X, x0).max():.3f}")
print(f"distance moved {np.linalg.norm(X - wild):.3f}")

# %%
# A trajectory that already satisfies the limit comes back unchanged.
tame = np.cumsum(np.full((H, 2), 0.3), axis=0)
Y, info = op.solve(tame)
print("feasible input unchanged:", np.array_equal(Y, tame))

# %%
# Batches are solved together, and each instance stops on its own residuals.
batch = np.cumsum(rng.normal(scale=1.5, size=(256, H, 2)), axis=1)
Xb, info = op.solve(batch)
print(f"batch of 256: {int(info.converged.sum())} converged, median iterations {int(np.median(info.iterations))}")

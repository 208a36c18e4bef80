"""
Classifier guidance as a special case
=====================================

Pin one variable to an observation ``y0`` and couple it to ``x`` through a
Gaussian likelihood cost.  The coupled Langevin sampler then targets the
posterior of ``x`` given ``y0``, with ``gamma`` acting as an inverse
temperature on the likelihood.
"""

# %%
from pcd.samplers import run_cg_reduction
from pcd.scores import Gaussian

prior = Gaussian([0.0], 1.0)
for gamma in (0.0, 0.5, 1.0, 2.0):
    out = run_cg_reduction(prior, 1.0, [2.0], gamma, 1e-2, 1000, 10_000, seed=0)
    x = out["x"][:, 0]
    # prior N(0, 1) times likelihood^gamma of N(x, 1) at y0 = 2
    mean, var = 2 * gamma / (1 + gamma), 1 / (1 + gamma)
    print(f"gamma = {gamma:g}: mean {x.mean():.3f} (exact {mean:.3f}), variance {x.var():.3f} (exact {var:.3f})")

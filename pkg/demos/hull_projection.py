"""
Projection onto a convex hull
=============================

Projecting onto the convex hull of exemplars ``E`` means finding simplex
weights ``lam`` that minimise ``|E lam - x|^2``.  Exponentiated-gradient
(mirror descent) updates keep ``lam`` on the simplex throughout.
"""

# %%
import numpy as np

from pcd.projections import ConvexHull, project_convex_hull

rng = np.random.default_rng(3)
E = rng.normal(size=(6, 4))
x = rng.normal(scale=2.0, size=6)

# The default step is tuned for large feature spaces; for unit-scale
# exemplars a step near 1 / |E^T E| converges in a few thousand iterations.
eta = 0.5 / np.linalg.norm(E.T @ E, 2)
y, lam = project_convex_hull(ConvexHull(E, eta=eta, n_iter=10_000), x)
print("weights:", np.round(lam, 4))
print(f"distance to hull {np.linalg.norm(x - y):.4f}")

# %%
# Optimality: no point of the hull lies at an acute angle from x - y.
worst = max(np.dot(x - y, E @ rng.dirichlet(np.ones(4)) - y) for _ in range(1000))
print(f"largest <x - y, z - y> over random hull points: {worst:.2e}")

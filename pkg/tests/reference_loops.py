"""Plain sampling loops written out longhand, sharing the library's noise streams.

They are the references for the reduction-lattice tests: vanilla LMC/DDPM,
projected-only and coupled-only variants, each a direct transcription of the
update rule with no shared code beyond :class:`pcd.rng.NoiseStream`.
"""

import numpy as np

from pcd.rng import NoiseStream


def lmc(scores, B, delta, T, seed, projections=None, cost=None, gamma=0.0):
    st = NoiseStream(seed)
    N = len(scores)
    proj = projections or [lambda z: z] * N
    xs = [proj[i](st.normal(i, 0, scores[i].shape, 0, B)) for i in range(N)]
    for k in range(1, T + 1):
        g = cost(xs)[1] if cost is not None else None
        new = []
        for i in range(N):
            y = xs[i] + delta * scores[i].score(xs[i])
            if g is not None:
                y = y - gamma * delta * g[i]
            y = y + np.sqrt(2 * delta) * st.normal(i, k, scores[i].shape, 0, B)
            new.append(proj[i](y))
        xs = new
    return xs


def ddpm(scores, B, sched, seed, projections=None, cost=None, gamma=0.0, k=1.0):
    st = NoiseStream(seed)
    N = len(scores)
    proj = projections or [lambda z: z] * N
    xs = [proj[i](st.normal(i, 0, scores[i].shape, 0, B)) for i in range(N)]
    T = sched.T
    for it, t in enumerate(range(T, 0, -1), start=1):
        a, ab = sched.alpha[t - 1], sched.bar_alpha[t - 1]
        g = cost(xs)[1] if cost is not None else None
        new = []
        for i in range(N):
            y = (xs[i] + (1 - a) * scores[i].score(xs[i], ab)) / np.sqrt(a)
            if t > 1:
                y = y + np.sqrt(1 - a) * k * st.normal(i, it, scores[i].shape, 0, B)
            if g is not None:
                y = y - gamma * g[i]
            new.append(proj[i](y))
        xs = new
    return xs

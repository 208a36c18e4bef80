"""Counter-based Gaussian noise addressable by (variable, step, sample).

Each (seed, variable) pair gets its own Philox key; the step index is the
high counter word.  Within a step, sample ``b`` owns a fixed run of counter
blocks, so any slice of the batch can be drawn on its own and gives the same
numbers as drawing the whole batch.  Normals come from Box-Muller on the two
32-bit halves of each 64-bit word, which keeps the word-to-value map fixed.
"""

from __future__ import annotations

import numpy as np

_WORDS_PER_BLOCK = 4
_TWO32 = float(2**32)


class NoiseStream:
    """Deterministic standard-normal draws.

    Parameters
    ----------
    seed : int
        Master seed (any non-negative integer below 2**64).

    Instances cache generator state and are not thread safe; use one per
    thread.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) % (2**64)
        self._gens: dict[int, tuple] = {}

    def _generator(self, variable: int, step: int):
        """Philox positioned at the start of ``(variable, step)``."""
        cached = self._gens.get(variable)
        if cached is None:
            ss = np.random.SeedSequence(self.seed, spawn_key=(int(variable),))
            bg = np.random.Philox(key=ss.generate_state(2, np.uint64))
            cached = (bg, bg.state)
            self._gens[variable] = cached
        bg, state = cached
        ctr = state["state"]["counter"]
        ctr[:] = 0
        ctr[3] = step
        state["buffer_pos"] = 4
        bg.state = state
        return bg

    def normal(self, variable: int, step: int, shape, start: int = 0, stop: int | None = None) -> np.ndarray:
        """Normals for samples ``start:stop`` at the given step.

        ``shape`` is the per-sample event shape.  The result has shape
        ``(stop - start, *shape)``.
        """
        shape = tuple(int(s) for s in np.atleast_1d(shape))
        if stop is None:
            raise ValueError("stop is required")
        n = int(stop) - int(start)
        if n < 0:
            raise ValueError("stop must not precede start")
        d = int(np.prod(shape))
        blocks = -(-d // _WORDS_PER_BLOCK)
        bg = self._generator(int(variable), int(step))
        if start:
            bg.advance(int(start) * blocks)
        raw = bg.random_raw(n * blocks * _WORDS_PER_BLOCK).reshape(n, -1)[:, :d]
        hi = (raw >> np.uint64(32)).astype(np.float64)
        lo = (raw & np.uint64(0xFFFFFFFF)).astype(np.float64)
        u1 = (hi + 1.0) / _TWO32  # (0, 1]
        u2 = lo / _TWO32
        z = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
        return z.reshape((n,) + shape)

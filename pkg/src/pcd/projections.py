"""Euclidean projections onto constraint sets.

Every operator exposes ``apply(x) -> (projected, converged)`` where
``converged`` is a boolean array over the batch dimensions of ``x``, and
``__call__`` returning only the projected array.  Closed-form operators
always report convergence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .schedules import ConfigurationError


class Projection:
    #: trailing event shape the operator acts on; None means any shape
    shape: tuple[int, ...] | None = None

    def _batch_shape(self, x):
        if self.shape is None:
            return x.shape[:0]
        k = len(self.shape)
        if x.ndim < k or x.shape[x.ndim - k:] != self.shape:
            raise ValueError(f"{type(self).__name__} expects trailing shape {self.shape}, got {x.shape}")
        return x.shape[: x.ndim - k]

    def apply(self, x):
        x = np.asarray(x, dtype=float)
        batch = self._batch_shape(x)
        return self._project(x), np.ones(batch, dtype=bool)

    def __call__(self, x):
        return self.apply(x)[0]

    def _project(self, x):
        raise NotImplementedError


@dataclass(frozen=True)
class Identity(Projection):
    """Projection onto the whole space."""

    def _project(self, x):
        return x.copy()


@dataclass(frozen=True, eq=False)
class Singleton(Projection):
    """Projection onto ``{point}``."""

    point: np.ndarray

    def __post_init__(self):
        p = np.array(self.point, dtype=float)
        if p.ndim == 0:
            p = p.reshape(1)
        object.__setattr__(self, "point", p)
        object.__setattr__(self, "shape", p.shape)

    def _project(self, x):
        return np.broadcast_to(self.point, x.shape).copy()


@dataclass(frozen=True, eq=False)
class Box(Projection):
    """Per-coordinate interval clamp."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        lo, hi = np.broadcast_arrays(lo, hi)
        if np.any(lo > hi):
            raise ConfigurationError("box is empty: lower exceeds upper")
        object.__setattr__(self, "lower", lo.copy())
        object.__setattr__(self, "upper", hi.copy())
        object.__setattr__(self, "shape", lo.shape)

    def _project(self, x):
        return np.clip(x, self.lower, self.upper)


@dataclass(frozen=True, eq=False)
class Ball(Projection):
    """Closed Euclidean ball, norm taken over the whole event."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center, dtype=float))
        if not self.radius >= 0:
            raise ConfigurationError("ball radius must be non-negative")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "shape", c.shape)

    def _project(self, x):
        axes = tuple(range(-len(self.shape), 0))
        d = x - self.center
        n = np.sqrt(np.sum(d * d, axis=axes, keepdims=True))
        scale = np.where(n > self.radius, self.radius / np.where(n > 0, n, 1.0), 1.0)
        return self.center + d * scale


def _clip_rows(w, limit):
    """Radially clip the last-axis rows of ``w`` to norm ``limit``."""
    n = np.sqrt(np.einsum("...i,...i->...", w, w))[..., None]
    return w * (limit / np.maximum(n, limit))


def _diff(x, x0):
    """``A X - b``: successive displacements with ``x0`` prepended."""
    d = np.empty_like(x)
    d[..., 0, :] = x[..., 0, :] - x0
    d[..., 1:, :] = x[..., 1:, :] - x[..., :-1, :]
    return d


def _diff_t(v):
    """``A^T v``: row h is ``v_h - v_{h+1}`` with ``v_{H+1} = 0``."""
    out = v.copy()
    out[..., :-1, :] -= v[..., 1:, :]
    return out


@lru_cache(maxsize=64)
def _chain_factor(H: int, penalty: float):
    """Inverse of ``2 I + penalty A^T A`` via Cholesky, cached per (H, penalty).

    The matrix is SPD with eigenvalues in ``[2, 2 + 4 penalty]``, so the
    explicit inverse is well conditioned and turns each X-update into a
    batched matmul.
    """
    A = np.eye(H) - np.eye(H, k=-1)
    inv = cho_solve(cho_factor(2.0 * np.eye(H) + penalty * A.T @ A), np.eye(H))
    inv.setflags(write=False)
    return inv


def repair_chain(x, x0, limit):
    """Walk the chain and radially clip any displacement above ``limit``.

    Leaves already-feasible trajectories untouched.
    """
    out = np.array(x, dtype=float, copy=True)
    prev = np.broadcast_to(np.asarray(x0, dtype=float), out[..., 0, :].shape)
    for h in range(out.shape[-2]):
        step = _clip_rows(out[..., h, :] - prev, limit)
        out[..., h, :] = prev + step
        prev = out[..., h, :]
    return out


@dataclass
class ChainInfo:
    """Solver report for one batched velocity-chain projection."""

    converged: np.ndarray
    iterations: np.ndarray
    primal_residual: np.ndarray = field(repr=False)
    dual_residual: np.ndarray = field(repr=False)


@dataclass(frozen=True, eq=False)
class VelocityChain(Projection):
    """Speed-limited trajectory set, projected by batched ADMM.

    Feasible trajectories ``X`` (shape ``(H, 2)``) satisfy
    ``|X_1 - x0| <= v_max dt`` and ``|X_h - X_{h-1}| <= v_max dt``.

    Parameters
    ----------
    x0 : array_like, shape (2,)
        Known start position.
    v_max, dt : float
        Speed limit and physical step; their product bounds each displacement.
    horizon : int
        Number of waypoints H.
    penalty : float
        ADMM penalty.
    max_iter : int
        Iteration cap.
    tol : float
        Bound on the Frobenius norms of the primal residual ``A X - Z - b`` and
        the dual residual ``penalty * A^T (Z^{k+1} - Z^k)``.
    repair : bool
        Radially clip any leftover excess displacement after the solve so
        the output is feasible to rounding, not just to ``tol``.
    """

    x0: np.ndarray
    v_max: float
    dt: float
    horizon: int
    penalty: float = 10.0
    max_iter: int = 700
    tol: float = 2e-5
    repair: bool = True

    def __post_init__(self):
        x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        if int(self.horizon) < 1:
            raise ConfigurationError("velocity chain needs at least one waypoint")
        if not (self.v_max > 0 and self.dt > 0 and self.penalty > 0):
            raise ConfigurationError("v_max, dt and penalty must be positive")
        if int(self.max_iter) < 1 or not self.tol > 0:
            raise ConfigurationError("max_iter must be >= 1 and tol > 0")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "horizon", int(self.horizon))
        object.__setattr__(self, "shape", (int(self.horizon), x0.size))

    @property
    def limit(self) -> float:
        return float(self.v_max * self.dt)

    def apply(self, x):
        out, info = self.solve(x)
        return out, info.converged

    def solve(self, x_hat):
        """Project a batch; returns ``(X, ChainInfo)``."""
        x_hat = np.asarray(x_hat, dtype=float)
        batch = self._batch_shape(x_hat)
        H, d = self.shape
        xh = x_hat.reshape((-1, H, d))
        B = xh.shape[0]
        xi, lim = float(self.penalty), self.limit
        minv = _chain_factor(H, xi)

        # Warm start: Z at the clipped displacements of the input, zero duals.
        D = _diff(xh, self.x0)
        Z = _clip_rows(D, lim)
        Lam = np.zeros_like(xh)
        X = xh.copy()
        r_p = np.full(B, np.inf)
        r_d = np.full(B, np.inf)
        iters = np.zeros(B, dtype=int)
        # Working copies hold only the unconverged instances and are compacted
        # whenever some converge, so each result is independent of what else
        # shares the batch.
        # Inputs that already satisfy the limit are their own projection.
        feasible = np.all(np.einsum("bhi,bhi->bh", D, D) <= lim * lim, axis=1)
        r_p[feasible] = r_d[feasible] = 0.0
        active = np.flatnonzero(~feasible)
        xa, za, la = xh[active], Z[active], Lam[active]
        base = 2.0 * xa
        base[:, 0, :] += xi * self.x0  # xi A^T b; only row 0 of b is nonzero

        for k in range(1, int(self.max_iter) + 1 if active.size else 0):
            V = base + xi * _diff_t(za - la / xi)
            Xn = np.matmul(minv, V)
            AXb = _diff(Xn, self.x0)
            Zn = _clip_rows(AXb + la / xi, lim)
            R = AXb - Zn
            la = la + xi * R
            S = _diff_t(Zn - za)
            za = Zn
            rp = np.sqrt(np.einsum("bhi,bhi->b", R, R))
            rd = xi * np.sqrt(np.einsum("bhi,bhi->b", S, S))
            done = (rp <= self.tol) & (rd <= self.tol)
            last = k == int(self.max_iter)
            if done.any() or last:
                sel = slice(None) if last else done
                idx = active[sel]
                X[idx], Z[idx], Lam[idx] = Xn[sel], za[sel], la[sel]
                r_p[idx], r_d[idx], iters[idx] = rp[sel], rd[sel], k
                if last:
                    break
                keep = ~done
                active = active[keep]
                if active.size == 0:
                    break
                za, la, base = za[keep], la[keep], base[keep]

        converged = (r_p <= self.tol) & (r_d <= self.tol)
        if self.repair:
            X = repair_chain(X, self.x0, lim)
        info = ChainInfo(
            converged=converged.reshape(batch),
            iterations=iters.reshape(batch),
            primal_residual=r_p.reshape(batch),
            dual_residual=r_d.reshape(batch),
        )
        return X.reshape(x_hat.shape), info


def project_velocity_chain(op: VelocityChain, x_hat):
    """Project one ``(H, 2)`` trajectory; returns ``(X, converged)``."""
    x_hat = np.asarray(x_hat, dtype=float)
    if x_hat.ndim != 2:
        raise ValueError("expected a single (H, 2) trajectory")
    X, info = op.solve(x_hat)
    return X, bool(info.converged)


def project_velocity_chain_batch(op: VelocityChain, batch):
    """Project a ``(B, H, 2)`` batch; returns ``(X, ChainInfo)``."""
    return op.solve(batch)


@dataclass(frozen=True, eq=False)
class ConvexHull(Projection):
    """Convex hull of exemplar columns, projected by entropic mirror descent.

    Parameters
    ----------
    exemplars : array_like, shape (d, M)
        Hull vertices as columns.
    eta : float
        Mirror-descent step size.
    n_iter : int
        Maximum number of exponentiated-gradient steps.
    stop_tol : float
        Early exit once the sup-norm change in the weights drops below this.
    """

    exemplars: np.ndarray
    eta: float = 1e-5
    n_iter: int = 10_000
    stop_tol: float = 1e-12

    def __post_init__(self):
        E = np.asarray(self.exemplars, dtype=float)
        if E.ndim == 1:
            E = E[None, :]
        if E.ndim != 2 or E.shape[1] == 0:
            raise ConfigurationError("convex hull needs a (d, M) exemplar matrix with M >= 1")
        if not self.eta > 0:
            raise ConfigurationError("eta must be positive")
        object.__setattr__(self, "exemplars", E)
        object.__setattr__(self, "shape", (E.shape[0],))

    def weights(self, x):
        """Simplex weights of the projection for a batch ``(..., d)``."""
        x = np.asarray(x, dtype=float)
        batch = self._batch_shape(x)
        E = self.exemplars
        M = E.shape[1]
        G = E.T @ E
        b = x.reshape(-1, E.shape[0]) @ E
        lam = np.full((b.shape[0], M), 1.0 / M)
        for _ in range(int(self.n_iter)):
            grad = 2.0 * (lam @ G - b)
            # shift by the row minimum before exponentiating; cancels on renormalisation
            logits = np.log(lam) - self.eta * grad
            logits -= logits.max(axis=1, keepdims=True)
            new = np.exp(logits)
            new /= new.sum(axis=1, keepdims=True)
            new = np.maximum(new, np.finfo(float).tiny)
            step = np.max(np.abs(new - lam))
            lam = new
            if step < self.stop_tol:
                break
        return lam.reshape(batch + (M,))

    def _project(self, x):
        return self.weights(x) @ self.exemplars.T


def project_convex_hull(op: ConvexHull, x):
    """Return ``(projected point, simplex weights)``."""
    lam = op.weights(x)
    return lam @ op.exemplars.T, lam


def project(op: Projection, x):
    """Euclidean projection of ``x`` with ``op`` (projected array only)."""
    return op(x)

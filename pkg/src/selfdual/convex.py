"""Proper convex lsc functions on R^d: values, conjugates, proximal maps.

The analytic catalog (quadratics, powers of the norm, l1, box indicators and
supports, tilts/shifts/scalings and sums) carries closed-form or
Newton-backed conjugates and proxes. Everything else lives on grids, where
conjugation is the discrete Legendre transform applied axis by axis.

Values are immutable after construction; +inf is represented by numpy's inf
and never by a large float.
"""

import csv
import json

import numpy as np

from . import optim
from .errors import (DimensionMismatch, DimensionTooHigh, EmptyProbe,
                     ExtendedRealError, GridTooCoarse, NoConvergence,
                     Unbounded)

MAX_GRID_DIM = 4


def _freeze(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _as_points(x, d):
    X = np.asarray(x, dtype=float)
    if X.ndim == 0:
        X = X.reshape(1, 1)
    elif X.ndim == 1:
        X = X.reshape(1, -1) if X.shape[0] == d else X.reshape(-1, 1)
    if X.shape[1] != d:
        raise DimensionMismatch(f"expected points in R^{d}, got shape {X.shape}")
    return X


def xsum(*vals):
    """Extended-real sum; inf - inf is an error rather than nan."""
    total = 0.0
    has_pos = any(v == np.inf for v in vals)
    has_neg = any(v == -np.inf for v in vals)
    if has_pos and has_neg:
        raise ExtendedRealError("inf - inf in extended-real sum")
    if has_pos:
        return np.inf
    if has_neg:
        return -np.inf
    for v in vals:
        total += v
    return total


def xmul(c, v):
    """Extended-real scalar multiple; 0 * inf is an error."""
    if not np.isfinite(v):
        if c == 0:
            raise ExtendedRealError("0 * inf is disallowed")
        return v if c > 0 else -v
    return c * v


# ---------------------------------------------------------------------------
# catalog


class ConvexFunction:
    """Base class. Subclasses implement batched `value_many` at minimum."""

    dim = 1
    is_smooth = False

    def value_many(self, X):
        raise NotImplementedError

    def value(self, x):
        return float(self.value_many(_as_points(x, self.dim))[0])

    def grad_many(self, X):
        raise NoConvergence(0, np.nan, "no gradient available for this form")

    def grad(self, x):
        return self.grad_many(_as_points(x, self.dim))[0]

    def hess(self, x):
        raise NoConvergence(0, np.nan, "no Hessian available for this form")

    def prox_many(self, Y, tau=1.0):
        raise NoConvergence(0, np.nan, "no prox available for this form")

    def prox(self, y, tau=1.0):
        return self.prox_many(_as_points(y, self.dim), tau)[0]

    def conjugate(self):
        raise NotImplementedError("no closed-form conjugate; use conjugate(f, box=...)")

    def second_derivative_many(self, X):
        """Batched curvature values for one-dimensional smooth functions."""
        raise NoConvergence(0, np.nan, "no batched curvature for this form")

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim})"


class Quadratic(ConvexFunction):
    """f(x) = x'Qx/2 + b'x + c with symmetric PSD Q."""

    is_smooth = True

    def __init__(self, Q, b=None, c=0.0):
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        if Q.shape[0] != Q.shape[1]:
            raise DimensionMismatch("Q must be square")
        if np.max(np.abs(Q - Q.T)) > 1e-12:
            raise ValueError("Q must be symmetric")
        if len(Q) and np.linalg.eigvalsh(Q)[0] < -1e-10:
            raise ValueError("Q must be positive semidefinite")
        self.Q = _freeze(0.5 * (Q + Q.T))
        self.b = _freeze(np.zeros(len(Q)) if b is None else b)
        self.c = float(c)
        self.dim = len(Q)

    def value_many(self, X):
        return 0.5 * np.einsum("ij,jk,ik->i", X, self.Q, X) + X @ self.b + self.c

    def grad_many(self, X):
        return X @ self.Q + self.b

    def hess(self, x):
        return np.array(self.Q)

    def prox_many(self, Y, tau=1.0):
        M = np.eye(self.dim) + tau * self.Q
        return np.linalg.solve(M, (Y - tau * self.b).T).T

    def second_derivative_many(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.full(X.shape[0], self.Q[0, 0])

    def conjugate(self):
        if np.allclose(self.Q, 0.0):
            box = IndicatorBox(self.b, self.b)
            return ConstantPlus(box, -self.c) if self.c else box
        Qi = np.linalg.inv(self.Q)
        return Quadratic(Qi, -Qi @ self.b, 0.5 * self.b @ Qi @ self.b - self.c)


def quadratic_identity(d=1):
    """The function |x|^2 / 2, its own conjugate."""
    return Quadratic(np.eye(d))


class PowerNorm(ConvexFunction):
    """f(x) = scale * |x|^r / r with the Euclidean norm and r > 1."""

    def __init__(self, r, scale=1.0, dim=1):
        if r <= 1:
            raise ValueError("exponent must exceed 1 (use AbsValue for r = 1)")
        if scale <= 0:
            raise ValueError("scale must be positive")
        self.r = float(r)
        self.scale = float(scale)
        self.dim = int(dim)

    @property
    def is_smooth(self):
        return self.r >= 2

    def value_many(self, X):
        n = np.linalg.norm(X, axis=1)
        return self.scale * n ** self.r / self.r

    def grad_many(self, X):
        n = np.linalg.norm(X, axis=1)
        w = np.where(n > 0, n ** (self.r - 2), 0.0)
        return self.scale * w[:, None] * X

    def hess(self, x):
        x = np.asarray(x, dtype=float).reshape(-1)
        n = np.linalg.norm(x)
        if n == 0:
            return np.zeros((self.dim, self.dim)) if self.r > 2 else \
                self.scale * np.eye(self.dim)
        I = np.eye(self.dim)
        return self.scale * (n ** (self.r - 2) * I
                             + (self.r - 2) * n ** (self.r - 4) * np.outer(x, x))

    def prox_many(self, Y, tau=1.0):
        n = np.linalg.norm(Y, axis=1)
        s = self.scale * tau

        def g(t):
            return s * t ** (self.r - 1) + t - n

        t = optim.scalar_root_monotone(g, np.zeros_like(n), n)
        w = np.where(n > 0, t / np.where(n > 0, n, 1.0), 0.0)
        return w[:, None] * Y

    def conjugate(self):
        rs = self.r / (self.r - 1.0)
        return PowerNorm(rs, self.scale ** (1.0 - rs), self.dim)

    def second_derivative_many(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n = np.abs(X[:, 0])
        with np.errstate(divide="ignore"):
            w = np.where(n > 0, n ** (self.r - 2.0), 0.0 if self.r > 2 else np.inf)
        return self.scale * (self.r - 1.0) * w


class AbsValue(ConvexFunction):
    """f(x) = scale * sum_i |x_i|."""

    def __init__(self, scale=1.0, dim=1):
        if scale <= 0:
            raise ValueError("scale must be positive")
        self.scale = float(scale)
        self.dim = int(dim)

    def value_many(self, X):
        return self.scale * np.sum(np.abs(X), axis=1)

    def grad_many(self, X):
        return self.scale * np.sign(X)

    def prox_many(self, Y, tau=1.0):
        t = tau * self.scale
        return np.sign(Y) * np.maximum(np.abs(Y) - t, 0.0)

    def conjugate(self):
        s = self.scale
        return IndicatorBox(-s * np.ones(self.dim), s * np.ones(self.dim))


class IndicatorBox(ConvexFunction):
    """Indicator of the box [lower, upper] (componentwise, bounds may coincide)."""

    def __init__(self, lower, upper):
        self.lower = _freeze(np.atleast_1d(lower))
        self.upper = _freeze(np.atleast_1d(upper))
        if self.lower.shape != self.upper.shape:
            raise DimensionMismatch("bound shapes differ")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")
        self.dim = len(self.lower)

    def value_many(self, X):
        inside = np.all((X >= self.lower - 1e-12) & (X <= self.upper + 1e-12), axis=1)
        return np.where(inside, 0.0, np.inf)

    def prox_many(self, Y, tau=1.0):
        return np.clip(Y, self.lower, self.upper)

    def conjugate(self):
        return SupportBox(self.lower, self.upper)


class SupportBox(ConvexFunction):
    """Support function of the box: sum_i max(lower_i x_i, upper_i x_i)."""

    def __init__(self, lower, upper):
        self.lower = _freeze(np.atleast_1d(lower))
        self.upper = _freeze(np.atleast_1d(upper))
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")
        self.dim = len(self.lower)

    def value_many(self, X):
        return np.sum(np.maximum(self.lower * X, self.upper * X), axis=1)

    def grad_many(self, X):
        mid = np.where((self.lower <= 0) & (0 <= self.upper), 0.0,
                       np.where(np.abs(self.lower) < np.abs(self.upper),
                                self.lower, self.upper))
        return np.where(X > 0, self.upper, np.where(X < 0, self.lower, mid))

    def prox_many(self, Y, tau=1.0):
        up = Y - tau * self.upper
        lo = Y - tau * self.lower
        return np.where(up > 0, up, np.where(lo < 0, lo, 0.0))

    def conjugate(self):
        return IndicatorBox(self.lower, self.upper)


class LinearTilt(ConvexFunction):
    """base(x) + <slope, x>."""

    def __init__(self, base, slope):
        self.base = base
        self.slope = _freeze(np.atleast_1d(slope))
        if len(self.slope) != base.dim:
            raise DimensionMismatch("slope dimension mismatch")
        self.dim = base.dim

    @property
    def is_smooth(self):
        return self.base.is_smooth

    def value_many(self, X):
        return self.base.value_many(X) + X @ self.slope

    def grad_many(self, X):
        return self.base.grad_many(X) + self.slope

    def hess(self, x):
        return self.base.hess(x)

    def prox_many(self, Y, tau=1.0):
        return self.base.prox_many(Y - tau * self.slope, tau)

    def second_derivative_many(self, X):
        return self.base.second_derivative_many(X)

    def conjugate(self):
        return Shifted(self.base.conjugate(), self.slope)


class Shifted(ConvexFunction):
    """base(x - shift)."""

    def __init__(self, base, shift):
        self.base = base
        self.shift = _freeze(np.atleast_1d(shift))
        self.dim = base.dim

    @property
    def is_smooth(self):
        return self.base.is_smooth

    def value_many(self, X):
        return self.base.value_many(X - self.shift)

    def grad_many(self, X):
        return self.base.grad_many(X - self.shift)

    def hess(self, x):
        return self.base.hess(np.asarray(x, dtype=float) - self.shift)

    def prox_many(self, Y, tau=1.0):
        return self.shift + self.base.prox_many(Y - self.shift, tau)

    def second_derivative_many(self, X):
        return self.base.second_derivative_many(np.atleast_2d(X) - self.shift)

    def conjugate(self):
        return LinearTilt(self.base.conjugate(), self.shift)


class Scaled(ConvexFunction):
    """alpha * base with alpha > 0."""

    def __init__(self, base, alpha):
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        self.base = base
        self.alpha = float(alpha)
        self.dim = base.dim

    @property
    def is_smooth(self):
        return self.base.is_smooth

    def value_many(self, X):
        return self.alpha * self.base.value_many(X)

    def grad_many(self, X):
        return self.alpha * self.base.grad_many(X)

    def hess(self, x):
        return self.alpha * self.base.hess(x)

    def prox_many(self, Y, tau=1.0):
        return self.base.prox_many(Y, tau * self.alpha)

    def second_derivative_many(self, X):
        return self.alpha * self.base.second_derivative_many(X)

    def conjugate(self):
        return Scaled(Stretched(self.base.conjugate(), self.alpha), self.alpha)


class Stretched(ConvexFunction):
    """base(x / alpha) with alpha > 0."""

    def __init__(self, base, alpha):
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        self.base = base
        self.alpha = float(alpha)
        self.dim = base.dim

    @property
    def is_smooth(self):
        return self.base.is_smooth

    def value_many(self, X):
        return self.base.value_many(X / self.alpha)

    def grad_many(self, X):
        return self.base.grad_many(X / self.alpha) / self.alpha

    def hess(self, x):
        return self.base.hess(np.asarray(x, dtype=float) / self.alpha) / self.alpha ** 2

    def prox_many(self, Y, tau=1.0):
        a = self.alpha
        return a * self.base.prox_many(Y / a, tau / a ** 2)

    def second_derivative_many(self, X):
        a = self.alpha
        return self.base.second_derivative_many(np.atleast_2d(X) / a) / a ** 2

    def conjugate(self):
        return Stretched(self.base.conjugate(), 1.0 / self.alpha)


class Separable1D(ConvexFunction):
    """sum_i base(x_i) for a one-dimensional base, evaluated batched."""

    def __init__(self, base, dim):
        if base.dim != 1:
            raise DimensionMismatch("separable lift needs a 1D base")
        self.base = base
        self.dim = int(dim)

    @property
    def is_smooth(self):
        return self.base.is_smooth

    def _flat(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return X.reshape(-1, 1), X.shape

    def value_many(self, X):
        flat, shape = self._flat(X)
        return self.base.value_many(flat).reshape(shape).sum(axis=1)

    def grad_many(self, X):
        flat, shape = self._flat(X)
        return self.base.grad_many(flat).reshape(shape)

    def hess(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.diag([self.base.hess(np.array([t]))[0, 0] for t in x])

    def prox_many(self, Y, tau=1.0):
        flat, shape = self._flat(Y)
        return self.base.prox_many(flat, tau).reshape(shape)

    def conjugate(self):
        return Separable1D(self.base.conjugate(), self.dim)


class Rotated(ConvexFunction):
    """base(U x) for orthogonal U; conjugation commutes with the rotation."""

    def __init__(self, base, U):
        U = np.atleast_2d(np.asarray(U, dtype=float))
        if np.max(np.abs(U.T @ U - np.eye(len(U)))) > 1e-12:
            raise ValueError("U must be orthogonal")
        self.base = base
        self.U = _freeze(U)
        self.dim = base.dim

    @property
    def is_smooth(self):
        return self.base.is_smooth

    def value_many(self, X):
        return self.base.value_many(X @ self.U.T)

    def grad_many(self, X):
        return self.base.grad_many(X @ self.U.T) @ self.U

    def hess(self, x):
        H = self.base.hess(self.U @ np.asarray(x, dtype=float))
        return self.U.T @ H @ self.U

    def prox_many(self, Y, tau=1.0):
        return self.base.prox_many(Y @ self.U.T, tau) @ self.U

    def conjugate(self):
        return Rotated(self.base.conjugate(), self.U)


class ConstantPlus(ConvexFunction):
    """base(x) + c0."""

    def __init__(self, base, c0):
        self.base = base
        self.c0 = float(c0)
        self.dim = base.dim

    @property
    def is_smooth(self):
        return self.base.is_smooth

    def value_many(self, X):
        return self.base.value_many(X) + self.c0

    def grad_many(self, X):
        return self.base.grad_many(X)

    def hess(self, x):
        return self.base.hess(x)

    def prox_many(self, Y, tau=1.0):
        return self.base.prox_many(Y, tau)

    def conjugate(self):
        return ConstantPlus(self.base.conjugate(), -self.c0)


def dilate(base, lam):
    """Epigraphical scaling lam^2 * base(x / lam); selfdual-compatible."""
    if lam == 1.0:
        return base
    return Scaled(Stretched(base, lam), lam * lam)


class SumFn(ConvexFunction):
    """Pointwise sum of convex functions of equal dimension."""

    def __init__(self, parts):
        parts = list(parts)
        if not parts:
            raise ValueError("empty sum")
        d = parts[0].dim
        if any(p.dim != d for p in parts):
            raise DimensionMismatch("summands have unequal dimensions")
        self.parts = tuple(parts)
        self.dim = d

    @property
    def is_smooth(self):
        return all(p.is_smooth for p in self.parts)

    def value_many(self, X):
        out = self.parts[0].value_many(X).astype(float)
        for p in self.parts[1:]:
            out = out + p.value_many(X)
        return out

    def grad_many(self, X):
        out = self.parts[0].grad_many(X).astype(float)
        for p in self.parts[1:]:
            out = out + p.grad_many(X)
        return out

    def hess(self, x):
        H = self.parts[0].hess(x).astype(float)
        for p in self.parts[1:]:
            H = H + p.hess(x)
        return H

    def second_derivative_many(self, X):
        out = self.parts[0].second_derivative_many(X).astype(float)
        for p in self.parts[1:]:
            out = out + p.second_derivative_many(X)
        return out

    def prox_many(self, Y, tau=1.0):
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        smooth = [p for p in self.parts if p.is_smooth]
        rough = [p for p in self.parts if not p.is_smooth]
        if len(rough) > 1:
            raise NoConvergence(0, np.nan, "prox of a sum with several nonsmooth parts")
        if not rough and self.dim == 1:
            y = Y[:, 0]

            def g_of(t):
                return t - y + tau * self.grad_many(t[:, None])[:, 0]

            r = 1.0 + np.abs(y)
            lo, hi = -r, r
            for _ in range(80):
                grow_lo = g_of(lo) > 0
                grow_hi = g_of(hi) < 0
                if not grow_lo.any() and not grow_hi.any():
                    break
                lo = np.where(grow_lo, 2.0 * lo - 1.0, lo)
                hi = np.where(grow_hi, 2.0 * hi + 1.0, hi)
            return optim.scalar_root_monotone(g_of, lo, hi)[:, None]
        out = np.empty_like(Y)
        for i, y in enumerate(Y):
            out[i] = self._prox_one(y, tau, smooth, rough)
        return out

    def _prox_one(self, y, tau, smooth, rough):
        if not rough:
            def g(x):
                return x - y + tau * self.grad_many(x[None, :])[0]

            def H(x):
                return np.eye(self.dim) + tau * self.hess(x)

            x, _, res = optim.newton_polish(g, H, y, tol=1e-13)
            if res > 1e-8:
                raise NoConvergence(50, res, "sum prox")
            return x
        ns = rough[0]

        def sval(x):
            v = 0.5 * np.sum((x - y) ** 2) / tau
            for p in smooth:
                v += p.value_many(x[None, :])[0]
            return v

        def sgrad(x):
            g = (x - y) / tau
            for p in smooth:
                g = g + p.grad_many(x[None, :])[0]
            return g

        x, _, res = optim.prox_gradient(
            y, sval, sgrad, lambda v, t: ns.prox_many(v[None, :], t)[0],
            step=tau, tol=1e-12)
        return x

    def conjugate(self):
        if self.is_smooth:
            return NumericalConjugate(self)
        raise NotImplementedError("no closed-form conjugate of this sum")


class NumericalConjugate(ConvexFunction):
    """Conjugate of a smooth strictly convex function, via stationarity solves.

    f*(s) = <x(s), s> - f(x(s)) where grad f(x(s)) = s; the maximizer also
    gives grad f* = x(s). The prox comes from the Moreau identity, so it
    reuses the primal prox exactly.
    """

    is_smooth = True

    def __init__(self, primal):
        self.primal = primal
        self.dim = primal.dim

    def _argmax(self, S):
        if self.dim == 1:
            return self._argmax_1d(S)
        out = np.empty_like(S)
        for i, s in enumerate(S):
            def g(x):
                return self.primal.grad_many(x[None, :])[0] - s

            def H(x):
                return self.primal.hess(x)

            x, _, res = optim.newton_polish(g, H, np.zeros(self.dim), tol=1e-12)
            if res > 1e-7 * (1.0 + np.linalg.norm(s)):
                raise NoConvergence(50, res, "conjugate stationarity solve")
            out[i] = x
        return out

    def _argmax_1d(self, S):
        """Batched stationarity solve grad f(x) = s on expanding brackets."""
        s = S[:, 0]
        r = 1.0 + np.abs(s)

        def g_of(t):
            return self.primal.grad_many(t[:, None])[:, 0] - s

        lo, hi = -r, r
        for _ in range(80):
            grow_lo = g_of(lo) > 0
            grow_hi = g_of(hi) < 0
            if not grow_lo.any() and not grow_hi.any():
                break
            lo = np.where(grow_lo, 2.0 * lo - 1.0, lo)
            hi = np.where(grow_hi, 2.0 * hi + 1.0, hi)
        x = optim.scalar_root_monotone(g_of, lo, hi)
        return x[:, None]

    def value_many(self, S):
        S = np.atleast_2d(np.asarray(S, dtype=float))
        X = self._argmax(S)
        return np.sum(X * S, axis=1) - self.primal.value_many(X)

    def grad_many(self, S):
        S = np.atleast_2d(np.asarray(S, dtype=float))
        return self._argmax(S)

    def hess(self, s):
        x = self._argmax(np.atleast_2d(np.asarray(s, dtype=float)))[0]
        return np.linalg.inv(self.primal.hess(x))

    def prox_many(self, Y, tau=1.0):
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        return Y - tau * self.primal.prox_many(Y / tau, 1.0 / tau)

    def second_derivative_many(self, S):
        S = np.atleast_2d(np.asarray(S, dtype=float))
        X = self._argmax(S)
        w = self.primal.second_derivative_many(X)
        with np.errstate(divide="ignore"):
            return np.where(w > 0, 1.0 / w, np.inf)

    def conjugate(self):
        return self.primal


# ---------------------------------------------------------------------------
# grids


class GridFunction:
    """Uniform tensor grid with extended-real node values.

    box is a (d, 2) array of per-axis intervals, shape the per-axis node
    counts. Values use np.inf for points outside the effective domain.
    """

    def __init__(self, box, shape, values):
        box = np.atleast_2d(np.asarray(box, dtype=float))
        if box.ndim != 2 or box.shape[1] != 2:
            raise DimensionMismatch("box must be (d, 2)")
        d = box.shape[0]
        if d > MAX_GRID_DIM:
            raise DimensionTooHigh(f"grid dimension {d} exceeds {MAX_GRID_DIM}")
        shape = tuple(int(n) for n in np.atleast_1d(shape))
        if len(shape) != d or any(n < 2 for n in shape):
            raise ValueError("need at least 2 nodes per axis")
        values = np.asarray(values, dtype=float).reshape(shape)
        if np.isnan(values).any():
            raise ExtendedRealError("grid values contain nan")
        if not np.isfinite(values).any():
            raise ValueError("grid needs at least one finite value")
        if np.any(box[:, 1] <= box[:, 0]):
            raise ValueError("box intervals must have positive length")
        self.box = _freeze(box)
        self.shape = shape
        self.values = values
        self.values.setflags(write=False)
        self.dim = d

    @property
    def spacing(self):
        return (self.box[:, 1] - self.box[:, 0]) / (np.array(self.shape) - 1)

    def axes(self):
        return [np.linspace(self.box[i, 0], self.box[i, 1], self.shape[i])
                for i in range(self.dim)]

    def contains(self, X):
        X = _as_points(X, self.dim)
        eps = 1e-9 * np.maximum(1.0, np.abs(self.box).max())
        return np.all((X >= self.box[:, 0] - eps) & (X <= self.box[:, 1] + eps), axis=1)

    def interpolate(self, X, outside=np.inf):
        """Multilinear interpolation; +inf at any cell corner propagates."""
        X = _as_points(X, self.dim)
        h = self.spacing
        t = (X - self.box[:, 0]) / h
        i0 = np.clip(np.floor(t).astype(int), 0, np.array(self.shape) - 2)
        frac = np.clip(t - i0, 0.0, 1.0)
        m = X.shape[0]
        out = np.zeros(m)
        bad = np.zeros(m, dtype=bool)
        for corner in range(1 << self.dim):
            bits = np.array([(corner >> a) & 1 for a in range(self.dim)])
            idx = tuple((i0 + bits).T)
            vals = self.values[idx]
            w = np.prod(np.where(bits, frac, 1.0 - frac), axis=1)
            contrib = np.where(w > 0, vals, 0.0)
            bad |= (w > 0) & ~np.isfinite(vals)
            out += np.where(np.isfinite(vals), w * vals, 0.0)
            _ = contrib
        out = np.where(bad, np.inf, out)
        inside = self.contains(X)
        return np.where(inside, out, outside)

    def legendre(self, pad=0.1, dual_shape=None, dual_box=None):
        """Discrete Legendre transform, one axis sweep at a time.

        Each sweep is the exact conjugate of the sampled points along that
        axis (linear time per line after a lower-hull pass). The dual box per
        axis defaults to the finite slope range padded by `pad`; pass
        `dual_box` to override it.
        """
        axes = self.axes()
        dual_shape = tuple(dual_shape) if dual_shape is not None else self.shape
        if dual_box is not None:
            dual_box = np.atleast_2d(np.asarray(dual_box, dtype=float))
        data = np.array(self.values)
        dual_axes = []
        for a in range(self.dim):
            if dual_box is not None:
                lo, hi = dual_box[a]
            else:
                lo, hi = _slope_range(axes[a], np.moveaxis(data, a, -1))
                width = hi - lo
                if width <= 0:
                    width = max(1.0, abs(hi) + abs(lo))
                lo -= pad * width
                hi += pad * width
            s = np.linspace(lo, hi, dual_shape[a])
            moved = np.moveaxis(data, a, -1)
            lines = moved.reshape(-1, moved.shape[-1])
            sign = 1.0 if a == 0 else -1.0
            out = np.empty((lines.shape[0], len(s)))
            for j, line in enumerate(lines):
                out[j] = discrete_conjugate_1d(axes[a], sign * line, s)
            newshape = moved.shape[:-1] + (len(s),)
            data = np.moveaxis(out.reshape(newshape), -1, a)
            dual_axes.append(s)
        box = np.array([[ax[0], ax[-1]] for ax in dual_axes])
        return GridFunction(box, dual_shape, data)

    def to_json_dict(self):
        vals = ["inf" if not np.isfinite(v) else v for v in self.values.ravel()]
        return {"box": self.box.tolist(), "nodes": list(self.shape), "values": vals}

    @classmethod
    def from_json_dict(cls, d):
        vals = np.array([np.inf if v == "inf" else float(v) for v in d["values"]])
        return cls(np.array(d["box"], dtype=float), d["nodes"], vals)

    def to_json(self):
        return json.dumps(self.to_json_dict())

    @classmethod
    def from_json(cls, s):
        return cls.from_json_dict(json.loads(s))

    @classmethod
    def from_csv(cls, path):
        """One node per row: x_1, ..., x_d, value ('inf' allowed)."""
        rows = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].startswith("#"):
                    continue
                rows.append([np.inf if c.strip() == "inf" else float(c) for c in row])
        arr = np.array(rows, dtype=float)
        d = arr.shape[1] - 1
        axes = [np.unique(arr[:, i]) for i in range(d)]
        shape = tuple(len(ax) for ax in axes)
        if np.prod(shape) != len(arr):
            raise ValueError("csv rows do not form a full tensor grid")
        vals = np.full(shape, np.inf)
        idx = tuple(np.searchsorted(axes[i], arr[:, i]) for i in range(d))
        vals[idx] = arr[:, -1]
        box = np.array([[ax[0], ax[-1]] for ax in axes])
        return cls(box, shape, vals)


def _slope_range(x, lines):
    """Finite first-difference slope range along the last axis of `lines`."""
    v = np.atleast_2d(lines)
    dv = np.diff(v, axis=-1)
    dx = np.diff(x)
    with np.errstate(invalid="ignore"):
        slopes = dv / dx
    finite = np.isfinite(slopes)
    if not finite.any():
        raise GridTooCoarse("no finite adjacent node pair along an axis")
    return float(np.min(slopes[finite])), float(np.max(slopes[finite]))


def discrete_conjugate_1d(x, f, s):
    """max_i (s * x_i - f_i) for each s, via the lower convex hull.

    Ties on equal slopes resolve to the smallest index because a collinear
    middle vertex is dropped. Nonfinite f nodes never attain the maximum.
    """
    x = np.asarray(x, dtype=float)
    f = np.asarray(f, dtype=float)
    keep = np.isfinite(f)
    if not keep.any():
        return np.full(len(s), -np.inf)
    xs, fs = x[keep], f[keep]
    hx, hf = [], []
    for xi, fi in zip(xs, fs):
        while len(hx) >= 2:
            # pop the middle point if it lies on or above the new chord
            cross = (hx[-1] - hx[-2]) * (fi - hf[-2]) - (xi - hx[-2]) * (hf[-1] - hf[-2])
            if cross <= 0:
                hx.pop()
                hf.pop()
            else:
                break
        hx.append(xi)
        hf.append(fi)
    hx = np.array(hx)
    hf = np.array(hf)
    if len(hx) == 1:
        return s * hx[0] - hf[0]
    slopes = np.diff(hf) / np.diff(hx)
    idx = np.searchsorted(slopes, s, side="left")
    return s * hx[idx] - hf[idx]


class GridFn(ConvexFunction):
    """ConvexFunction view of a GridFunction (+inf outside the box)."""

    def __init__(self, grid):
        self.grid = grid
        self.dim = grid.dim

    def value_many(self, X):
        return self.grid.interpolate(X, outside=np.inf)

    def prox_many(self, Y, tau=1.0):
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if self.dim != 1:
            return self._prox_coord(Y, tau)
        ax = self.grid.axes()[0]
        v = self.grid.values
        out = np.empty((Y.shape[0], 1))
        for i, y in enumerate(Y[:, 0]):
            out[i, 0] = _grid_prox_1d(ax, v, y, tau)
        return out

    def _prox_coord(self, Y, tau, sweeps=60):
        out = np.empty_like(Y)
        for r, y in enumerate(Y):
            z = np.clip(y, self.grid.box[:, 0], self.grid.box[:, 1])
            for _ in range(sweeps):
                z_old = z.copy()
                for a in range(self.dim):
                    zs = np.tile(z, (self.grid.shape[a], 1))
                    zs[:, a] = self.grid.axes()[a]
                    vals = self.value_many(zs) + \
                        0.5 * np.sum((zs - y) ** 2, axis=1) / tau
                    k = int(np.argmin(vals))
                    lo = max(k - 1, 0)
                    hi = min(k + 1, self.grid.shape[a] - 1)
                    g = lambda t: self._axis_obj(z, a, t, y, tau)
                    t, _ = optim.golden_section(g, self.grid.axes()[a][lo],
                                                self.grid.axes()[a][hi], tol=1e-12)
                    z[a] = t
                if np.max(np.abs(z - z_old)) < 1e-12:
                    break
            out[r] = z
        return out

    def _axis_obj(self, z, a, t, y, tau):
        zz = z.copy()
        zz[a] = t
        return float(self.value_many(zz[None, :])[0]
                     + 0.5 * np.sum((zz - y) ** 2) / tau)

    def conjugate(self):
        return GridFn(self.grid.legendre())


def _grid_prox_1d(ax, vals, y, tau):
    """Exact prox of the 1d piecewise-linear interpolant (+inf outside)."""
    finite = np.isfinite(vals)
    cand_x = list(ax[finite])
    for k in range(len(ax) - 1):
        if finite[k] and finite[k + 1]:
            slope = (vals[k + 1] - vals[k]) / (ax[k + 1] - ax[k])
            t = y - tau * slope
            if ax[k] < t < ax[k + 1]:
                cand_x.append(t)
    cand_x = np.array(cand_x)
    fvals = np.interp(cand_x, ax[finite], vals[finite])
    obj = fvals + 0.5 * (cand_x - y) ** 2 / tau
    return float(cand_x[np.argmin(obj)])


# ---------------------------------------------------------------------------
# operations


def conjugate(f, box=None, nodes=129, pad=0.1):
    """Legendre-Fenchel conjugate; closed form when the catalog admits one.

    Falls back to sampling f on `box` (default [-8, 8]^d) and running the
    grid transform. Fails with DimensionTooHigh above dimension 4 and
    GridTooCoarse when the dual slope box collapses.
    """
    try:
        return f.conjugate()
    except NotImplementedError:
        pass
    d = f.dim
    if d > MAX_GRID_DIM:
        raise DimensionTooHigh(f"grid conjugate limited to dimension {MAX_GRID_DIM}")
    if box is None:
        box = np.array([[-8.0, 8.0]] * d)
    box = np.atleast_2d(np.asarray(box, dtype=float))
    g = sample_to_grid(f, box, nodes)
    return GridFn(g.legendre(pad=pad))


def sample_to_grid(f, box, nodes):
    box = np.atleast_2d(np.asarray(box, dtype=float))
    d = box.shape[0]
    if np.isscalar(nodes):
        nodes = (int(nodes),) * d
    axes = [np.linspace(box[i, 0], box[i, 1], nodes[i]) for i in range(d)]
    mesh = np.meshgrid(*axes, indexing="ij")
    X = np.stack([m.ravel() for m in mesh], axis=1)
    vals = f.value_many(X).reshape([len(a) for a in axes])
    return GridFunction(box, nodes, vals)


def prox(f, tau, y):
    """argmin_x f(x) + |x - y|^2 / (2 tau)."""
    if tau <= 0:
        raise ValueError("step must be positive")
    return f.prox(y, tau)


class InfConvolution(ConvexFunction):
    """(f []-conv g)(x) = inf_z f(z) + g(x - z), evaluated per probe."""

    def __init__(self, f, g):
        if f.dim != g.dim:
            raise DimensionMismatch("inf-convolution of unequal dimensions")
        self.f = f
        self.g = g
        self.dim = f.dim

    def value_many(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.array([self._value_one(x) for x in X])

    def _value_one(self, x):
        f, g = self.f, self.g
        guard = 1e8 * (1.0 + np.linalg.norm(x))
        if f.is_smooth:
            def sval(z):
                return float(f.value_many(z[None, :])[0])

            def sgrad(z):
                return f.grad_many(z[None, :])[0]

            def pg(v, t):
                return x - g.prox_many((x - v)[None, :], t)[0]

            z, _, _ = optim.prox_gradient(x / 2.0, sval, sgrad, pg, tol=1e-12)
        elif g.is_smooth:
            def sval(z):
                return float(g.value_many((x - z)[None, :])[0])

            def sgrad(z):
                return -g.grad_many((x - z)[None, :])[0]

            def pf(v, t):
                return f.prox_many(v[None, :], t)[0]

            z, _, _ = optim.prox_gradient(x / 2.0, sval, sgrad, pf, tol=1e-12)
        else:
            def proxF(S):
                return f.prox_many(S, 1.0)

            def proxG(S):
                return x - g.prox_many(x - S, 1.0)

            z, _, _ = optim.douglas_rachford(proxF, proxG, (x / 2.0)[None, :])
            z = z[0]
        if np.linalg.norm(z) > guard:
            raise Unbounded("inner infimum appears unbounded below")
        return xsum(float(f.value_many(z[None, :])[0]),
                    float(g.value_many((x - z)[None, :])[0]))

    def conjugate(self):
        return SumFn([self.f.conjugate(), self.g.conjugate()])


def inf_convolve(f, g):
    """Infimal convolution; closed forms for indicator points and quadratics."""
    if isinstance(g, IndicatorBox) and np.allclose(g.lower, g.upper):
        return Shifted(f, g.lower) if np.any(g.lower != 0) else f
    if isinstance(f, IndicatorBox) and np.allclose(f.lower, f.upper):
        return Shifted(g, f.lower) if np.any(f.lower != 0) else g
    if isinstance(f, Quadratic) and isinstance(g, Quadratic):
        try:
            return add_convex(f.conjugate(), g.conjugate()).conjugate()
        except (NotImplementedError, np.linalg.LinAlgError):
            pass
    return InfConvolution(f, g)


def add_convex(f, g):
    """Pointwise sum, merging quadratics analytically when possible."""
    if isinstance(f, Quadratic) and isinstance(g, Quadratic):
        return Quadratic(f.Q + g.Q, f.b + g.b, f.c + g.c)
    return SumFn([f, g])


def moreau_envelope(f, Y, tau=1.0):
    """Batched Moreau envelope value and prox point."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    P = f.prox_many(Y, tau)
    vals = f.value_many(P) + 0.5 * np.sum((P - Y) ** 2, axis=1) / tau
    return vals, P

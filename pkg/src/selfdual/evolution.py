"""Discretized path-space functionals for evolution equations.

A path u minimizes

    sum_k dt * L_k(mid_k, -diff_k)  +  ell(u_0, u_M)

where mid/diff are interval midpoints and forward differences and ell is a
boundary potential evaluated at (u_0 - u_M, -(u_0 + u_M)/2). With midpoint
states the discrete summation by parts telescopes exactly, so the functional
splits into nonnegative per-interval gaps plus a boundary gap: reaching zero
certifies the implicit-midpoint inclusions together with the time-boundary
inclusion. For the initial-value boundary potential the boundary gap is
exactly |u_0 - x_0|^2.
"""

import csv
import warnings

import numpy as np

from . import convex as cv
from . import optim
from . import tolerances as tol
from .calculus import TransformSpec, transform
from .errors import DimensionMismatch, NoConvergence
from .lagrangian import (Certificate, GradConvex, MonotoneOperator,
                         SumFormLagrangian, pack_many, potential_for)
from .solve import resolvent


class TimeGrid:
    """Uniform mesh of [0, t_end] with steps intervals."""

    def __init__(self, steps, t_end=1.0):
        steps = int(steps)
        if steps < 2:
            raise ValueError("need at least 2 intervals")
        if t_end <= 0:
            raise ValueError("horizon must be positive")
        self.steps = steps
        self.t_end = float(t_end)
        self.dt = self.t_end / steps
        self.nodes = np.linspace(0.0, self.t_end, steps + 1)

    @property
    def midpoints(self):
        return 0.5 * (self.nodes[:-1] + self.nodes[1:])


class Path:
    """Node values of a discrete arc with its difference quotients."""

    def __init__(self, grid, values):
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.shape[0] != grid.steps + 1:
            raise DimensionMismatch("one value row per time node")
        if not np.isfinite(values).all():
            raise ValueError("path values must be finite")
        self.grid = grid
        self.values = values
        self.dim = values.shape[1]

    @property
    def derivative(self):
        return np.diff(self.values, axis=0) / self.grid.dt

    @property
    def midstates(self):
        return 0.5 * (self.values[:-1] + self.values[1:])

    def at_end(self):
        return self.values[-1]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"u_{i+1}" for i in range(self.dim)])
            for t, row in zip(self.grid.nodes, self.values):
                w.writerow([f"{t:.12g}"] + [f"{v:.12g}" for v in row])


class BoundaryOp:
    """Time-boundary operator S with its potential.

    The boundary term in every path functional is L_S(u0 - uM, -(u0+uM)/2);
    zero boundary gap encodes -(u0+uM)/2 in S(u0 - uM).
    """

    def __init__(self, S, x0=None):
        if not isinstance(S, MonotoneOperator):
            raise DimensionMismatch("boundary operator must be a MonotoneOperator")
        self.S = S
        self.L = potential_for(S, validate=False)
        self.x0 = None if x0 is None else np.atleast_1d(np.asarray(x0, dtype=float))
        self.dim = S.dim

    @classmethod
    def initial_value(cls, x0):
        """Encodes u(0) = x0 through phi(x) = |x|^2/4 - <x, x0>."""
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        d = len(x0)
        phi = cv.Quadratic(0.5 * np.eye(d), -x0)
        return cls(GradConvex(phi), x0=x0)

    def term_many(self, U0, UM):
        A = U0 - UM
        B = -0.5 * (U0 + UM)
        return self.L.value_many(pack_many(A, B))

    def gap_many(self, U0, UM):
        A = U0 - UM
        B = -0.5 * (U0 + UM)
        return self.L.value_many(pack_many(A, B)) - np.sum(A * B, axis=1)

    def grad(self, u0, uM):
        a = u0 - uM
        b = -0.5 * (u0 + uM)
        G = self.L.grad_pair_many(pack_many(a[None, :], b[None, :]))[0]
        ga, gb = G[:self.dim], G[self.dim:]
        return ga - 0.5 * gb, -ga - 0.5 * gb


class TimeDependentOperator:
    """A single operator or one operator per interval, with cached potentials.

    Midpoints between nodes use the left node's operator. An optional
    per-interval dilation weight lam_k replaces the potential by its
    epigraphical scaling (used by the exponentially weighted flows).
    """

    def __init__(self, ops, steps=None, weights=None):
        if isinstance(ops, MonotoneOperator):
            if steps is None:
                raise ValueError("steps required for a stationary operator")
            ops = [ops] * steps
        self.ops = list(ops)
        if not self.ops:
            raise ValueError("empty operator list")
        self.dim = self.ops[0].dim
        if any(o.dim != self.dim for o in self.ops):
            raise DimensionMismatch("operator dimensions differ across time")
        self.weights = None if weights is None else np.asarray(weights, dtype=float)
        base = {}
        self._pot = []
        for k, o in enumerate(self.ops):
            if id(o) not in base:
                base[id(o)] = potential_for(o, validate=False)
            L = base[id(o)]
            if self.weights is not None and self.weights[k] != 1.0:
                L = transform(L, TransformSpec.scale(float(self.weights[k])))
            self._pot.append(L)

    def __len__(self):
        return len(self.ops)

    def potential(self, k):
        return self._pot[k]

    def operator(self, k):
        return self.ops[k]

    def weight(self, k):
        return 1.0 if self.weights is None else float(self.weights[k])

    @property
    def is_smooth(self):
        return all(L.is_smooth for L in self._pot)


def path_functional(Tt, B, path):
    """Discrete evolution functional of a path (trapezoid in time)."""
    grid = path.grid
    if len(Tt) != grid.steps:
        raise DimensionMismatch("need one operator per interval")
    M = path.midstates
    D = path.derivative
    total = 0.0
    for k in range(grid.steps):
        total += grid.dt * float(
            Tt.potential(k).value_many(pack_many(M[k][None, :], -D[k][None, :]))[0])
    total += float(B.term_many(path.values[0][None, :], path.values[-1][None, :])[0])
    return total


def interval_gaps(Tt, path):
    """Per-interval values of L(mid, -diff) + <mid, diff> (all nonnegative)."""
    M = path.midstates
    D = path.derivative
    out = np.empty(path.grid.steps)
    for k in range(path.grid.steps):
        out[k] = float(Tt.potential(k).value_many(
            pack_many(M[k][None, :], -D[k][None, :]))[0] + M[k] @ D[k])
    return out


def _functional_and_grad(Tt, B, grid, d):
    dt = grid.dt
    steps = grid.steps

    def value(Uflat):
        U = Uflat.reshape(steps + 1, d)
        Mid = 0.5 * (U[:-1] + U[1:])
        Dif = np.diff(U, axis=0) / dt
        total = 0.0
        for k in range(steps):
            total += dt * float(Tt.potential(k).value_many(
                pack_many(Mid[k][None, :], -Dif[k][None, :]))[0])
        total += float(B.term_many(U[0][None, :], U[-1][None, :])[0])
        return total

    def grad(Uflat):
        U = Uflat.reshape(steps + 1, d)
        Mid = 0.5 * (U[:-1] + U[1:])
        Dif = np.diff(U, axis=0) / dt
        g = np.zeros_like(U)
        for k in range(steps):
            G = Tt.potential(k).grad_pair_many(
                pack_many(Mid[k][None, :], -Dif[k][None, :]))[0]
            gx, gp = G[:d], G[d:]
            g[k] += 0.5 * dt * gx + gp
            g[k + 1] += 0.5 * dt * gx - gp
        g0, gM = B.grad(U[0], U[-1])
        g[0] += g0
        g[-1] += gM
        return g.ravel()

    return value, grad


def _growth_probe(Tt, B, d, scale=8.0, n=16, seed=0):
    """Quadratic-growth analog of the boundedness hypotheses, on rays."""
    rng = np.random.default_rng(seed)
    X = scale * rng.standard_normal((n, d))
    Z = pack_many(X, np.zeros_like(X))
    ok = True
    for k in range(min(len(Tt), 4)):
        v = Tt.potential(k).value_many(Z)
        finite = np.isfinite(v)
        if finite.any():
            C = np.max(v[finite] / (1.0 + np.sum(X[finite] ** 2, axis=1)))
            if C > 1e3:
                ok = False
    if not ok:
        warnings.warn("quadratic growth probe failed; minimizing anyway",
                      RuntimeWarning)
    return ok


def midpoint_step_path(Tt, x0, grid, weights_for_resolvent=None):
    """Implicit midpoint stepping: mid = resolvent(dt/2), next = 2 mid - u."""
    d = len(np.atleast_1d(x0))
    U = np.empty((grid.steps + 1, d))
    U[0] = np.atleast_1d(np.asarray(x0, dtype=float))
    for k in range(grid.steps):
        lam = 1.0 if weights_for_resolvent is None else weights_for_resolvent[k]
        m = resolvent(Tt.operator(k), 0.5 * grid.dt, U[k] / lam)
        U[k + 1] = 2.0 * lam * m - U[k]
    return U


def implicit_euler_path(Tt, x0, grid):
    """Backward Euler through resolvents, for oracle comparisons."""
    d = len(np.atleast_1d(x0))
    U = np.empty((grid.steps + 1, d))
    U[0] = np.atleast_1d(np.asarray(x0, dtype=float))
    for k in range(grid.steps):
        U[k + 1] = resolvent(Tt.operator(k), grid.dt, U[k])
    return Path(grid, U)


def solve_evolution(Tt, B, grid, polish=True, gap_tol=None):
    """Minimize the discrete evolution functional over paths.

    Returns (path, certificate, report). The report carries per-interval
    gaps and the boundary gap; for an initial-value boundary the latter is
    |u_0 - x_0|^2, so a zero certificate pins the initial condition.
    """
    if isinstance(Tt, MonotoneOperator):
        Tt = TimeDependentOperator(Tt, steps=grid.steps)
    if len(Tt) != grid.steps:
        raise DimensionMismatch("need one operator per interval")
    d = Tt.dim
    if gap_tol is None:
        scale = 1.0 + (float(np.linalg.norm(B.x0)) if B.x0 is not None else 1.0)
        gap_tol = tol.tol_evolution(grid.dt, scale)
    _growth_probe(Tt, B, d)
    if B.x0 is not None:
        U0 = midpoint_step_path(Tt, B.x0, grid, weights_for_resolvent=Tt.weights)
    else:
        U0 = np.zeros((grid.steps + 1, d))
    value, grad = _functional_and_grad(Tt, B, grid, d)
    f0 = value(U0.ravel())
    iterations = 0
    U = U0
    smooth = Tt.is_smooth and B.L.is_smooth
    if polish and smooth and f0 > 1e-13:
        x, fx, iterations, _ = optim.lbfgs(value, grad, U0.ravel(), tol=1e-11)
        if fx < f0:
            U = x.reshape(grid.steps + 1, d)
            f0 = fx
    elif polish and not smooth and f0 > gap_tol:
        raise NoConvergence(0, f0, "nonsmooth path functional above tolerance")
    path = Path(grid, U)
    gaps = interval_gaps(Tt, path)
    bgap = float(B.gap_many(U[0][None, :], U[-1][None, :])[0])
    cert = Certificate(value=float(f0), point=U[-1].copy(), iterations=iterations,
                       tolerance=gap_tol, converged=bool(f0 <= gap_tol))
    report = {
        "certificate": cert.as_dict(),
        "interval_gaps": gaps.tolist(),
        "boundary_gap": bgap,
        "boundary_residual": (float(np.linalg.norm(U[0] - B.x0))
                              if B.x0 is not None else None),
    }
    return path, cert, report


def semigroup_flow(T, omega, x0, t_end, steps, polish=False, full_path=False):
    """Flow map of -du/dt - omega u in T(u) at time t_end, variationally.

    Works in the substituted variable v = exp(omega t) u, where the
    functional is an evolution functional with per-interval dilation
    weights exp(omega t_mid); the returned point is exp(-omega t_end) v(M).
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    grid = TimeGrid(steps, t_end)
    lam = np.exp(omega * grid.midpoints)
    Tt = TimeDependentOperator(T, steps=grid.steps, weights=lam)
    B = BoundaryOp.initial_value(x0)
    path, cert, report = solve_evolution(Tt, B, grid, polish=polish)
    u_vals = path.values * np.exp(-omega * grid.nodes)[:, None]
    u_path = Path(grid, u_vals)
    if full_path:
        return u_path.at_end(), u_path, cert
    return u_path.at_end()


def connect_graphs(Tt, S1, S2, grid, polish=True, gap_tol=None):
    """Couple two arcs through a monotone map on pairs and two boundary graphs.

    Minimizes  sum_k dt L_T((v,u)_mid, (du, dv)) + L_S1(v0, u0)
               + L_S2(-u_M, v_M);
    zero certifies (du, dv) in T(v, u) per interval with the two boundary
    inclusions u0 in S1(v0) and -u_M in S2(v_M).
    """
    if isinstance(Tt, MonotoneOperator):
        Tt = TimeDependentOperator(Tt, steps=grid.steps)
    if Tt.dim % 2:
        raise DimensionMismatch("pair operator must act on an even dimension")
    d = Tt.dim // 2
    if S1.dim != d or S2.dim != d:
        raise DimensionMismatch("boundary operators must act on each arc's space")
    LS1 = potential_for(S1, validate=False)
    LS2 = potential_for(S2, validate=False)
    if gap_tol is None:
        gap_tol = tol.tol_evolution(grid.dt)
    dt = grid.dt
    steps = grid.steps
    n = (steps + 1) * d

    def unpackUV(zflat):
        U = zflat[:n].reshape(steps + 1, d)
        V = zflat[n:].reshape(steps + 1, d)
        return U, V

    def value(zflat):
        U, V = unpackUV(zflat)
        mu = 0.5 * (U[:-1] + U[1:])
        mv = 0.5 * (V[:-1] + V[1:])
        du = np.diff(U, axis=0) / dt
        dv = np.diff(V, axis=0) / dt
        X = np.hstack([mv, mu])
        P = np.hstack([du, dv])
        total = 0.0
        for k in range(steps):
            total += dt * float(Tt.potential(k).value_many(
                np.hstack([X[k], P[k]])[None, :])[0])
        total += float(LS1.value_many(np.hstack([V[0], U[0]])[None, :])[0])
        total += float(LS2.value_many(np.hstack([-U[-1], V[-1]])[None, :])[0])
        return total

    def grad(zflat):
        U, V = unpackUV(zflat)
        mu = 0.5 * (U[:-1] + U[1:])
        mv = 0.5 * (V[:-1] + V[1:])
        du = np.diff(U, axis=0) / dt
        dv = np.diff(V, axis=0) / dt
        gU = np.zeros_like(U)
        gV = np.zeros_like(V)
        for k in range(steps):
            Z = np.hstack([mv[k], mu[k], du[k], dv[k]])
            G = Tt.potential(k).grad_pair_many(Z[None, :])[0]
            gmv, gmu = G[:d], G[d:2 * d]
            gdu, gdv = G[2 * d:3 * d], G[3 * d:]
            gU[k] += 0.5 * dt * gmu - gdu
            gU[k + 1] += 0.5 * dt * gmu + gdu
            gV[k] += 0.5 * dt * gmv - gdv
            gV[k + 1] += 0.5 * dt * gmv + gdv
        G1 = LS1.grad_pair_many(np.hstack([V[0], U[0]])[None, :])[0]
        gV[0] += G1[:d]
        gU[0] += G1[d:]
        G2 = LS2.grad_pair_many(np.hstack([-U[-1], V[-1]])[None, :])[0]
        gU[-1] += -G2[:d]
        gV[-1] += G2[d:]
        return np.concatenate([gU.ravel(), gV.ravel()])

    z0 = np.zeros(2 * n)
    smooth = Tt.is_smooth and LS1.is_smooth and LS2.is_smooth
    if not smooth:
        raise NoConvergence(0, np.nan, "two-graph connection needs smooth potentials")
    z, fz, its, _ = optim.lbfgs(value, grad, z0, tol=1e-11)
    U, V = unpackUV(z)
    cert = Certificate(value=float(fz), point=np.concatenate([U[-1], V[-1]]),
                       iterations=its, tolerance=gap_tol,
                       converged=bool(fz <= gap_tol))
    return Path(grid, U), Path(grid, V), cert


def evolution_report_json(report):
    import json
    return json.dumps(report, indent=2)

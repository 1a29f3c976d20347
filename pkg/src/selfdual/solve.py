"""Variational solvers built on the zero-infimum principle.

Solving p in field(x) means minimizing the nonnegative gap L(x,p) - <x,p>
over x and certifying that the minimum is (numerically) zero. The
regularized variant adds the identity map and always succeeds for a valid
selfdual potential, which is the computable content of maximality.
"""

import warnings

import numpy as np

from . import convex as cv
from . import optim
from . import tolerances as tol
from .errors import NoConvergence, NotCoercive, Unbounded, DimensionMismatch
from .lagrangian import (Certificate, GradConvex, LinearPositive, Lagrangian,
                         MonotoneOperator, SampledOperator, SkewPlusGrad,
                         SumFormLagrangian, pack_many, potential_for,
                         split_pairs)


def _coercivity_probe(f, center, radius, rng=None):
    dirs = optim.probe_directions(len(center), rng)
    return optim.rays_grow(f, center, radius, dirs)


def _scan_refine(f, center, radius, d, scan=97, rounds=8):
    """Derivative-free convex minimization by nested scans (d <= 3)."""
    c = np.asarray(center, dtype=float).copy()
    width = radius
    best = None
    for r in range(rounds):
        if d == 1:
            ts = np.linspace(c[0] - width, c[0] + width, scan)[:, None]
            v = f(ts)
            k = int(np.argmin(v))
            best = (ts[k].copy(), float(v[k]))
            c = ts[k].copy()
        else:
            for i in range(d):
                ts = np.linspace(c[i] - width, c[i] + width, scan)
                P = np.tile(c, (scan, 1))
                P[:, i] = ts
                v = f(P)
                c[i] = ts[int(np.argmin(v))]
            best = (c.copy(), float(f(c[None, :])[0]))
        width /= float(scan - 1) / 2.5
    return best


def _gap_grad(L, p):
    def g(x):
        G = L.grad_pair_many(pack_many(x[None, :], p[None, :]))[0]
        return G[:L.dim] - p
    return g


def solve_static(L, p, x0=None, gap_tol=None, probe_radius=None, trace=None):
    """Minimize x -> L(x, p) - <x, p>; a certificate near zero solves p in field(x).

    Probes coercivity along rays first; a failed probe downgrades to a boxed
    minimization and raises NotCoercive only if the minimum sits on the box
    boundary.
    """
    p = np.atleast_1d(np.asarray(p, dtype=float))
    d = L.dim
    if gap_tol is None:
        gap_tol = tol.TOL_GAP if L.selfdual_by_construction and L.form in ("sum", "transformed", "direct_sum", "cross", "block") else tol.TOL_GAP_GRID
    if probe_radius is None:
        probe_radius = 10.0 * (1.0 + float(np.linalg.norm(p)))
    x0 = np.zeros(d) if x0 is None else np.asarray(x0, dtype=float)

    def fmany(X):
        X = np.atleast_2d(X)
        return L.value_many(pack_many(X, np.tile(p, (len(X), 1)))) - X @ p

    def fone(x):
        return float(fmany(np.asarray(x, dtype=float)[None, :])[0])

    coercive = _coercivity_probe(fone, x0, probe_radius)
    if not coercive:
        warnings.warn("gap objective may not be coercive; using a boxed search",
                      RuntimeWarning)
    iterations = 0
    if L.is_smooth:
        x, fx, iterations, ok = optim.lbfgs(fone, _gap_grad(L, p), x0, tol=1e-12)
        if hasattr(L, "_hess_pair"):
            def hx(xx):
                return L._hess_pair(np.concatenate([xx, p]))[:d, :d]
            x, k2, _ = optim.newton_polish(_gap_grad(L, p), hx, x, tol=1e-13)
            iterations += k2
        fx = fone(x)
    else:
        if d > 3:
            raise NoConvergence(0, np.nan, "nonsmooth static solve limited to d <= 3")
        x, fx = _scan_refine(fmany, x0, probe_radius, d)
        iterations = 8
    if not coercive and float(np.max(np.abs(x))) >= probe_radius * 0.99:
        raise NotCoercive("minimum attained on the probe box boundary")
    cert = Certificate(value=float(fx), point=np.asarray(x, dtype=float),
                       iterations=iterations, tolerance=gap_tol,
                       converged=bool(fx <= gap_tol))
    if trace is not None:
        trace.append((iterations, fx, 0.0, 0.0))
    return np.asarray(x, dtype=float), cert


def solve_regularized(L, p, gap_tol=None):
    """Solve p in field(x) + x by minimizing the regularized gap.

    Returns (x, r, certificate) where r is the splitting witness; at the
    minimum r = x and p - r lies in the field at x. Succeeds for every
    valid selfdual potential (numerical surjectivity of field + identity).
    """
    p = np.atleast_1d(np.asarray(p, dtype=float))
    d = L.dim
    if gap_tol is None:
        gap_tol = tol.TOL_GAP if isinstance(L, SumFormLagrangian) else tol.TOL_GAP_GRID
    if isinstance(L, SumFormLagrangian):
        x, its = _forward_backward_inclusion(L.phi, L.gamma, p)
        r = x
    else:
        def fmany(X):
            X = np.atleast_2d(X)
            P = np.tile(p, (len(X), 1)) - X
            Z = pack_many(X, P)
            return L.value_many(Z) - np.sum(X * P, axis=1)
        x, _ = _scan_refine(fmany, np.zeros(d), 4.0 * (1.0 + np.linalg.norm(p)), d)
        r = x
        its = 8
    s = p - r
    val = float(L.value_many(pack_many(x[None, :], s[None, :]))[0] - x @ s
                + 0.5 * np.sum((x - r) ** 2))
    cert = Certificate(value=val, point=x, iterations=its, tolerance=gap_tol,
                       converged=bool(val <= gap_tol))
    if not cert.converged:
        raise NoConvergence(its, val, "regularized solve")
    return x, r, cert


def _forward_backward_inclusion(phi, gamma, p, extra=1.0, maxit=50000):
    """Solve p in extra*x + gamma x + subdiff phi(x) by forward-backward."""
    d = phi.dim
    A = extra * np.eye(d) + gamma
    ell = float(np.linalg.norm(A, 2))
    step = min(1.8 * extra / (ell * ell), 1.0 / extra)
    x = np.zeros(d)
    for k in range(maxit):
        x_new = phi.prox_many((x - step * (A @ x - p))[None, :], step)[0]
        if np.max(np.abs(x_new - x)) < 1e-15 * (1.0 + np.max(np.abs(x_new))):
            return x_new, k + 1
        x = x_new
    return x, maxit


def resolvent(T, lam, y):
    """(I + lam T)^{-1} y; single valued by strong monotonicity."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if isinstance(T, GradConvex):
        return T.phi.prox_many(y[None, :], lam)[0]
    if isinstance(T, LinearPositive):
        return np.linalg.solve(np.eye(T.dim) + lam * T.B, y)
    if isinstance(T, SkewPlusGrad):
        x, _ = _forward_backward_inclusion(cv.Scaled(T.phi, lam) if lam != 1.0 else T.phi,
                                           lam * T.gamma, y)
        return x
    if isinstance(T, SampledOperator):
        L = potential_for(T, validate=False)

        def fmany(X):
            X = np.atleast_2d(X)
            S = (np.tile(y, (len(X), 1)) - X) / lam
            return lam * (L.value_many(pack_many(X, S)) - np.sum(X * S, axis=1))
        lo = float(T.graph.X.min())
        hi = float(T.graph.X.max())
        x, val = _scan_refine(fmany, np.array([(lo + hi) / 2.0] * T.dim),
                              0.6 * (hi - lo) + np.linalg.norm(y), T.dim)
        return x
    raise NoConvergence(0, np.nan, "unsupported operator variant for resolvent")


# ---------------------------------------------------------------------------
# block superposition


class Block:
    """(L, A, Gamma) with optional affine offsets on both slots."""

    def __init__(self, L, A, gamma, a_off=None, g_off=None):
        self.L = L
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.gamma = np.atleast_2d(np.asarray(gamma, dtype=float))
        d = L.dim
        self.a_off = np.zeros(d) if a_off is None else np.asarray(a_off, dtype=float)
        self.g_off = np.zeros(d) if g_off is None else np.asarray(g_off, dtype=float)
        if self.A.shape[0] != d or self.gamma.shape[0] != d:
            raise DimensionMismatch("block maps must land in the part's space")


class BlockSystem:
    """Finite family of potentials coupled through linear maps of one variable.

    gap_i(z) = L_i(A_i z + a_i, Gamma_i z + c_i) - <A_i z + a_i, Gamma_i z + c_i>
    is nonnegative for selfdual parts; their sum is the objective. Requires
    the cancellation identity sum_i <A_i z, Gamma_i z> = 0 (checked on random
    probes) and an invertible stacked Gamma (condition number reported).
    """

    def __init__(self, blocks, check=True, seed=0):
        self.blocks = list(blocks)
        self.zdim = self.blocks[0].A.shape[1]
        for b in self.blocks:
            if b.A.shape[1] != self.zdim or b.gamma.shape[1] != self.zdim:
                raise DimensionMismatch("all blocks must share the z dimension")
        self.gamma_stack = np.vstack([b.gamma for b in self.blocks])
        if self.gamma_stack.shape[0] != self.zdim:
            raise DimensionMismatch("stacked Gamma must be square")
        self.condition_number = float(np.linalg.cond(self.gamma_stack))
        if check:
            self._validate(seed)

    def _validate(self, seed, n=50, tol_id=1e-9):
        rng = np.random.default_rng(seed)
        Z = rng.standard_normal((n, self.zdim))
        total = np.zeros(n)
        for b in self.blocks:
            total += np.einsum("ij,ij->i", Z @ b.A.T, Z @ b.gamma.T)
        worst = float(np.max(np.abs(total)))
        if worst > tol_id:
            raise ValueError(f"cancellation identity fails on probes ({worst:.2e})")
        if not np.isfinite(self.condition_number) or self.condition_number > 1e12:
            raise ValueError("stacked Gamma is numerically singular")

    def gaps_many(self, Z):
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        out = []
        for b in self.blocks:
            U = Z @ b.A.T + b.a_off
            V = Z @ b.gamma.T + b.g_off
            out.append(b.L.value_many(np.hstack([U, V])) - np.sum(U * V, axis=1))
        return np.stack(out, axis=1)

    def objective_many(self, Z):
        return np.sum(self.gaps_many(Z), axis=1)

    def gradient(self, z):
        z = np.asarray(z, dtype=float)
        g = np.zeros_like(z)
        for b in self.blocks:
            u = b.A @ z + b.a_off
            v = b.gamma @ z + b.g_off
            G = b.L.grad_pair_many(np.hstack([u, v])[None, :])[0]
            gu, gv = G[:b.L.dim], G[b.L.dim:]
            g = g + (gu - v) @ b.A + (gv - u) @ b.gamma
        return g

    @property
    def is_smooth(self):
        return all(b.L.is_smooth for b in self.blocks)


def superposed_solve(sys, z0=None, gap_tol=None, probe_radius=20.0):
    """Minimize the summed block gaps; zero certifies every block inclusion."""
    if gap_tol is None:
        gap_tol = tol.TOL_GAP
    z0 = np.zeros(sys.zdim) if z0 is None else np.asarray(z0, dtype=float)

    def fone(z):
        return float(sys.objective_many(np.asarray(z, dtype=float)[None, :])[0])

    if not _coercivity_probe(fone, z0, probe_radius):
        warnings.warn("block objective may not be coercive", RuntimeWarning)
    if sys.is_smooth:
        z, fz, its, ok = optim.lbfgs(fone, sys.gradient, z0, tol=1e-12)
    else:
        if sys.zdim > 3:
            raise NoConvergence(0, np.nan, "nonsmooth block solve limited to small z")
        z, fz = _scan_refine(sys.objective_many, z0, probe_radius, sys.zdim)
        its = 8
    cert = Certificate(value=float(fz), point=np.asarray(z, dtype=float),
                       iterations=its, tolerance=gap_tol,
                       converged=bool(fz <= gap_tol))
    return np.asarray(z, dtype=float), cert


# ---------------------------------------------------------------------------
# co-Hamiltonian


def cohamiltonian(L, p, q, box_radius=None, return_info=False):
    """Partial conjugate sup_y <y, p> - L(y, q).

    Concave in q, convex in p, nonpositive on the diagonal. An unbounded sup
    is reported as +inf with a boundary-attainment marker in the info dict.
    """
    p = np.atleast_1d(np.asarray(p, dtype=float))
    q = np.atleast_1d(np.asarray(q, dtype=float))
    d = L.dim
    if isinstance(L, SumFormLagrangian) and not L.has_skew:
        val = (L.phi_star.value_many(p[None, :])[0]
               - L.phi_star.value_many(q[None, :])[0])
        if return_info:
            return float(val), {"boundary_attained": False}
        return float(val)
    if box_radius is None:
        box_radius = 12.0 * (1.0 + float(np.linalg.norm(p)) + float(np.linalg.norm(q)))

    def neg_many(Y):
        Y = np.atleast_2d(Y)
        return L.value_many(pack_many(Y, np.tile(q, (len(Y), 1)))) - Y @ p

    y, nv = _scan_refine(neg_many, np.zeros(d), box_radius, d)
    boundary = bool(np.max(np.abs(y)) >= 0.98 * box_radius)
    val = np.inf if boundary else -nv
    if return_info:
        return float(val), {"boundary_attained": boundary, "argmax": y}
    return float(val)

"""One-dimensional model problems with certified variational solves.

Elliptic:   -(T(u'))' + lam u = g  on (0, l), zero Dirichlet.
Parabolic:   u_t - (T(u_x))_x = g  with a variational time boundary.

The discretization uses forward differences on a staggered grid so that
G' G equals the Dirichlet second-difference matrix exactly. That makes the
assembled functional a plain sum of per-edge potential gaps

    J(u) = h * sum_e [ L(a_e, (Gu)_e) - a_e (Gu)_e ],
    a(u) = G (-Lap)^{-1} (-lam u + g),

nonnegative term by term, with zero infimum at the discrete solution. The
potential L is the one whose field inverts the flux map, so a zero gap at
an edge says a_e lies in T applied to the discrete gradient.
"""

import csv
import warnings

import numpy as np
import scipy.linalg as sla

from . import convex as cv
from . import optim
from . import tolerances as tol
from .errors import DimensionMismatch, NoConvergence, NotCoercive
from .lagrangian import (Certificate, GradConvex, MonotoneOperator,
                         SumFormLagrangian, pack_many, potential_for,
                         transpose)
from .solve import Block, BlockSystem, superposed_solve


class Mesh1D:
    """Interval (0, length) with n interior nodes and Dirichlet ends."""

    def __init__(self, n, length=1.0):
        n = int(n)
        if n < 3:
            raise ValueError("need at least 3 interior nodes")
        if length <= 0:
            raise ValueError("length must be positive")
        self.n = n
        self.length = float(length)
        self.h = self.length / (n + 1)
        self.nodes = np.linspace(self.h, self.length - self.h, n)

    def grad_matrix(self):
        """Forward differences including both boundary edges, (n+1) x n."""
        n, h = self.n, self.h
        G = np.zeros((n + 1, n))
        for e in range(n + 1):
            if e < n:
                G[e, e] = 1.0 / h
            if e > 0:
                G[e, e - 1] = -1.0 / h
        return G

    def laplacian(self):
        G = self.grad_matrix()
        return G.T @ G

    def poincare_constant(self):
        """Smallest Dirichlet eigenvalue of the discrete -Laplacian."""
        return (2.0 / self.h ** 2) * (1.0 - np.cos(np.pi * self.h / self.length))


def flux_potential(T):
    """Potential whose field is the inverse flux map T^{-1}."""
    return transpose(potential_for(T, validate=False))


class EllipticProblem:
    """Flux map T, reaction coefficient lam and source g on a 1D mesh."""

    def __init__(self, T, lam, g, mesh, check=True):
        if not isinstance(T, MonotoneOperator) or T.dim != 1:
            raise DimensionMismatch("flux map must be a 1D monotone operator")
        self.T = T
        self.lam = float(lam)
        self.g = np.asarray(g, dtype=float)
        if self.g.shape != (mesh.n,):
            raise DimensionMismatch("source must have one value per interior node")
        self.mesh = mesh
        self.L = flux_potential(T)
        self.G = mesh.grad_matrix()
        self.D = self.G.T @ self.G
        self._lu = sla.lu_factor(self.D)
        if check:
            self.validate()

    def validate(self):
        ys = np.linspace(-8.0, 8.0, 33)
        Z = pack_many(ys[:, None], np.zeros((33, 1)))
        v = self.L.value_many(Z)
        finite = np.isfinite(v)
        if not finite.any():
            raise NotCoercive("flux potential has empty growth probe")
        self.growth_constant = float(np.max(
            np.maximum(v[finite], 0.0) / (1.0 + ys[finite] ** 2)))
        lam1 = self.mesh.poincare_constant()
        self.coercivity_margin = self.lam + lam1 / max(self.growth_constant, 1e-12)
        if self.coercivity_margin <= 0:
            raise NotCoercive(
                f"lam = {self.lam} below the Poincare bound "
                f"-lam1/C = {-lam1 / self.growth_constant:.4g}")

    def poisson_solve(self, rhs):
        return sla.lu_solve(self._lu, rhs)

    def dual_gradient(self, u):
        """a(u) = G (-Lap)^{-1} (-lam u + g), one value per edge."""
        return self.G @ self.poisson_solve(-self.lam * u + self.g)

    def functional(self, u):
        b = self.G @ u
        a = self.dual_gradient(u)
        vals = self.L.value_many(pack_many(a[:, None], b[:, None]))
        h = self.mesh.h
        return h * float(np.sum(vals)) + h * float(self.lam * u @ u - u @ self.g)

    def edge_gaps(self, u):
        b = self.G @ u
        a = self.dual_gradient(u)
        vals = self.L.value_many(pack_many(a[:, None], b[:, None]))
        return self.mesh.h * (vals - a * b)

    def gradient(self, u):
        b = self.G @ u
        a = self.dual_gradient(u)
        Gr = self.L.grad_pair_many(pack_many(a[:, None], b[:, None]))
        ga, gb = Gr[:, 0], Gr[:, 1]
        h = self.mesh.h
        return h * (-self.lam * self.poisson_solve(self.G.T @ (ga - b))
                    + self.G.T @ (gb - a))

    def hessian(self, u):
        b = self.G @ u
        a = self.dual_gradient(u)
        h = self.mesh.h
        d = len(u)
        daa = self.L.phi.second_derivative_many(a[:, None])
        dbb = self.L.phi_star.second_derivative_many(b[:, None])
        A_a = -self.lam * self.G @ sla.lu_solve(self._lu, np.eye(d))
        H = (A_a.T * daa) @ A_a + (self.G.T * dbb) @ self.G \
            - A_a.T @ self.G - self.G.T @ A_a
        return h * H


def solve_elliptic(prob, u0=None, gap_tol=None):
    """Minimize the composed variational functional; zero certifies the PDE.

    Returns (u, certificate, report) with nodewise flux-gap residuals.
    """
    mesh = prob.mesh
    if gap_tol is None:
        gap_tol = tol.tol_pde(mesh.h, 1.0 + float(np.max(np.abs(prob.g))))
    if u0 is None:
        u0 = sla.lu_solve(sla.lu_factor(prob.D + prob.lam * np.eye(mesh.n)), prob.g)

    def f(u):
        return prob.functional(u)

    u, fu, its, _ = optim.lbfgs(f, prob.gradient, u0, tol=1e-11)
    if prob.L.is_smooth:
        u, k2, _ = optim.newton_polish(prob.gradient, prob.hessian, u, tol=1e-13)
        its += k2
        fu = prob.functional(u)
    gaps = prob.edge_gaps(u)
    cert = Certificate(value=float(fu), point=u, iterations=its,
                       tolerance=gap_tol, converged=bool(fu <= gap_tol))
    report = {
        "certificate": cert.as_dict(),
        "max_edge_gap": float(np.max(gaps)),
        "edge_gaps": gaps.tolist(),
        "coercivity_margin": getattr(prob, "coercivity_margin", None),
    }
    return u, cert, report


def newton_flux_solve(prob, tol_res=1e-11, maxit=100):
    """Independent damped-Newton solve of G' T(Gu) + lam u = g (smooth flux)."""
    if not isinstance(prob.T, GradConvex) or not prob.T.phi.is_smooth:
        raise NoConvergence(0, np.nan, "reference Newton needs a smooth gradient flux")
    phi = prob.T.phi
    G, lam, g = prob.G, prob.lam, prob.g
    floor = tol_res * (1.0 + float(np.max(np.abs(g))))

    def F(u):
        return G.T @ phi.grad_many((G @ u)[:, None])[:, 0] + lam * u - g

    def J(u):
        w = phi.second_derivative_many((G @ u)[:, None])
        return (G.T * w) @ G + lam * np.eye(len(u))

    u = np.zeros(prob.mesh.n)
    for k in range(maxit):
        r = F(u)
        if np.max(np.abs(r)) < floor:
            return u, k
        du = np.linalg.solve(J(u), -r)
        t = 1.0
        while t > 1e-12 and np.max(np.abs(F(u + t * du))) > np.max(np.abs(r)):
            t *= 0.5
        if t <= 1e-12:
            break
        u = u + t * du
    r = float(np.max(np.abs(F(u))))
    if r < 100 * floor:
        return u, maxit
    raise NoConvergence(maxit, r, "reference Newton")


def elliptic_block_system(prob):
    """Mixed (flux, state) reformulation as a block superposition.

    z = (u, w) with w the edge flux. Block 1 couples the discrete gradient
    with the flux through the potential of T; block 2 enforces the node
    balance lam u = g - G' w through the potential of x -> x / lam (or the
    zero-operator potential when lam = 0). The cancellation identity holds
    exactly and the stacked Gamma is a scaled permutation.
    """
    mesh = prob.mesh
    n, h = mesh.n, mesh.h
    G = prob.G
    sq = np.sqrt(h)
    from .calculus import TransformSpec, transform
    if isinstance(prob.T, GradConvex):
        # lift the 1D flux potential to all edges in one batched form
        phi_e = cv.Separable1D(prob.T.phi, n + 1)
        L1 = transform(SumFormLagrangian(phi_e), TransformSpec.scale(sq))
    else:
        from .calculus import CombineSpec, combine
        LT = potential_for(prob.T, validate=False)
        L1 = combine([transform(LT, TransformSpec.scale(sq))] * (n + 1),
                     CombineSpec.direct_sum())
    A1 = np.hstack([sq * G, np.zeros((n + 1, n + 1))])
    G1 = np.hstack([np.zeros((n + 1, n)), sq * np.eye(n + 1)])
    if prob.lam > 0:
        phi2 = cv.Quadratic(np.eye(n) / prob.lam)
    else:
        phi2 = cv.IndicatorBox(np.zeros(n), np.zeros(n))
    L2 = transform(SumFormLagrangian(phi2), TransformSpec.scale(sq))
    A2 = np.hstack([np.zeros((n, n)), -sq * G.T])
    G2 = np.hstack([sq * np.eye(n), np.zeros((n, n + 1))])
    blocks = [Block(L1, A1, G1),
              Block(L2, A2, G2, a_off=sq * prob.g)]
    return BlockSystem(blocks)


def solve_elliptic_block(prob, gap_tol=None):
    """Solve the mixed reformulation; returns (u, w, certificate).

    For lam > 0 the full block objective is smooth and goes straight to the
    block solver. For lam = 0 the balance block is the affine constraint
    G'w = g, which is eliminated exactly: w = G D^{-1} g + c 1 with the
    constants spanning the null space of G'.
    """
    sys = elliptic_block_system(prob)
    n = prob.mesh.n
    if gap_tol is None:
        gap_tol = tol.tol_pde(prob.mesh.h, 1.0 + float(np.max(np.abs(prob.g))))
    if prob.lam > 0:
        z, cert = superposed_solve(sys, z0=np.zeros(2 * n + 1), gap_tol=gap_tol)
        return z[:n], z[n:], cert
    b1 = sys.blocks[0]
    wp = prob.G @ prob.poisson_solve(prob.g)
    ones = np.ones(n + 1)

    def to_z(y):
        return np.concatenate([y[:n], wp + y[n] * ones])

    def fobj(y):
        return float(sys.gaps_many(to_z(y)[None, :])[0, 0])

    def grad(y):
        z = to_z(y)
        u = z @ b1.A.T + b1.a_off
        v = z @ b1.gamma.T + b1.g_off
        G = b1.L.grad_pair_many(np.hstack([u, v])[None, :])[0]
        d1 = b1.L.dim
        gz = (G[:d1] - v) @ b1.A + (G[d1:] - u) @ b1.gamma
        return np.concatenate([gz[:n], [gz[n:] @ ones]])

    y, fy, its, _ = optim.lbfgs(fobj, grad, np.zeros(n + 1), tol=1e-12)
    z = to_z(y)
    cert = Certificate(value=float(fy), point=z, iterations=its,
                       tolerance=gap_tol, converged=bool(fy <= gap_tol))
    return z[:n], z[n:], cert


# ---------------------------------------------------------------------------
# parabolic


class ParabolicProblem:
    """Space-time problem u_t - (T(u_x))_x = g with a time-boundary potential."""

    def __init__(self, T, g, mesh, boundary, tgrid):
        if not isinstance(T, MonotoneOperator) or T.dim != 1:
            raise DimensionMismatch("flux map must be a 1D monotone operator")
        self.T = T
        self.g = np.asarray(g, dtype=float)
        if self.g.shape != (mesh.n,):
            raise DimensionMismatch("source must have one value per interior node")
        self.mesh = mesh
        self.boundary = boundary
        self.tgrid = tgrid
        self.L = flux_potential(T)
        self.G = mesh.grad_matrix()
        self.D = self.G.T @ self.G
        self._lu = sla.lu_factor(self.D)

    def dual_gradients(self, U):
        """a_k = G (-Lap)^{-1} (g - du_k) per time interval, edges as columns."""
        dU = np.diff(U, axis=0) / self.tgrid.dt
        rhs = self.g[None, :] - dU
        W = sla.lu_solve(self._lu, rhs.T).T
        return W @ self.G.T

    def functional(self, Uflat):
        """Gap form: per-cell flux gaps plus the time-boundary gap.

        Equals the displayed space-time functional exactly because the
        midpoint summation by parts telescopes; the gap form is a sum of
        nonnegative terms and conditions the minimization better.
        """
        mesh, tg = self.mesh, self.tgrid
        U = Uflat.reshape(tg.steps + 1, mesh.n)
        total = float(np.sum(self.per_cell_gaps(U)))
        total += mesh.h * float(self.boundary.gap_many(U[0][None, :], U[-1][None, :])[0])
        return total

    def gradient(self, Uflat):
        mesh, tg = self.mesh, self.tgrid
        n, h, dt = mesh.n, mesh.h, tg.dt
        U = Uflat.reshape(tg.steps + 1, n)
        Mid = 0.5 * (U[:-1] + U[1:])
        A = self.dual_gradients(U)
        Bm = Mid @ self.G.T
        Z = pack_many(A.ravel()[:, None], Bm.ravel()[:, None])
        Gr = self.L.grad_pair_many(Z)
        ga = Gr[:, 0].reshape(tg.steps, n + 1) - Bm
        gb = Gr[:, 1].reshape(tg.steps, n + 1) - A
        g = np.zeros_like(U)
        # a_k = G K (g - du_k): the adjoint chain carries 1/dt which cancels
        # against the dt cell weight
        Wadj = sla.lu_solve(self._lu, (ga @ self.G).T).T
        g[:-1] += h * Wadj
        g[1:] -= h * Wadj
        Gb = gb @ self.G
        g[:-1] += 0.5 * dt * h * Gb
        g[1:] += 0.5 * dt * h * Gb
        b0, bM = self.boundary.grad(U[0], U[-1])
        g[0] += h * (b0 + U[0])
        g[-1] += h * (bM - U[-1])
        return g.ravel()

    def per_cell_gaps(self, U):
        Mid = 0.5 * (U[:-1] + U[1:])
        A = self.dual_gradients(U)
        Bm = Mid @ self.G.T
        Z = pack_many(A.ravel()[:, None], Bm.ravel()[:, None])
        vals = self.L.value_many(Z).reshape(self.tgrid.steps, self.mesh.n + 1)
        return self.tgrid.dt * self.mesh.h * (vals - A * Bm)

    def step_path(self):
        """Implicit-midpoint time stepping as a warm start (smooth fluxes)."""
        mesh, tg = self.mesh, self.tgrid
        n, dt = mesh.n, tg.dt
        U = np.empty((tg.steps + 1, n))
        if self.boundary.x0 is None:
            return np.zeros_like(U)
        U[0] = self.boundary.x0
        smooth = isinstance(self.T, GradConvex) and self.T.phi.is_smooth
        for k in range(tg.steps):
            uk = U[k]
            if smooth:
                m = self._midpoint_solve(uk)
            else:
                m = uk.copy()
            U[k + 1] = 2.0 * m - uk
        return U

    def _midpoint_solve(self, uk, tol_res=1e-12, maxit=60):
        phi = self.T.phi
        n, dt = self.mesh.n, self.tgrid.dt

        def F(m):
            return (self.G.T @ phi.grad_many((self.G @ m)[:, None])[:, 0]
                    + 2.0 * m / dt - self.g - 2.0 * uk / dt)

        def J(m):
            w = phi.second_derivative_many((self.G @ m)[:, None])
            return (self.G.T * w) @ self.G + (2.0 / dt) * np.eye(n)

        m = uk.copy()
        for _ in range(maxit):
            r = F(m)
            if np.max(np.abs(r)) < tol_res:
                return m
            dm = np.linalg.solve(J(m), -r)
            t = 1.0
            while t > 1e-12 and np.max(np.abs(F(m + t * dm))) > np.max(np.abs(r)):
                t *= 0.5
            m = m + t * dm
        return m


def solve_parabolic(prob, polish=True, gap_tol=None):
    """Minimize the space-time functional; returns (U, certificate, report)."""
    mesh, tg = prob.mesh, prob.tgrid
    if gap_tol is None:
        gap_tol = tol.tol_pde(mesh.h, 1.0 + float(np.max(np.abs(prob.g)))
                              + float(np.max(np.abs(prob.boundary.x0))
                                      if prob.boundary.x0 is not None else 1.0))
    U0 = prob.step_path()
    f0 = prob.functional(U0.ravel())
    U, fu, its = U0, f0, 0
    if polish and f0 > 1e-12:
        x, fx, its, _ = optim.lbfgs(prob.functional, prob.gradient, U0.ravel(),
                                    tol=1e-10)
        if fx < f0:
            U = x.reshape(tg.steps + 1, mesh.n)
            fu = fx
    gaps = prob.per_cell_gaps(U)
    bound_gap = mesh.h * float(prob.boundary.gap_many(U[0][None, :], U[-1][None, :])[0])
    cert = Certificate(value=float(fu), point=U[-1], iterations=its,
                       tolerance=gap_tol, converged=bool(fu <= gap_tol))
    report = {
        "certificate": cert.as_dict(),
        "max_cell_gap": float(np.max(gaps)),
        "time_boundary_gap": bound_gap,
    }
    return U, cert, report


# ---------------------------------------------------------------------------
# io helpers


def save_solution_csv(path, mesh, u):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "u"])
        for x, v in zip(mesh.nodes, u):
            w.writerow([f"{x:.12g}", f"{v:.12g}"])


def save_spacetime_csv(path, mesh, tgrid, U):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "u"])
        for t, row in zip(tgrid.nodes, U):
            for x, v in zip(mesh.nodes, row):
                w.writerow([f"{t:.12g}", f"{x:.12g}", f"{v:.12g}"])

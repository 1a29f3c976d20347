"""Potentials on phase space R^d x R^d for monotone vector fields.

A potential L is convex lsc in (x, p) with conjugate taken in both
variables, L*(p, x) = sup { <p,y> + <x,q> - L(y,q) }. When L*(p,x) equals
L(x,p) the potential is selfdual and the associated field

    field(x) = { p : L(x,p) - <x,p> = 0 }

is maximal monotone. Inverting the field reduces to driving the always
nonnegative gap L(x,p) - <x,p> to zero, which is what the solvers in
`solve` and `evolution` certify.
"""

from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.optimize as sopt

from . import convex as cv
from . import optim
from . import tolerances as tol
from .errors import (DimensionMismatch, EmptyProbe, FieldMismatch,
                     GridTooCoarse, NoConvergence, NotMonotone, OutOfBox,
                     SandwichViolated)


def pack_many(X, P):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    P = np.atleast_2d(np.asarray(P, dtype=float))
    return np.hstack([X, P])


def split_pairs(Z, d):
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    return Z[:, :d], Z[:, d:]


def swap_pairs(Z, d):
    X, P = split_pairs(Z, d)
    return np.hstack([P, X])


def pairing_many(Z, d):
    X, P = split_pairs(Z, d)
    return np.sum(X * P, axis=1)


# ---------------------------------------------------------------------------
# certificates


@dataclass(frozen=True)
class Certificate:
    """Outcome of a gap minimization; value near zero certifies a solution."""

    value: float
    point: np.ndarray
    iterations: int
    tolerance: float
    converged: bool

    def as_dict(self):
        return {
            "value": float(self.value),
            "point": np.asarray(self.point, dtype=float).ravel().tolist(),
            "iterations": int(self.iterations),
            "tolerance": float(self.tolerance),
            "converged": bool(self.converged),
        }


# ---------------------------------------------------------------------------
# sampled graphs and operators


class MonotoneGraph:
    """Finite list of (x, p) pairs with pairwise monotonicity validated."""

    def __init__(self, X, P, check=True, tol_mono=tol.TOL_MONO):
        X = np.asarray(X, dtype=float)
        P = np.asarray(P, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if P.ndim == 1:
            P = P[:, None]
        if X.shape != P.shape:
            raise DimensionMismatch("graph x and p blocks differ in shape")
        self.X = cv._freeze(X)
        self.P = cv._freeze(P)
        self.dim = X.shape[1]
        if check:
            self.validate(tol_mono)

    def __len__(self):
        return self.X.shape[0]

    def validate(self, tol_mono=tol.TOL_MONO):
        DX = self.X[:, None, :] - self.X[None, :, :]
        DP = self.P[:, None, :] - self.P[None, :, :]
        inner = np.einsum("ijk,ijk->ij", DX, DP)
        bad = np.argwhere(inner < -tol_mono)
        bad = [(int(i), int(j)) for i, j in bad if i < j]
        if bad:
            raise NotMonotone(bad, worst=float(inner.min()))

    def bounding_box(self, pad=0.0):
        Z = np.hstack([self.X, self.P])
        lo = Z.min(axis=0) - pad
        hi = Z.max(axis=0) + pad
        return np.stack([lo, hi], axis=1)

    @classmethod
    def from_csv(cls, path, check=True):
        """Rows `x_1,..,x_d,p_1,..,p_d`; d inferred from the column count."""
        data = np.loadtxt(path, delimiter=",", ndmin=2)
        if data.shape[1] % 2:
            raise DimensionMismatch("csv rows must have an even number of columns")
        d = data.shape[1] // 2
        return cls(data[:, :d], data[:, d:], check=check)

    def to_csv(self, path):
        np.savetxt(path, np.hstack([self.X, self.P]), delimiter=",")


class MonotoneOperator:
    dim = 1

    def apply(self, x):
        """Representative value(s) of T(x) as a list of points."""
        raise NotImplementedError

    def validate(self):
        pass


class GradConvex(MonotoneOperator):
    """T = subdifferential of a convex catalog function."""

    def __init__(self, phi):
        self.phi = phi
        self.dim = phi.dim

    def apply(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.phi.is_smooth:
            return [self.phi.grad_many(x[None, :])[0]]
        return _subdiff_reps(self.phi, x)

    def inverse(self):
        return GradConvex(cv.conjugate(self.phi))


class SkewPlusGrad(MonotoneOperator):
    """T(x) = Gamma x + subdifferential of phi, with Gamma exactly skew."""

    def __init__(self, gamma, phi):
        gamma = np.atleast_2d(np.asarray(gamma, dtype=float))
        if np.max(np.abs(gamma + gamma.T)) != 0.0:
            raise ValueError("Gamma must be exactly skew-symmetric")
        if phi.dim != gamma.shape[0]:
            raise DimensionMismatch("phi and Gamma dimensions differ")
        self.gamma = cv._freeze(gamma)
        self.phi = phi
        self.dim = phi.dim

    def apply(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        base = self.gamma @ x
        if self.phi.is_smooth:
            return [base + self.phi.grad_many(x[None, :])[0]]
        return [base + r for r in _subdiff_reps(self.phi, x)]


class LinearPositive(MonotoneOperator):
    """T(x) = B x with the symmetric part of B positive semidefinite."""

    def __init__(self, B, tol_psd=tol.TOL_PSD):
        B = np.atleast_2d(np.asarray(B, dtype=float))
        sym = 0.5 * (B + B.T)
        if np.linalg.eigvalsh(sym)[0] < -tol_psd:
            raise ValueError("symmetric part of B is not positive semidefinite")
        self.B = cv._freeze(B)
        self.dim = B.shape[0]

    @property
    def sym(self):
        return 0.5 * (self.B + self.B.T)

    @property
    def skew(self):
        return 0.5 * (self.B - self.B.T)

    def apply(self, x):
        return [self.B @ np.atleast_1d(np.asarray(x, dtype=float))]


class SampledOperator(MonotoneOperator):
    """Operator known only through a finite monotone graph."""

    def __init__(self, graph):
        self.graph = graph
        self.dim = graph.dim

    def apply(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        d2 = np.sum((self.graph.X - x) ** 2, axis=1)
        near = d2 <= (1e-9 + d2.min())
        return [p for p in self.graph.P[near]]


def op_scale(op, alpha):
    """Pointwise scaling alpha * T(x) for alpha > 0."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if isinstance(op, GradConvex):
        return GradConvex(cv.Scaled(op.phi, alpha))
    if isinstance(op, SkewPlusGrad):
        return SkewPlusGrad(alpha * op.gamma, cv.Scaled(op.phi, alpha))
    if isinstance(op, LinearPositive):
        return LinearPositive(alpha * op.B)
    if isinstance(op, SampledOperator):
        return SampledOperator(MonotoneGraph(op.graph.X, alpha * op.graph.P, check=False))
    raise NoConvergence(0, np.nan, "cannot scale this operator variant")


def op_sum(a, b):
    """Pointwise sum of two structured operators."""
    ga, pa = _as_skew_grad(a)
    gb, pb = _as_skew_grad(b)
    gamma = ga + gb
    phi = cv.SumFn([pa, pb])
    if np.max(np.abs(gamma)) == 0.0:
        return GradConvex(phi)
    return SkewPlusGrad(gamma, phi)


def _as_skew_grad(op):
    if isinstance(op, GradConvex):
        return np.zeros((op.dim, op.dim)), op.phi
    if isinstance(op, SkewPlusGrad):
        return np.array(op.gamma), op.phi
    if isinstance(op, LinearPositive):
        return np.array(op.skew), cv.Quadratic(op.sym)
    raise NoConvergence(0, np.nan, "operator sum needs structured summands")


def _subdiff_reps(phi, x):
    """Extreme representatives of a catalog subdifferential at x."""
    if phi.is_smooth:
        return [phi.grad_many(x[None, :])[0]]
    if isinstance(phi, cv.AbsValue):
        s = phi.scale
        base = s * np.sign(x)
        reps = [base]
        for i in np.nonzero(np.abs(x) < 1e-12)[0]:
            for sg in (-s, s):
                r = base.copy()
                r[i] = sg
                reps.append(r)
        return reps
    if isinstance(phi, cv.Scaled):
        return [phi.alpha * r for r in _subdiff_reps(phi.base, x)]
    if isinstance(phi, cv.Shifted):
        return _subdiff_reps(phi.base, x - phi.shift)
    if isinstance(phi, cv.LinearTilt):
        return [r + phi.slope for r in _subdiff_reps(phi.base, x)]
    g = phi.grad_many(x[None, :])[0]
    return [g]


# ---------------------------------------------------------------------------
# Lagrangian forms


class Lagrangian:
    """Base class; subclasses provide batched values on packed pairs."""

    dim = 1
    form = "generic"
    selfdual_by_construction = False

    def value_many(self, Z):
        raise NotImplementedError

    def value(self, x, p):
        return float(self.value_many(pack_many(x, p))[0])

    def conj_value_many(self, W):
        """L*(p, x) batched on packed (p, x) rows."""
        raise NoConvergence(0, np.nan, f"no conjugate evaluator for form {self.form}")

    def conj_value(self, p, x):
        return float(self.conj_value_many(pack_many(p, x))[0])

    def gap_many(self, Z):
        return self.value_many(Z) - pairing_many(Z, self.dim)

    def gap(self, x, p):
        return float(self.gap_many(pack_many(x, p))[0])

    def prox_pair_many(self, V, tau=1.0):
        raise NoConvergence(0, np.nan, f"no phase-space prox for form {self.form}")

    def grad_pair_many(self, Z):
        raise NoConvergence(0, np.nan, f"no gradient for form {self.form}")

    @property
    def is_smooth(self):
        return False


class SumFormLagrangian(Lagrangian):
    """L(x, p) = phi(x) + phi*(-Gamma x + p) with Gamma skew (possibly zero).

    The selfdual field is Gamma x + subdifferential of phi. The conjugate is
    analytic: L*(q, y) = L(y, q).
    """

    form = "sum"
    selfdual_by_construction = True

    def __init__(self, phi, gamma=None, phi_star=None):
        self.phi = phi
        self.dim = phi.dim
        if gamma is None:
            gamma = np.zeros((self.dim, self.dim))
        gamma = np.atleast_2d(np.asarray(gamma, dtype=float))
        if np.max(np.abs(gamma + gamma.T)) != 0.0:
            raise ValueError("Gamma must be exactly skew-symmetric")
        self.gamma = cv._freeze(gamma)
        self.phi_star = phi_star if phi_star is not None else cv.conjugate(phi)
        self.has_skew = bool(np.any(gamma != 0.0))

    def _dual_arg(self, X, P):
        return P - X @ self.gamma.T if self.has_skew else P

    def value_many(self, Z):
        X, P = split_pairs(Z, self.dim)
        return self.phi.value_many(X) + self.phi_star.value_many(self._dual_arg(X, P))

    def conj_value_many(self, W):
        # exact swap identity for skew Gamma
        Q, Y = split_pairs(W, self.dim)
        return self.value_many(pack_many(Y, Q))

    @property
    def is_smooth(self):
        return self.phi.is_smooth and self.phi_star.is_smooth

    def grad_pair_many(self, Z):
        X, P = split_pairs(Z, self.dim)
        S = self._dual_arg(X, P)
        gs = self.phi_star.grad_many(S)
        gx = self.phi.grad_many(X)
        if self.has_skew:
            # row form of -Gamma^T grad(phi*) = +Gamma grad(phi*)
            gx = gx - gs @ self.gamma
        return np.hstack([gx, gs])

    def prox_pair_many(self, V, tau=1.0):
        V = np.atleast_2d(np.asarray(V, dtype=float))
        if not self.has_skew:
            VX, VP = split_pairs(V, self.dim)
            return np.hstack([self.phi.prox_many(VX, tau),
                              self.phi_star.prox_many(VP, tau)])
        if self.is_smooth:
            out = np.empty_like(V)
            for i, v in enumerate(V):
                def g(z):
                    return z - v + tau * self.grad_pair_many(z[None, :])[0]

                def H(z):
                    return np.eye(2 * self.dim) + tau * self._hess_pair(z)

                z, _, res = optim.newton_polish(g, H, v, tol=1e-12)
                if res > 1e-7:
                    raise NoConvergence(50, res, "sum-form prox")
                out[i] = z
            return out
        raise NoConvergence(0, np.nan, "prox of nonsmooth skew sum form")

    def _hess_pair(self, z):
        d = self.dim
        x, p = z[:d], z[d:]
        s = p - self.gamma @ x
        Hp = self.phi.hess(x)
        Hs = self.phi_star.hess(s)
        G = self.gamma
        top_left = Hp + G.T @ Hs @ G
        top_right = -G.T @ Hs
        H = np.zeros((2 * d, 2 * d))
        H[:d, :d] = top_left
        H[:d, d:] = top_right
        H[d:, :d] = top_right.T
        H[d:, d:] = Hs
        return H

    def field_reps(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        base = self.gamma @ x if self.has_skew else np.zeros_like(x)
        reps = _subdiff_reps(self.phi, x)
        vals = self.phi.value_many(x[None, :])
        if not np.isfinite(vals[0]):
            return []
        return [base + r for r in reps]


class FitzpatrickLagrangian(Lagrangian):
    """sup over the graph of <p, y_j> + <q_j, x - y_j>; exact for finite graphs.

    A maximum of affine pieces: one row per graph point. The conjugate is the
    exact finite-dimensional linear program over convex weights.
    """

    form = "fitzpatrick"

    def __init__(self, graph):
        self.graph = graph
        self.dim = graph.dim
        A = np.hstack([graph.P, graph.X])
        b = np.sum(graph.P * graph.X, axis=1)
        self._maxaffine = optim.MaxAffineProx(A, b)
        self.A = A
        self.b = b

    def value_many(self, Z):
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        return self._maxaffine.value(Z)

    def conj_value_many(self, W):
        W = np.atleast_2d(np.asarray(W, dtype=float))
        out = np.empty(W.shape[0])
        m = len(self.b)
        A_eq = np.vstack([self.A.T, np.ones((1, m))])
        for i, w in enumerate(W):
            b_eq = np.concatenate([w, [1.0]])
            r = sopt.linprog(self.b, A_eq=A_eq, b_eq=b_eq,
                             bounds=[(0, None)] * m, method="highs")
            out[i] = r.fun if r.status == 0 else np.inf
        return out

    def prox_pair_many(self, V, tau=1.0, state=None):
        return self._maxaffine(np.atleast_2d(np.asarray(V, dtype=float)), tau,
                               state=state)


class Grid2dLagrangian(Lagrangian):
    """Tabulated Lagrangian on a phase-space box; multilinear between nodes."""

    form = "grid"

    def __init__(self, grid):
        if grid.dim % 2:
            raise DimensionMismatch("phase-space grid needs an even dimension")
        self.grid = grid
        self.dim = grid.dim // 2
        self._conj_grid = None

    def value_many(self, Z):
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        inside = self.grid.contains(Z)
        if not inside.all():
            raise OutOfBox(f"{int((~inside).sum())} probe(s) outside the grid box")
        return self.grid.interpolate(Z)

    def conj_value_many(self, W):
        if self._conj_grid is None:
            self._conj_grid = self.grid.legendre()
        W = np.atleast_2d(np.asarray(W, dtype=float))
        inside = self._conj_grid.contains(W)
        if not inside.all():
            raise GridTooCoarse("conjugate probe outside the dual slope box")
        return self._conj_grid.interpolate(W)

    def prox_pair_many(self, V, tau=1.0):
        return cv.GridFn(self.grid).prox_many(V, tau)


class TransposedLagrangian(Lagrangian):
    """M(x, p) = base(p, x); the potential of the inverse field."""

    form = "transposed"

    def __init__(self, base):
        self.base = base
        self.dim = base.dim
        self.selfdual_by_construction = base.selfdual_by_construction

    def value_many(self, Z):
        return self.base.value_many(swap_pairs(Z, self.dim))

    def conj_value_many(self, W):
        return self.base.conj_value_many(swap_pairs(W, self.dim))

    def prox_pair_many(self, V, tau=1.0):
        V = np.atleast_2d(np.asarray(V, dtype=float))
        return swap_pairs(self.base.prox_pair_many(swap_pairs(V, self.dim), tau), self.dim)

    @property
    def is_smooth(self):
        return self.base.is_smooth

    def grad_pair_many(self, Z):
        return swap_pairs(self.base.grad_pair_many(swap_pairs(Z, self.dim)), self.dim)


def transpose(L):
    if isinstance(L, SumFormLagrangian) and not L.has_skew:
        return SumFormLagrangian(L.phi_star, None, phi_star=L.phi)
    if isinstance(L, TransposedLagrangian):
        return L.base
    return TransposedLagrangian(L)


# ---------------------------------------------------------------------------
# proximal average


class ProxAverageLagrangian(Lagrangian):
    """Proximal average of a sub-selfdual L with its transposed conjugate.

    N(x,p) = inf { L(x1,p1)/2 + L*(p2,x2)/2 + |x1-x2|^2/8 + |p1-p2|^2/8 }
    over midpoint splittings (x,p) = ((x1,p1) + (x2,p2))/2. Selfdual by
    construction, squeezed between L and its transposed conjugate, and with
    the same field as L.

    Pointwise evaluation runs Douglas-Rachford on the strongly convex inner
    problem; both proxes reduce to the phase-space prox of the base form.
    """

    form = "proxavg"
    selfdual_by_construction = True

    def __init__(self, base, probe_box=None, validate=True, n_probes=50, seed=0):
        self.base = base
        self.dim = base.dim
        if probe_box is None:
            probe_box = np.array([[-2.0, 2.0]] * (2 * self.dim))
        self.probe_box = np.atleast_2d(np.asarray(probe_box, dtype=float))
        if validate:
            self._check_sandwich(n_probes, seed)

    def _check_sandwich(self, n, seed):
        rng = np.random.default_rng(seed)
        lo, hi = self.probe_box[:, 0], self.probe_box[:, 1]
        Z = lo + (hi - lo) * rng.random((n, 2 * self.dim))
        lv = self.base.value_many(Z)
        cw = self.base.conj_value_many(swap_pairs(Z, self.dim))
        pairing = pairing_many(Z, self.dim)
        slack = min(float(np.min(cw - lv)), float(np.min(lv - pairing)))
        if slack < -1e-7:
            k = int(np.argmin(np.minimum(cw - lv, lv - pairing)))
            raise SandwichViolated(Z[k], slack)

    # inner machinery ------------------------------------------------------

    def _base_prox(self, V, t, state=None):
        try:
            return self.base.prox_pair_many(V, t, state=state)
        except TypeError:
            return self.base.prox_pair_many(V, t)

    def _prox1(self, V, t, state=None):
        return self._base_prox(V, t, state)

    def _prox2(self, V, t, state=None):
        # f2 = (conjugate of base) composed with the block swap
        d = self.dim
        SV = swap_pairs(V, d)
        return V - t * swap_pairs(self._base_prox(SV / t, 1.0 / t, state), d)

    def _value2(self, U, V, t):
        # Fenchel equality through the prox relation of f2 at U = prox(V)
        d = self.dim
        S = (V - U) / t
        return np.sum(U * S, axis=1) - self.base.value_many(swap_pairs(S, d))

    def value_many(self, Z):
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        return self._pa_eval(Z, self._prox1, self._prox2,
                             val1_direct=self.base.value_many,
                             val2_from_prox=self._value2)

    def conj_value_many(self, W):
        """The conjugate is the proximal average of the conjugate pair,
        evaluated with the same inner machinery (an independent code path;
        agreement with `value_many` is the numerical selfduality of N)."""
        W = np.atleast_2d(np.asarray(W, dtype=float))
        d = self.dim

        def prox_g1(V, t, state=None):
            return V - t * self._base_prox(V / t, 1.0 / t, state)

        def val_g1(U, V, t):
            S = (V - U) / t
            return np.sum(U * S, axis=1) - self.base.value_many(S)

        def prox_g2(V, t, state=None):
            return swap_pairs(self._base_prox(swap_pairs(V, d), t, state), d)

        def val_g2(U):
            return self.base.value_many(swap_pairs(U, d))

        return self._pa_eval(W, prox_g1, prox_g2,
                             val1_from_prox=val_g1, val2_direct=val_g2)

    def _pa_eval(self, Z, prox1, prox2, val1_direct=None, val1_from_prox=None,
                 val2_direct=None, val2_from_prox=None):
        tau = 1.0 / 3.0
        state = {}
        warm1, warm2 = {}, {}

        def prox_F(S):
            Zbar = Z + (2.0 / 3.0) * S
            U = prox1(Zbar, tau, state=warm1)
            state["U1"], state["V1"] = U, Zbar
            return U - Z

        def prox_G(S):
            Ubar = Z - (2.0 / 3.0) * S
            U = prox2(Ubar, tau, state=warm2)
            state["U2"], state["V2"] = U, Ubar
            return Z - U

        W, _, _ = optim.douglas_rachford(prox_F, prox_G, np.zeros_like(Z),
                                         tol=2e-12, maxit=900)
        if val1_direct is not None:
            v1 = val1_direct(Z + W)
        else:
            v1 = val1_from_prox(state["U1"], state["V1"], tau)
        if val2_direct is not None:
            v2 = val2_direct(Z - W)
        else:
            v2 = val2_from_prox(state["U2"], state["V2"], tau)
        return 0.5 * v1 + 0.5 * v2 + 0.5 * np.sum(W * W, axis=1)

    # tabulation -----------------------------------------------------------

    def envelope_many(self, Y):
        """Moreau envelope of N: the average of the two side envelopes."""
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        d = self.dim
        P1 = self._prox1(Y, 1.0)
        m1 = self.base.value_many(P1) + 0.5 * np.sum((P1 - Y) ** 2, axis=1)
        SY = swap_pairs(Y, d)
        P1s = self._prox1(SY, 1.0)
        m_swap = self.base.value_many(P1s) + 0.5 * np.sum((P1s - SY) ** 2, axis=1)
        m2 = 0.5 * np.sum(Y * Y, axis=1) - m_swap
        return 0.5 * (m1 + m2)

    def tabulate(self, box, nodes, env_pad=1.6, env_nodes=None):
        """Tabulate N on `box` by inverting its Moreau envelope on a grid.

        env(N) is cheap on a batch (one prox sweep per side); N is then
        ((env)* - q)* with q the half square norm, computed by two grid
        Legendre transforms.
        """
        box = np.atleast_2d(np.asarray(box, dtype=float))
        nodes = (int(nodes),) * (2 * self.dim) if np.isscalar(nodes) else tuple(nodes)
        width = box[:, 1] - box[:, 0]
        ebox = np.stack([box[:, 0] - env_pad * width, box[:, 1] + env_pad * width], axis=1)
        en = env_nodes or max(n * 2 + 1 for n in nodes)
        axes = [np.linspace(ebox[i, 0], ebox[i, 1], en) for i in range(2 * self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        Y = np.stack([m.ravel() for m in mesh], axis=1)
        env = self.envelope_many(Y).reshape([en] * (2 * self.dim))
        egrid = cv.GridFunction(ebox, [en] * (2 * self.dim), env)
        c1 = egrid.legendre(pad=0.0)
        waxes = c1.axes()
        wmesh = np.meshgrid(*waxes, indexing="ij")
        q = 0.5 * sum(m ** 2 for m in wmesh)
        nstar = cv.GridFunction(c1.box, c1.shape, c1.values - q)
        ngrid = nstar.legendre(pad=0.0, dual_box=box, dual_shape=nodes)
        return Grid2dLagrangian(ngrid)

    def prox_pair_many(self, V, tau=1.0):
        if abs(tau - 1.0) > 1e-12:
            raise NoConvergence(0, np.nan, "proximal-average prox implemented for tau=1")
        V = np.atleast_2d(np.asarray(V, dtype=float))
        return 0.5 * (self._prox1(V, 1.0) + self._prox2(V, 1.0))


def fitzpatrick(graph):
    """Exact representative potential of a sampled monotone operator.

    Validates monotonicity, equals the pairing on the graph, and is
    sub-selfdual; it is generally not selfdual, see `proximal_average`.
    """
    if not isinstance(graph, MonotoneGraph):
        raise DimensionMismatch("fitzpatrick expects a MonotoneGraph")
    graph.validate()
    return FitzpatrickLagrangian(graph)


def proximal_average(L, probe_box=None, validate=True):
    """Selfdual midpoint between L and its transposed conjugate (same field)."""
    if isinstance(L, FitzpatrickLagrangian) and probe_box is None:
        probe_box = L.graph.bounding_box()
    return ProxAverageLagrangian(L, probe_box=probe_box, validate=validate)


# ---------------------------------------------------------------------------
# evaluation entry points


def lag_value(L, x, p):
    """Evaluate L(x, p); +inf propagates."""
    return L.value(x, p)


def lag_conjugate_value(L, p, x):
    """Evaluate L*(p, x) = sup { <p,y> + <x,q> - L(y,q) }."""
    return L.conj_value(p, x)


@dataclass(frozen=True)
class SelfdualReport:
    residual: float
    fenchel_violation: float
    compared: int
    worst_point: np.ndarray = dc_field(default=None, repr=False)

    def as_dict(self):
        return {"residual": float(self.residual),
                "fenchel_violation": float(self.fenchel_violation),
                "compared": int(self.compared)}


def probe_mesh(box, nodes, d2, max_full=6561, slice_value=0.0, rng_extra=0):
    """Probe points for a 2d-dimensional phase box.

    Full tensor mesh when it stays small; otherwise one 2D mesh per
    coordinate pair (x_i, p_i) with the remaining coordinates at the slice
    value, plus optional random cloud points.
    """
    box = np.atleast_2d(np.asarray(box, dtype=float))
    if box.shape[0] == 1:
        box = np.repeat(box, d2, axis=0)
    if box.shape[0] != d2:
        raise DimensionMismatch("probe box must cover every phase coordinate")
    nodes = int(nodes)
    if nodes ** d2 <= max_full:
        axes = [np.linspace(box[i, 0], box[i, 1], nodes) for i in range(d2)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)
    d = d2 // 2
    pts = []
    for i in range(d):
        ax = np.linspace(box[i, 0], box[i, 1], nodes)
        pax = np.linspace(box[d + i, 0], box[d + i, 1], nodes)
        mx, mp = np.meshgrid(ax, pax, indexing="ij")
        Z = np.full((mx.size, d2), slice_value)
        Z[:, i] = mx.ravel()
        Z[:, d + i] = mp.ravel()
        pts.append(Z)
    if rng_extra:
        rng = np.random.default_rng(0)
        lo, hi = box[:, 0], box[:, 1]
        pts.append(lo + (hi - lo) * rng.random((rng_extra, d2)))
    return np.vstack(pts)


def selfdual_residual(L, box, nodes, method="auto"):
    """Max |L*(p,x) - L(x,p)| over probe nodes where both are finite.

    Also reports the worst positive part of <x,p> - L(x,p). Grid-backed
    forms are tabulated and conjugated with the discrete Legendre transform;
    analytic forms use their exact conjugates; graph suprema use the nested
    maximization over the probe box (a finite lower bound on the conjugate).
    """
    d = L.dim
    Z = probe_mesh(box, nodes, 2 * d, rng_extra=512 if d > 1 else 0)
    if method == "auto":
        if isinstance(L, (ProxAverageLagrangian, Grid2dLagrangian)):
            method = "grid"
        elif isinstance(L, FitzpatrickLagrangian):
            method = "scan"
        else:
            method = "analytic"
    if method == "grid":
        return _selfdual_residual_grid(L, box, nodes, Z)
    if method == "scan":
        lv = L.value_many(Z)
        cw = _conjugate_scan(lv, Z, swap_pairs(Z, d))
        return _residual_report(Z, lv, cw, pairing_many(Z, d))
    lv = L.value_many(Z)
    cw = L.conj_value_many(swap_pairs(Z, d))
    return _residual_report(Z, lv, cw, pairing_many(Z, d))


def _conjugate_scan(lvals, Z, W, chunk=512):
    """sup over the probe cloud of <w, z> - L(z) for each w (dense scan)."""
    out = np.empty(W.shape[0])
    finite = np.isfinite(lvals)
    Zf, lf = Z[finite], lvals[finite]
    for k in range(0, W.shape[0], chunk):
        block = W[k:k + chunk] @ Zf.T - lf
        out[k:k + chunk] = block.max(axis=1)
    return out


def _residual_report(Z, lv, cw, pairing):
    both = np.isfinite(lv) & np.isfinite(cw)
    if not both.any():
        raise EmptyProbe("no probe with both L and L* finite")
    diff = np.abs(cw[both] - lv[both])
    k = int(np.argmax(diff))
    fen = np.maximum(pairing - lv, 0.0)
    fen = fen[np.isfinite(lv)]
    return SelfdualReport(float(diff.max()), float(fen.max()) if len(fen) else 0.0,
                          int(both.sum()), worst_point=Z[both][k])


def _selfdual_residual_grid(L, box, nodes, Z):
    d = L.dim
    box = np.atleast_2d(np.asarray(box, dtype=float))
    if box.shape[0] == 1:
        box = np.repeat(box, 2 * d, axis=0)
    if isinstance(L, ProxAverageLagrangian):
        width = box[:, 1] - box[:, 0]
        tab_box = np.stack([box[:, 0] - 0.35 * width, box[:, 1] + 0.35 * width], axis=1)
        tab = L.tabulate(tab_box, int(nodes * 1.7) | 1)
        grid = tab.grid
    elif isinstance(L, Grid2dLagrangian):
        grid = L.grid
    else:
        gf = cv.sample_to_grid(_AsConvex(L), box, int(nodes * 2 + 1))
        grid = gf
    conj = grid.legendre()
    lv = grid.interpolate(Z, outside=np.inf)
    W = swap_pairs(Z, d)
    cw = conj.interpolate(W, outside=np.inf)
    return _residual_report(Z, lv, cw, pairing_many(Z, d))


class _AsConvex(cv.ConvexFunction):
    def __init__(self, L):
        self.L = L
        self.dim = 2 * L.dim

    def value_many(self, X):
        return self.L.value_many(X)


# ---------------------------------------------------------------------------
# the selfdual field


def sd_field(L, x, gap_tol=None, radius=None, scan=129):
    """Representatives of { p : L(x,p) = <x,p> }.

    Returns the gap minimizer plus extreme points of the tolerance-flat
    region along coordinate directions; empty when the minimal gap stays
    above the tolerance (x outside the field's domain).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d = L.dim
    if gap_tol is None:
        gap_tol = tol.TOL_GAP if L.form == "sum" else tol.TOL_GAP_GRID
    if isinstance(L, SumFormLagrangian):
        reps = L.field_reps(x)
        if not reps:
            return []
        p0 = reps[0]
    else:
        p0 = None
    if radius is None:
        radius = max(3.0, 3.0 * float(np.linalg.norm(x)))
        if p0 is not None:
            radius = max(radius, 1.5 * float(np.linalg.norm(p0)) + 1.0)

    def gap_of(P):
        Z = np.hstack([np.tile(x, (len(P), 1)), P])
        return L.gap_many(Z)

    center = p0 if p0 is not None else np.zeros(d)
    p_star, g_star = _minimize_gap_in_p(gap_of, center, radius, d, scan)
    if not np.isfinite(g_star) or g_star > gap_tol:
        return []
    reps = [p_star]
    for i in range(d):
        for sign in (-1.0, 1.0):
            e = np.zeros(d)
            e[i] = sign
            t = _flat_extent(gap_of, p_star, e, radius, gap_tol)
            # genuine flat regions keep their extent as the tolerance drops;
            # smooth minima shrink like sqrt(tol) and are not set-valued
            t_strict = _flat_extent(gap_of, p_star, e, radius, gap_tol / 100.0)
            if t > 1e-6 and t_strict >= 0.5 * t:
                reps.append(p_star + t * e)
    out = []
    for r in reps:
        if not any(np.linalg.norm(r - o) < 1e-6 for o in out):
            out.append(r)
    return out


def _minimize_gap_in_p(gap_of, center, radius, d, scan):
    """Coarse scan plus batched bracket refinement (convex gap in p)."""
    if d == 1:
        lo, hi = center[0] - radius, center[0] + radius
        step = (hi - lo) / (scan - 1)
        best = None
        for _ in range(7):
            ps = np.linspace(lo, hi, scan)[:, None]
            g = gap_of(ps)
            k = int(np.argmin(g))
            best = (ps[k, 0], float(g[k]))
            lo, hi = ps[max(k - 1, 0), 0], ps[min(k + 1, scan - 1), 0]
            if hi - lo < 1e-10 * (1.0 + abs(best[0])):
                break
        return np.array([best[0]]), best[1]
    axes = [np.linspace(center[i] - radius, center[i] + radius, min(scan, 33))
            for i in range(d)]
    mesh = np.meshgrid(*axes, indexing="ij")
    P = np.stack([m.ravel() for m in mesh], axis=1)
    g = gap_of(P)
    p = P[int(np.argmin(g))].copy()
    width = radius / 8.0
    for _ in range(5):
        for i in range(d):
            ts = np.linspace(p[i] - width, p[i] + width, 17)
            Q = np.tile(p, (len(ts), 1))
            Q[:, i] = ts
            gi = gap_of(Q)
            p[i] = ts[int(np.argmin(gi))]
        width /= 8.0
    return p, float(gap_of(p[None, :])[0])


def _flat_extent(gap_of, p_star, e, radius, gap_tol):
    if gap_of((p_star + radius * e)[None, :])[0] <= gap_tol:
        return radius
    lo, hi = 0.0, radius
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if gap_of((p_star + mid * e)[None, :])[0] <= gap_tol:
            lo = mid
        else:
            hi = mid
    return lo


# ---------------------------------------------------------------------------
# operator -> potential


def potential_for(T, validate=True, n_samples=25, seed=0, tol_field=None):
    """Selfdual potential with field equal to T.

    Structured variants map to sum forms; sampled graphs go through the
    Fitzpatrick construction followed by the proximal average. Validation
    compares the potential's field with T at sample points.
    """
    if isinstance(T, GradConvex):
        L = SumFormLagrangian(T.phi, None)
    elif isinstance(T, SkewPlusGrad):
        L = SumFormLagrangian(T.phi, T.gamma)
    elif isinstance(T, LinearPositive):
        L = SumFormLagrangian(cv.Quadratic(T.sym), T.skew)
    elif isinstance(T, SampledOperator):
        L = proximal_average(fitzpatrick(T.graph))
    else:
        raise NoConvergence(0, np.nan, "unsupported operator variant")
    if validate:
        _validate_potential(T, L, n_samples, seed, tol_field)
    return L


def _validate_potential(T, L, n_samples, seed, tol_field_):
    rng = np.random.default_rng(seed)
    grid_like = isinstance(T, SampledOperator)
    if tol_field_ is None:
        tol_field_ = tol.tol_field(grid=grid_like)
    if grid_like:
        m = len(T.graph)
        idx = rng.permutation(m)[:n_samples]
        lo = T.graph.X.min() + 0.05
        hi = T.graph.X.max() - 0.05
        idx = [i for i in idx if np.all(T.graph.X[i] >= lo) and np.all(T.graph.X[i] <= hi)]
        samples = [np.array(T.graph.X[i]) for i in idx]
        expected = [[np.array(T.graph.P[i])] for i in idx]
        if T.dim == 1 and samples:
            radius = 1.5 * float(np.abs(T.graph.P).max()) + 1.0
            best_p, best_g = _field_min_batch_1d(L, np.array(samples), radius)
            for k, (s, exp) in enumerate(zip(samples, expected)):
                if best_g[k] > tol.TOL_GAP_GRID:
                    raise FieldMismatch(s, exp, None, np.inf)
                dist = min(abs(best_p[k] - e[0]) for e in exp)
                if dist > tol_field_:
                    raise FieldMismatch(s, exp, np.array([best_p[k]]), dist)
            return
    else:
        samples = [rng.uniform(-2.0, 2.0, T.dim) for _ in range(n_samples)]
        expected = [T.apply(s) for s in samples]
    for s, exp in zip(samples, expected):
        reps = sd_field(L, s, gap_tol=tol.TOL_GAP_GRID if grid_like else tol.TOL_GAP)
        if not reps:
            raise FieldMismatch(s, exp, None, np.inf)
        dist = min(float(np.linalg.norm(r - e)) for r in reps for e in exp)
        if dist > tol_field_:
            raise FieldMismatch(s, exp, reps[0], dist)


def _field_min_batch_1d(L, xs, radius, scan=65, rounds=7):
    """Per-sample minimizing p of the gap, batched across samples (d = 1)."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    m = xs.shape[0]
    lo = np.full(m, -radius)
    hi = np.full(m, radius)
    rows = np.arange(m)
    best_p = np.zeros(m)
    best_g = np.full(m, np.inf)
    for _ in range(rounds):
        ts = np.linspace(0.0, 1.0, scan)
        P = lo[:, None] + (hi - lo)[:, None] * ts[None, :]
        Z = np.empty((m * scan, 2))
        Z[:, 0] = np.repeat(xs[:, 0], scan)
        Z[:, 1] = P.ravel()
        g = L.gap_many(Z).reshape(m, scan)
        k = np.argmin(g, axis=1)
        best_p = P[rows, k]
        best_g = g[rows, k]
        lo = P[rows, np.maximum(k - 1, 0)]
        hi = P[rows, np.minimum(k + 1, scan - 1)]
    return best_p, best_g

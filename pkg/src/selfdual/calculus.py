"""Unary transforms and combinations of selfdual potentials.

Each operation mirrors an operation on monotone fields and returns a new
potential whose selfduality is preserved: scaling, domain/range translation,
unitary conjugation, adding a skew map, twisted inversion; direct sums,
operator sums and convolutions, cross couplings, and block superposition.
Sum forms compose analytically wherever the algebra allows; everything else
gets a wrapper with exact conjugate formulas and per-probe inner infima.
"""

import numpy as np

from . import convex as cv
from . import optim
from .errors import DimensionMismatch, NoConvergence, SingularLambda
from .lagrangian import (Lagrangian, SumFormLagrangian, pack_many,
                         split_pairs, pairing_many)


def _check_skew(M, name="Lambda"):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if np.max(np.abs(M + M.T)) != 0.0:
        raise ValueError(f"{name} must be exactly skew-symmetric")
    return M


class TransformSpec:
    """One of Scale, TranslateDomain, TranslateRange, Unitary, AddSkew,
    TwistInvert, with its payload validated at construction."""

    KINDS = ("Scale", "TranslateDomain", "TranslateRange", "Unitary",
             "AddSkew", "TwistInvert")

    def __init__(self, kind, value):
        if kind not in self.KINDS:
            raise ValueError(f"unknown transform kind {kind!r}")
        self.kind = kind
        if kind == "Scale":
            value = float(value)
            if value <= 0:
                raise ValueError("scale must be positive")
        elif kind in ("TranslateDomain", "TranslateRange"):
            value = np.atleast_1d(np.asarray(value, dtype=float))
        elif kind == "Unitary":
            value = np.atleast_2d(np.asarray(value, dtype=float))
            if np.max(np.abs(value.T @ value - np.eye(len(value)))) > 1e-12:
                raise ValueError("U must be orthogonal within 1e-12")
        elif kind == "AddSkew":
            value = _check_skew(value)
        elif kind == "TwistInvert":
            value = _check_skew(value)
            if abs(np.linalg.det(value)) < 1e-12:
                raise SingularLambda("skew matrix is numerically singular")
        self.value = value

    def as_dict(self):
        v = self.value
        return {"kind": self.kind,
                "value": v.tolist() if isinstance(v, np.ndarray) else v}

    @classmethod
    def scale(cls, lam):
        return cls("Scale", lam)

    @classmethod
    def translate_domain(cls, y):
        return cls("TranslateDomain", y)

    @classmethod
    def translate_range(cls, q):
        return cls("TranslateRange", q)

    @classmethod
    def unitary(cls, U):
        return cls("Unitary", U)

    @classmethod
    def add_skew(cls, lam):
        return cls("AddSkew", lam)

    @classmethod
    def twist_invert(cls, lam):
        return cls("TwistInvert", lam)


class TransformedLagrangian(Lagrangian):
    """Generic wrapper applying a TransformSpec to a base potential.

    Both the value and the conjugate are exact formulas in the base L and
    L*, so selfduality carries over whenever the base is selfdual (for the
    twisted inversion this additionally needs an even base, which the skew
    convention ambiguity of the underlying operator formula reflects).
    """

    form = "transformed"

    def __init__(self, base, spec):
        self.base = base
        self.spec = spec
        self.dim = base.dim
        self.selfdual_by_construction = base.selfdual_by_construction
        if spec.kind == "TwistInvert":
            self._lam_inv = np.linalg.inv(spec.value)

    def value_many(self, Z):
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        X, P = split_pairs(Z, self.dim)
        k, v = self.spec.kind, self.spec.value
        if k == "Scale":
            return v * v * self.base.value_many(pack_many(X / v, P / v))
        if k == "TranslateDomain":
            return self.base.value_many(pack_many(X + v, P)) - P @ v
        if k == "TranslateRange":
            return self.base.value_many(pack_many(X, P + v)) - X @ v
        if k == "Unitary":
            return self.base.value_many(pack_many(X @ v.T, P @ v.T))
        if k == "AddSkew":
            return self.base.value_many(pack_many(X, P - X @ v.T))
        # TwistInvert: M(x, p) = L(x + Lambda^{-1} p, Lambda x)
        return self.base.value_many(pack_many(X + P @ self._lam_inv.T, X @ v.T))

    def conj_value_many(self, W):
        W = np.atleast_2d(np.asarray(W, dtype=float))
        Q, Y = split_pairs(W, self.dim)
        k, v = self.spec.kind, self.spec.value
        if k == "Scale":
            return v * v * self.base.conj_value_many(pack_many(Q / v, Y / v))
        if k == "TranslateDomain":
            return self.base.conj_value_many(pack_many(Q, Y + v)) - Q @ v
        if k == "TranslateRange":
            return self.base.conj_value_many(pack_many(Q + v, Y)) - Y @ v
        if k == "Unitary":
            return self.base.conj_value_many(pack_many(Q @ v.T, Y @ v.T))
        if k == "AddSkew":
            return self.base.conj_value_many(pack_many(Q - Y @ v.T, Y))
        # conjugate of the twist: L*(-Lambda y, -Lambda^{-1} q - y)
        return self.base.conj_value_many(
            pack_many(-Y @ v.T, -Q @ self._lam_inv.T - Y))


def transform(L, spec):
    """Apply a TransformSpec, composing sum forms analytically when possible."""
    k, v = spec.kind, spec.value
    if isinstance(L, SumFormLagrangian):
        if k == "Scale":
            return SumFormLagrangian(cv.dilate(L.phi, v), L.gamma,
                                     phi_star=cv.dilate(L.phi_star, v))
        if k == "AddSkew":
            if v.shape[0] != L.dim:
                raise DimensionMismatch("skew matrix dimension mismatch")
            return SumFormLagrangian(L.phi, L.gamma + v, phi_star=L.phi_star)
        if k == "TranslateRange":
            return SumFormLagrangian(cv.LinearTilt(L.phi, -v), L.gamma)
        if k == "TranslateDomain" and not L.has_skew:
            return SumFormLagrangian(cv.Shifted(L.phi, -v), None)
        if k == "Unitary":
            U = v
            G = U.T @ L.gamma @ U
            G = 0.5 * (G - G.T)  # re-skew exactly against rounding
            return SumFormLagrangian(cv.Rotated(L.phi, U), G,
                                     phi_star=cv.Rotated(L.phi_star, U))
    return TransformedLagrangian(L, spec)


class CombineSpec:
    """One of DirectSum, OpSum, OpConvolve, CrossCoupling, BlockSuperpose."""

    KINDS = ("DirectSum", "OpSum", "OpConvolve", "CrossCoupling",
             "BlockSuperpose")

    def __init__(self, kind, A=None, blocks=None):
        if kind not in self.KINDS:
            raise ValueError(f"unknown combination kind {kind!r}")
        self.kind = kind
        self.A = None if A is None else np.atleast_2d(np.asarray(A, dtype=float))
        self.blocks = blocks

    @classmethod
    def direct_sum(cls):
        return cls("DirectSum")

    @classmethod
    def op_sum(cls):
        return cls("OpSum")

    @classmethod
    def op_convolve(cls):
        return cls("OpConvolve")

    @classmethod
    def cross_coupling(cls, A):
        return cls("CrossCoupling", A=A)

    @classmethod
    def block_superpose(cls, blocks):
        """blocks: list of (A_i, Gamma_i) matrices mapping Z into each part."""
        return cls("BlockSuperpose", blocks=[(np.atleast_2d(np.asarray(a, float)),
                                              np.atleast_2d(np.asarray(g, float)))
                                             for a, g in blocks])


class DirectSumLagrangian(Lagrangian):
    """Sum of independent potentials on the product space."""

    form = "direct_sum"

    def __init__(self, parts):
        self.parts = list(parts)
        self.dims = [L.dim for L in self.parts]
        self.dim = sum(self.dims)
        self.selfdual_by_construction = all(L.selfdual_by_construction
                                            for L in self.parts)

    def _blocks(self, Z):
        X, P = split_pairs(Z, self.dim)
        out = []
        o = 0
        for d in self.dims:
            out.append(np.hstack([X[:, o:o + d], P[:, o:o + d]]))
            o += d
        return out

    def value_many(self, Z):
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        vals = [L.value_many(B) for L, B in zip(self.parts, self._blocks(Z))]
        return np.sum(vals, axis=0)

    def conj_value_many(self, W):
        W = np.atleast_2d(np.asarray(W, dtype=float))
        vals = [L.conj_value_many(B) for L, B in zip(self.parts, self._blocks(W))]
        return np.sum(vals, axis=0)

    def grad_pair_many(self, Z):
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        gs = [L.grad_pair_many(B) for L, B in zip(self.parts, self._blocks(Z))]
        gx = np.hstack([g[:, :d] for g, d in zip(gs, self.dims)])
        gp = np.hstack([g[:, d:] for g, d in zip(gs, self.dims)])
        return np.hstack([gx, gp])

    @property
    def is_smooth(self):
        return all(L.is_smooth for L in self.parts)


class InnerInfLagrangian(Lagrangian):
    """Operator sum / convolution evaluated by a per-probe inner infimum.

    OpSum:      (L (+) M)(x, p) = inf_r  L(x, r) + M(x, p - r)
    OpConvolve: (L (*) M)(x, p) = inf_z  L(z, p) + M(x - z, p)

    The inner problems run a quadratic regularization continuation (three
    steps, then an unregularized polish), which keeps them well posed when
    the operators' domain-overlap condition cannot be checked numerically.
    """

    form = "inner_inf"

    def __init__(self, L1, L2, kind):
        if L1.dim != L2.dim:
            raise DimensionMismatch("combining potentials of unequal dimension")
        self.L1 = L1
        self.L2 = L2
        self.kind = kind
        self.dim = L1.dim
        self.selfdual_by_construction = (L1.selfdual_by_construction
                                         and L2.selfdual_by_construction)

    def value_many(self, Z):
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        return np.array([self._value_one(z) for z in Z])

    def _value_one(self, z):
        d = self.dim
        x, p = z[:d], z[d:]
        if self.kind == "OpSum":
            def h(R):
                return (self.L1.value_many(pack_many(np.tile(x, (len(R), 1)), R))
                        + self.L2.value_many(pack_many(np.tile(x, (len(R), 1)), p - R)))
            center = p / 2.0
        else:
            def h(R):
                return (self.L1.value_many(pack_many(R, np.tile(p, (len(R), 1))))
                        + self.L2.value_many(pack_many(x - R, np.tile(p, (len(R), 1)))))
            center = x / 2.0
        return _inner_infimum(h, center, d)

    def grad_pair_many(self, Z):
        raise NoConvergence(0, np.nan, "inner-inf combinations have no gradient")


def _inner_infimum(h, center, d, radius=None, scan=65):
    """Continuation: three regularized passes, then an unregularized polish."""
    if radius is None:
        radius = 4.0 * (1.0 + float(np.linalg.norm(center)))
    c = np.asarray(center, dtype=float).copy()
    width = radius
    for reg in (1e-2, 1e-4, 1e-6, 0.0):
        def obj(R):
            pen = reg * np.sum((R - center) ** 2, axis=1) if reg else 0.0
            return h(R) + pen
        if d == 1:
            ts = np.linspace(c[0] - width, c[0] + width, scan)[:, None]
            v = obj(ts)
            k = int(np.argmin(v))
            lo, hi = ts[max(k - 1, 0), 0], ts[min(k + 1, scan - 1), 0]
            for _ in range(40):
                m1, m2 = lo + (hi - lo) / 3, hi - (hi - lo) / 3
                if obj(np.array([[m1]]))[0] < obj(np.array([[m2]]))[0]:
                    hi = m2
                else:
                    lo = m1
            c = np.array([0.5 * (lo + hi)])
        else:
            for _ in range(3):
                for i in range(d):
                    ts = np.linspace(c[i] - width, c[i] + width, scan)
                    R = np.tile(c, (scan, 1))
                    R[:, i] = ts
                    v = obj(R)
                    c[i] = ts[int(np.argmin(v))]
                width = max(width / 6.0, 1e-9)
        width = max(width / 4.0, 1e-7)
    return float(h(c[None, :])[0])


class CrossCoupledLagrangian(Lagrangian):
    """L1(x, A'y + p) + L2(y, -Ax + q) on the product of two spaces."""

    form = "cross"

    def __init__(self, L1, L2, A):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        if A.shape != (L2.dim, L1.dim):
            raise DimensionMismatch(
                f"A must map R^{L1.dim} into R^{L2.dim}, got {A.shape}")
        self.L1 = L1
        self.L2 = L2
        self.A = cv._freeze(A)
        self.d1 = L1.dim
        self.d2 = L2.dim
        self.dim = L1.dim + L2.dim
        self.selfdual_by_construction = (L1.selfdual_by_construction
                                         and L2.selfdual_by_construction)

    def _pieces(self, Z):
        X, P = split_pairs(Z, self.dim)
        x, y = X[:, :self.d1], X[:, self.d1:]
        p, q = P[:, :self.d1], P[:, self.d1:]
        return x, y, p, q

    def value_many(self, Z):
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        x, y, p, q = self._pieces(Z)
        v1 = self.L1.value_many(pack_many(x, y @ self.A + p))
        v2 = self.L2.value_many(pack_many(y, -(x @ self.A.T) + q))
        return v1 + v2

    def conj_value_many(self, W):
        W = np.atleast_2d(np.asarray(W, dtype=float))
        Q, Y = split_pairs(W, self.dim)
        pq, qq = Q[:, :self.d1], Q[:, self.d1:]
        xq, yq = Y[:, :self.d1], Y[:, self.d1:]
        v1 = self.L1.conj_value_many(pack_many(pq + yq @ self.A, xq))
        v2 = self.L2.conj_value_many(pack_many(qq - xq @ self.A.T, yq))
        return v1 + v2

    def grad_pair_many(self, Z):
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        x, y, p, q = self._pieces(Z)
        g1 = self.L1.grad_pair_many(pack_many(x, y @ self.A + p))
        g2 = self.L2.grad_pair_many(pack_many(y, -(x @ self.A.T) + q))
        g1x, g1p = g1[:, :self.d1], g1[:, self.d1:]
        g2y, g2q = g2[:, :self.d2], g2[:, self.d2:]
        gx = g1x - g2q @ self.A
        gy = g2y + g1p @ self.A.T
        return np.hstack([gx, gy, g1p, g2q])

    @property
    def is_smooth(self):
        return self.L1.is_smooth and self.L2.is_smooth


class BlockLagrangian(Lagrangian):
    """Superposition sum_i L_i(A_i z + w_i, Gamma_i z) in euclidean form.

    The stacked Gamma identifies Z with the product of the duals; the dual
    variable w maps to per-block offsets through its inverse transpose.
    Requires the cancellation sum_i <A_i z, Gamma_i z> = 0.
    """

    form = "block"

    def __init__(self, parts, blocks, check=True, seed=0):
        self.parts = list(parts)
        self.blocks = [(np.atleast_2d(np.asarray(a, float)),
                        np.atleast_2d(np.asarray(g, float))) for a, g in blocks]
        if len(self.parts) != len(self.blocks):
            raise DimensionMismatch("one (A_i, Gamma_i) pair per part")
        self.zdim = self.blocks[0][0].shape[1]
        self.part_dims = [L.dim for L in self.parts]
        if sum(self.part_dims) != self.zdim:
            raise DimensionMismatch("stacked Gamma must be square")
        self.gamma_stack = np.vstack([g for _, g in self.blocks])
        if check:
            self._validate(seed)
        self.gamma_inv_t = np.linalg.inv(self.gamma_stack).T
        self.condition_number = float(np.linalg.cond(self.gamma_stack))
        self.dim = self.zdim
        self.selfdual_by_construction = all(L.selfdual_by_construction
                                            for L in self.parts)

    def _validate(self, seed, n=50, tol=1e-9):
        rng = np.random.default_rng(seed)
        Z = rng.standard_normal((n, self.zdim))
        total = np.zeros(n)
        for A, G in self.blocks:
            total += np.einsum("ij,ij->i", Z @ A.T, Z @ G.T)
        worst = float(np.max(np.abs(total)))
        if worst > tol:
            raise ValueError(f"block cancellation identity fails ({worst:.2e})")
        if abs(np.linalg.det(self.gamma_stack)) < 1e-12:
            raise ValueError("stacked Gamma is singular")

    def _offsets(self, W):
        return W @ self.gamma_inv_t.T

    def value_many(self, Z):
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        X, W = split_pairs(Z, self.dim)
        offs = self._offsets(W)
        out = 0.0
        o = 0
        for L, (A, G) in zip(self.parts, self.blocks):
            d = L.dim
            out = out + L.value_many(pack_many(X @ A.T + offs[:, o:o + d], X @ G.T))
            o += d
        return out

    def conj_value_many(self, W):
        W = np.atleast_2d(np.asarray(W, dtype=float))
        Q, Y = split_pairs(W, self.dim)
        offs = self._offsets(Q)
        out = 0.0
        o = 0
        for L, (A, G) in zip(self.parts, self.blocks):
            d = L.dim
            out = out + L.conj_value_many(
                pack_many(Y @ G.T, offs[:, o:o + d] + Y @ A.T))
            o += d
        return out


def combine(parts, spec):
    """Combine potentials according to a CombineSpec."""
    parts = list(parts)
    if spec.kind == "DirectSum":
        return DirectSumLagrangian(parts)
    if spec.kind == "BlockSuperpose":
        return BlockLagrangian(parts, spec.blocks)
    if spec.kind == "CrossCoupling":
        if len(parts) != 2:
            raise DimensionMismatch("cross coupling combines exactly two parts")
        return CrossCoupledLagrangian(parts[0], parts[1], spec.A)
    if len(parts) != 2:
        raise DimensionMismatch(f"{spec.kind} combines exactly two parts")
    L1, L2 = parts
    if spec.kind == "OpSum":
        if (isinstance(L1, SumFormLagrangian) and isinstance(L2, SumFormLagrangian)):
            phi = cv.add_convex(L1.phi, L2.phi)
            return SumFormLagrangian(phi, L1.gamma + L2.gamma)
        return InnerInfLagrangian(L1, L2, "OpSum")
    if spec.kind == "OpConvolve":
        if (isinstance(L1, SumFormLagrangian) and isinstance(L2, SumFormLagrangian)
                and not L1.has_skew and not L2.has_skew):
            phi = cv.inf_convolve(L1.phi, L2.phi)
            phi_star = cv.add_convex(L1.phi_star, L2.phi_star)
            return SumFormLagrangian(phi, None, phi_star=phi_star)
        return InnerInfLagrangian(L1, L2, "OpConvolve")
    raise ValueError(f"unknown combination kind {spec.kind!r}")

"""Small numerical toolkit: line searches, proximal iterations, Newton polish.

Everything here is deterministic given its inputs; randomized probes take an
explicit rng. Batched routines operate on arrays of shape (batch, dim).
"""

import numpy as np
import scipy.optimize as sopt

from .errors import NoConvergence

OUTER_CAP = 10000
INNER_CAP = 500


def golden_section(f, lo, hi, tol=1e-12, maxit=200):
    """Minimize a unimodal scalar function on [lo, hi]."""
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = float(lo), float(hi)
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(maxit):
        if b - a < tol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def project_simplex(V):
    """Euclidean projection of each row of V onto the probability simplex."""
    V = np.atleast_2d(V)
    n = V.shape[1]
    U = np.sort(V, axis=1)[:, ::-1]
    css = np.cumsum(U, axis=1) - 1.0
    idx = np.arange(1, n + 1)
    cond = U - css / idx > 0
    rho = n - np.argmax(cond[:, ::-1], axis=1) - 1
    rho = np.where(cond.any(axis=1), rho, 0)
    theta = css[np.arange(V.shape[0]), rho] / (rho + 1)
    return np.maximum(V - theta[:, None], 0.0)


class MaxAffineProx:
    """Batched prox of a max-affine function  m(z) = max_j <a_j, z> - b_j.

    Through Moreau duality the prox reduces to

        u* = argmin { m*(u) + tau/2 |u|^2 - <v, u> },   prox(v) = v - tau u*,

    where m* is the lower convex envelope of the atom cloud {(a_j, b_j)}.
    In two dimensions the envelope is an explicit segment or triangulated
    polygon, so the minimization is exact (candidate enumeration). Higher
    dimensions fall back to FISTA on the dual simplex QP.
    """

    def __init__(self, A, b):
        self.A = np.asarray(A, dtype=float)
        self.b = np.asarray(b, dtype=float)
        sv = np.linalg.svd(self.A, compute_uv=False) if self.A.size else [1.0]
        self.lmax = float(sv[0] ** 2)
        self._mode = None
        if self.A.shape[1] == 2:
            self._build_exact2d()

    def value(self, Z):
        Z = np.atleast_2d(Z)
        return np.max(Z @ self.A.T - self.b, axis=1)

    # -- exact geometry for atoms in R^2 ------------------------------------

    def _build_exact2d(self):
        A, b = self.A, self.b
        center = A.mean(axis=0)
        U, S, Vt = np.linalg.svd(A - center, full_matrices=False)
        scale = S[0] if len(S) else 0.0
        if scale < 1e-14:
            self._mode = "point"
            k = int(np.argmin(b))
            self._atom = A[k]
            self._batom = b[k]
            return
        if len(S) < 2 or S[1] <= 1e-12 * scale:
            d = Vt[0]
            s = (A - center) @ d
            order = np.argsort(s, kind="stable")
            xs, bs = [], []
            for i in order:
                si, bi = float(s[i]), float(b[i])
                if xs and si - xs[-1] < 1e-13 * (1.0 + abs(si)):
                    bs[-1] = min(bs[-1], bi)
                else:
                    xs.append(si)
                    bs.append(bi)
            hx, hb = [], []
            for si, bi in zip(xs, bs):
                while len(hx) >= 2:
                    cross = (hx[-1] - hx[-2]) * (bi - hb[-2]) - (si - hx[-2]) * (hb[-1] - hb[-2])
                    if cross <= 0:
                        hx.pop()
                        hb.pop()
                    else:
                        break
                hx.append(si)
                hb.append(bi)
            self._mode = "segment"
            self._seg_o = center
            self._seg_d = d
            self._seg_s = np.array(hx)
            self._seg_b = np.array(hb)
            return
        try:
            from scipy.spatial import ConvexHull, QhullError
            pts = np.column_stack([A, b])
            try:
                hull = ConvexHull(pts)
            except QhullError:
                hull = ConvexHull(pts, qhull_options="QJ")
            area_floor = 1e-10 * max(1.0, scale * scale)
            tris, grads, offs = [], [], []
            for eq, simp in zip(hull.equations, hull.simplices):
                n = eq[:3]
                if n[2] >= -1e-10:
                    continue
                tri = A[simp]
                area = 0.5 * abs(np.cross(tri[1] - tri[0], tri[2] - tri[0]))
                if area < area_floor:
                    continue  # joggled side walls project to slivers
                grads.append(-n[:2] / n[2])
                offs.append(-eq[3] / n[2])
                tris.append(tri)
            if not tris:
                raise ValueError("no lower faces")
            self._mode = "triangles"
            self._tri = np.array(tris)        # (T, 3, 2)
            self._tri_g = np.array(grads)     # (T, 2)
            self._tri_c = np.array(offs)      # (T,)
        except Exception:
            self._mode = None

    def _exact2d(self, V, tau):
        if self._mode == "point":
            return V - tau * self._atom
        if self._mode == "segment":
            return self._exact_segment(V, tau)
        return self._exact_triangles(V, tau)

    def _exact_segment(self, V, tau):
        o, d = self._seg_o, self._seg_d
        sv, bv = self._seg_s, self._seg_b
        beta = V @ d - tau * (o @ d)          # (B,)
        cand_s = np.tile(sv, (len(V), 1))
        cand_b = np.tile(bv, (len(V), 1))
        if len(sv) > 1:
            slopes = np.diff(bv) / np.diff(sv)
            s_star = (beta[:, None] - slopes[None, :]) / tau
            s_star = np.clip(s_star, sv[:-1], sv[1:])
            b_star = bv[:-1] + slopes * (s_star - sv[:-1])
            cand_s = np.hstack([cand_s, s_star])
            cand_b = np.hstack([cand_b, b_star])
        obj = cand_b + 0.5 * tau * cand_s ** 2 - beta[:, None] * cand_s
        k = np.argmin(obj, axis=1)
        s_opt = cand_s[np.arange(len(V)), k]
        u = o + s_opt[:, None] * d
        return V - tau * u

    def _exact_triangles(self, V, tau, chunk=4096):
        out = np.empty_like(V)
        for k0 in range(0, len(V), chunk):
            Vc = V[k0:k0 + chunk]
            out[k0:k0 + chunk] = self._exact_triangles_chunk(Vc, tau)
        return out

    def _exact_triangles_chunk(self, V, tau):
        tri, g, c = self._tri, self._tri_g, self._tri_c
        B, T = len(V), len(tri)
        U0 = (V[:, None, :] - g[None, :, :]) / tau        # (B, T, 2)
        P = _project_triangles(U0, tri)                   # (B, T, 2)
        obj = c[None, :] + np.einsum("tk,btk->bt", g, P) \
            + 0.5 * tau * np.sum(P * P, axis=2) - np.einsum("bk,btk->bt", V, P)
        k = np.argmin(obj, axis=1)
        u = P[np.arange(B), k]
        return V - tau * u

    # -- entry point ---------------------------------------------------------

    def __call__(self, V, tau=1.0, iters=None, tol=1e-12, state=None):
        """state: optional dict holding this call site's warm dual variable."""
        V = np.atleast_2d(V)
        if self._mode is not None:
            return self._exact2d(V, tau)
        m = len(self.b)
        C = V @ self.A.T - self.b
        mu = None
        if state is not None:
            mu = state.get("mu")
            if mu is not None and mu.shape != (V.shape[0], m):
                mu = None
        if mu is None:
            mu = project_simplex(np.where(C == C.max(axis=1, keepdims=True), 1.0, 0.0))
        step = 1.0 / max(tau * self.lmax, 1e-300)
        y = mu
        t = 1.0
        cap = iters if iters is not None else INNER_CAP
        z_old = V - tau * (mu @ self.A)
        for k in range(cap):
            g = tau * ((y @ self.A) @ self.A.T) - C
            mu_new = project_simplex(y - step * g)
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            y = mu_new + ((t - 1.0) / t_new) * (mu_new - mu)
            mu, t = mu_new, t_new
            z = V - tau * (mu @ self.A)
            shift = np.max(np.abs(z - z_old))
            z_old = z
            if shift < tol:
                break
        if state is not None:
            state["mu"] = mu
        return z_old


def _project_triangles(P, tri):
    """Project points P (B, T, 2) onto triangles tri (T, 3, 2), batched."""
    A, B_, C = tri[:, 0], tri[:, 1], tri[:, 2]
    out = np.empty_like(P)
    # barycentric test for interior
    v0 = (B_ - A)[None, :, :]
    v1 = (C - A)[None, :, :]
    v2 = P - A[None, :, :]
    d00 = np.sum(v0 * v0, axis=2)
    d01 = np.sum(v0 * v1, axis=2)
    d11 = np.sum(v1 * v1, axis=2)
    d20 = np.sum(v2 * v0, axis=2)
    d21 = np.sum(v2 * v1, axis=2)
    denom = d00 * d11 - d01 * d01
    degenerate = np.abs(denom) < 1e-12 * np.maximum(d00 * d11, 1e-300)
    denom = np.where(np.abs(denom) < 1e-300, 1e-300, denom)
    w1 = (d11 * d20 - d01 * d21) / denom
    w2 = (d00 * d21 - d01 * d20) / denom
    inside = (w1 >= 0) & (w2 >= 0) & (w1 + w2 <= 1) & ~degenerate
    out[:] = P
    # project outside points onto the three edges, keep the nearest
    bad = ~inside
    if bad.any():
        best = np.full(P.shape[:2], np.inf)
        cand = np.empty_like(P)
        for E0, E1 in ((A, B_), (B_, C), (C, A)):
            e = (E1 - E0)[None, :, :]
            t = np.sum((P - E0[None, :, :]) * e, axis=2) / \
                np.maximum(np.sum(e * e, axis=2), 1e-300)
            t = np.clip(t, 0.0, 1.0)
            Q = E0[None, :, :] + t[:, :, None] * e
            dist = np.sum((P - Q) ** 2, axis=2)
            take = bad & (dist < best)
            best = np.where(take, dist, best)
            cand = np.where(take[:, :, None], Q, cand)
        out = np.where(bad[:, :, None], cand, out)
    return out


def prox_gradient(x0, smooth_val, smooth_grad, prox, step=1.0, backtrack=0.5,
                  expand=1.2, tol=1e-11, maxit=OUTER_CAP, trace=None):
    """Proximal gradient with backtracking line search.

    Minimizes smooth + nonsmooth where `prox(v, t)` is the prox of the
    nonsmooth part. Returns (x, iterations, residual).
    """
    x = np.asarray(x0, dtype=float).copy()
    fx = smooth_val(x)
    res = np.inf
    for k in range(maxit):
        g = smooth_grad(x)
        while True:
            x_new = prox(x - step * g, step)
            dx = x_new - x
            f_new = smooth_val(x_new)
            bound = fx + g @ dx + 0.5 * (dx @ dx) / step
            if f_new <= bound + 1e-15 * (1.0 + abs(bound)) or step < 1e-14:
                break
            step *= backtrack
        res = float(np.linalg.norm(dx) / step)
        x, fx = x_new, f_new
        if trace is not None:
            trace.append((k, fx, step, res))
        if res < tol:
            return x, k + 1, res
        step *= expand
    return x, maxit, res


def lbfgs(f, grad, x0, tol=1e-12, maxiter=OUTER_CAP, bounds=None):
    """L-BFGS-B wrapper returning (x, fval, iterations, converged)."""
    r = sopt.minimize(f, np.asarray(x0, float).ravel(), jac=grad,
                      method="L-BFGS-B", bounds=bounds,
                      options={"maxiter": maxiter, "ftol": 1e-18,
                               "gtol": tol, "maxcor": 30, "maxls": 60})
    return r.x, float(r.fun), int(r.nit), bool(r.success or np.linalg.norm(r.jac) < 10 * tol)


def newton_polish(grad, hess, x0, tol=1e-12, maxit=50, reg=1e-12):
    """Damped Newton iteration on grad = 0 for smooth convex objectives."""
    x = np.asarray(x0, dtype=float).copy()
    for k in range(maxit):
        g = grad(x)
        gn = float(np.linalg.norm(g, np.inf))
        if gn < tol:
            return x, k, gn
        H = hess(x)
        H = H + reg * np.eye(len(x))
        try:
            dx = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            dx = -g
        t = 1.0
        while t > 1e-12:
            g_try = grad(x + t * dx)
            if np.linalg.norm(g_try, np.inf) < gn * (1.0 - 0.25 * t) + 1e-15:
                break
            t *= 0.5
        x = x + t * dx
    g = grad(x)
    return x, maxit, float(np.linalg.norm(g, np.inf))


def scalar_root_monotone(g, lo, hi, tol=1e-14, maxit=200):
    """Roots of elementwise increasing scalar maps on brackets [lo, hi].

    g maps arrays to arrays; lo, hi are arrays bracketing each root
    (g(lo) <= 0 <= g(hi)). Safeguarded bisection with a secant midpoint.
    """
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    glo, ghi = g(lo), g(hi)
    for _ in range(maxit):
        denom = ghi - glo
        mid = np.where(np.abs(denom) > 1e-300, lo - glo * (hi - lo) / denom,
                       0.5 * (lo + hi))
        mid = np.clip(mid, lo + 0.25 * (hi - lo) * 0.0, hi)
        bad = ~((mid > lo) & (mid < hi))
        mid = np.where(bad, 0.5 * (lo + hi), mid)
        gm = g(mid)
        take_lo = gm < 0
        lo = np.where(take_lo, mid, lo)
        glo = np.where(take_lo, gm, glo)
        hi = np.where(take_lo, hi, mid)
        ghi = np.where(take_lo, ghi, gm)
        if np.max(hi - lo) < tol:
            break
    return 0.5 * (lo + hi)


def douglas_rachford(prox_f, prox_g, s0, tol=1e-12, maxit=900):
    """Batched Douglas-Rachford on min f + g given both proxes (sigma = 1).

    prox_f, prox_g map (batch, d) -> (batch, d). Returns the f-side point.
    Stops on the f/g mismatch or when the iterate stagnates at float level.
    """
    s = np.atleast_2d(np.asarray(s0, dtype=float)).copy()
    x = prox_f(s)
    gap = np.inf
    for k in range(maxit):
        y = prox_g(2.0 * x - s)
        s = s + (y - x)
        x_new = prox_f(s)
        gap = float(np.max(np.abs(y - x_new))) if x_new.size else 0.0
        shift = float(np.max(np.abs(x_new - x))) if x_new.size else 0.0
        x = x_new
        if gap < tol or shift < 1e-14 * (1.0 + float(np.max(np.abs(x)))):
            return x, k + 1, gap
    return x, maxit, gap


def rays_grow(f, center, radius, dirs):
    """True if f increases from the center along every probe ray."""
    c = np.asarray(center, dtype=float)
    f0 = f(c)
    for d in dirs:
        d = np.asarray(d, dtype=float)
        nd = np.linalg.norm(d)
        if nd == 0:
            continue
        if f(c + radius * d / nd) <= f0 + 1e-12:
            return False
    return True


def probe_directions(d, rng=None):
    """Axis directions, their negatives, and a few random diagonals."""
    dirs = []
    eye = np.eye(d)
    for i in range(d):
        dirs.append(eye[i])
        dirs.append(-eye[i])
    rng = rng or np.random.default_rng(0)
    for _ in range(max(0, 8 - 2 * d)):
        v = rng.standard_normal(d)
        dirs.append(v / np.linalg.norm(v))
    return dirs


def check_gradient(f, grad, points, h=1e-6):
    """Worst relative error of analytic gradients vs central differences."""
    worst = 0.0
    for x in points:
        x = np.asarray(x, dtype=float)
        g = np.asarray(grad(x), dtype=float)
        fd = np.zeros_like(g)
        for i in range(len(x)):
            e = np.zeros_like(x)
            e[i] = h
            fd[i] = (f(x + e) - f(x - e)) / (2 * h)
        scale = max(1.0, float(np.linalg.norm(g)))
        worst = max(worst, float(np.linalg.norm(g - fd)) / scale)
    return worst

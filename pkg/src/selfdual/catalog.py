"""Built-in convex functions, operators and potentials by name.

Shared by the command line, the demos and the test suite. Every entry is a
factory taking keyword parameters from a config payload.
"""

import numpy as np

from . import convex as cv
from .lagrangian import (GradConvex, LinearPositive, MonotoneGraph,
                         SampledOperator, SkewPlusGrad, potential_for)


def rotation_matrix(d=2):
    """The standard skew rotation [[0, -1], [1, 0]] (d = 2 only)."""
    if d != 2:
        raise ValueError("rotation skew matrix is two-dimensional")
    return np.array([[0.0, -1.0], [1.0, 0.0]])


CONVEX_BUILDERS = {
    # f(x) = |x|^2 / 2
    "quadratic_identity": lambda d=1, **k: cv.quadratic_identity(int(d)),
    # f(x) = x'Qx/2 + b'x + c
    "quadratic": lambda Q, b=None, c=0.0, **k: cv.Quadratic(np.array(Q, float), b, c),
    # f(x) = scale |x|^r / r
    "power": lambda r, scale=1.0, d=1, **k: cv.PowerNorm(float(r), float(scale), int(d)),
    # f(x) = |x|^4 / 4
    "quartic": lambda d=1, **k: cv.PowerNorm(4.0, 1.0, int(d)),
    # f(x) = scale sum |x_i|
    "abs": lambda scale=1.0, d=1, **k: cv.AbsValue(float(scale), int(d)),
    "zero": lambda d=1, **k: cv.Quadratic(np.zeros((int(d), int(d)))),
    "indicator_box": lambda lower, upper, **k: cv.IndicatorBox(np.array(lower, float),
                                                               np.array(upper, float)),
    "support_box": lambda lower, upper, **k: cv.SupportBox(np.array(lower, float),
                                                           np.array(upper, float)),
}


def convex_from_config(cfg):
    cfg = dict(cfg)
    kind = cfg.pop("kind")
    if kind not in CONVEX_BUILDERS:
        raise KeyError(f"unknown convex function kind {kind!r}")
    return CONVEX_BUILDERS[kind](**cfg)


OPERATOR_BUILDERS = {
    # T = identity map (gradient of the half square norm)
    "identity": lambda d=1, **k: GradConvex(cv.quadratic_identity(int(d))),
    # T = gradient of a catalog convex function
    "gradient": lambda phi, **k: GradConvex(convex_from_config(phi)),
    # T(x) = x^3 + theta-style cubic flux y -> a y + b y^3
    "cubic_flux": lambda a=1.0, b=1.0, **k: GradConvex(
        cv.SumFn([cv.Quadratic(np.array([[float(a)]])), cv.PowerNorm(4, float(b))])
        if b > 0 else cv.Quadratic(np.array([[float(a)]]))),
    # T = Gamma + grad phi with skew Gamma
    "skew_plus_gradient": lambda gamma, phi, **k: SkewPlusGrad(
        np.array(gamma, float), convex_from_config(phi)),
    # T = rotation by the standard skew matrix (plus optional grad phi)
    "rotation": lambda phi=None, **k: SkewPlusGrad(
        rotation_matrix(), convex_from_config(phi) if phi
        else cv.Quadratic(np.zeros((2, 2)))),
    # T(x) = B x with positive semidefinite symmetric part
    "linear_positive": lambda B, **k: LinearPositive(np.array(B, float)),
    "zero": lambda d=1, **k: GradConvex(cv.Quadratic(np.zeros((int(d), int(d))))),
    # T sampled on a finite monotone graph
    "sampled": lambda csv=None, x=None, p=None, **k: SampledOperator(
        MonotoneGraph.from_csv(csv) if csv else MonotoneGraph(np.array(x, float),
                                                              np.array(p, float))),
}


def operator_from_config(cfg):
    cfg = dict(cfg)
    kind = cfg.pop("kind")
    if kind not in OPERATOR_BUILDERS:
        raise KeyError(f"unknown operator kind {kind!r}")
    return OPERATOR_BUILDERS[kind](**cfg)


def lagrangian_from_config(cfg):
    """A potential either from an operator payload or a serialized form."""
    if "operator" in cfg:
        return potential_for(operator_from_config(cfg["operator"]),
                             validate=bool(cfg.get("validate", False)))
    from .serialize import lagrangian_from_dict
    return lagrangian_from_dict(cfg)


def describe_catalog():
    lines = ["convex functions:"]
    for k in sorted(CONVEX_BUILDERS):
        lines.append(f"  {k}")
    lines.append("operators:")
    for k in sorted(OPERATOR_BUILDERS):
        lines.append(f"  {k}")
    lines.append("lagrangian forms: sum, grid, fitzpatrick, proxavg, "
                  "transformed, direct_sum, cross, block")
    return "\n".join(lines)

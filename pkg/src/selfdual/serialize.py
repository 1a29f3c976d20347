"""JSON and CSV interchange for the package's value types.

Lagrangian payloads carry a "form" discriminator; grid functions use a flat
record with an "inf" sentinel; certificates and solver traces are plain
dictionaries and CSV rows.
"""

import csv
import json

import numpy as np

from . import convex as cv
from .calculus import (BlockLagrangian, CrossCoupledLagrangian,
                       DirectSumLagrangian, TransformSpec,
                       TransformedLagrangian)
from .errors import InvalidConfig
from .lagrangian import (Certificate, FitzpatrickLagrangian, Grid2dLagrangian,
                         MonotoneGraph, ProxAverageLagrangian,
                         SumFormLagrangian, TransposedLagrangian, fitzpatrick,
                         proximal_average)


def convex_to_dict(f):
    if isinstance(f, cv.Quadratic):
        return {"kind": "quadratic", "Q": f.Q.tolist(), "b": f.b.tolist(),
                "c": f.c}
    if isinstance(f, cv.PowerNorm):
        return {"kind": "power", "r": f.r, "scale": f.scale, "d": f.dim}
    if isinstance(f, cv.AbsValue):
        return {"kind": "abs", "scale": f.scale, "d": f.dim}
    if isinstance(f, cv.IndicatorBox):
        return {"kind": "indicator_box", "lower": f.lower.tolist(),
                "upper": f.upper.tolist()}
    if isinstance(f, cv.SupportBox):
        return {"kind": "support_box", "lower": f.lower.tolist(),
                "upper": f.upper.tolist()}
    if isinstance(f, cv.LinearTilt):
        return {"kind": "linear_tilt", "base": convex_to_dict(f.base),
                "slope": f.slope.tolist()}
    if isinstance(f, cv.Shifted):
        return {"kind": "shifted", "base": convex_to_dict(f.base),
                "shift": f.shift.tolist()}
    if isinstance(f, cv.Scaled):
        return {"kind": "scaled", "base": convex_to_dict(f.base),
                "alpha": f.alpha}
    if isinstance(f, cv.Stretched):
        return {"kind": "stretched", "base": convex_to_dict(f.base),
                "alpha": f.alpha}
    if isinstance(f, cv.SumFn):
        return {"kind": "sum", "parts": [convex_to_dict(p) for p in f.parts]}
    if isinstance(f, cv.Separable1D):
        return {"kind": "separable", "base": convex_to_dict(f.base), "d": f.dim}
    if isinstance(f, cv.GridFn):
        return {"kind": "grid", "grid": f.grid.to_json_dict()}
    raise InvalidConfig(f"cannot serialize convex function {type(f).__name__}")


def convex_from_dict(d):
    kind = d["kind"]
    if kind == "quadratic":
        return cv.Quadratic(np.array(d["Q"], float), np.array(d["b"], float),
                            d.get("c", 0.0))
    if kind == "power":
        return cv.PowerNorm(d["r"], d.get("scale", 1.0), d.get("d", 1))
    if kind == "abs":
        return cv.AbsValue(d.get("scale", 1.0), d.get("d", 1))
    if kind == "indicator_box":
        return cv.IndicatorBox(np.array(d["lower"], float),
                               np.array(d["upper"], float))
    if kind == "support_box":
        return cv.SupportBox(np.array(d["lower"], float),
                             np.array(d["upper"], float))
    if kind == "linear_tilt":
        return cv.LinearTilt(convex_from_dict(d["base"]),
                             np.array(d["slope"], float))
    if kind == "shifted":
        return cv.Shifted(convex_from_dict(d["base"]), np.array(d["shift"], float))
    if kind == "scaled":
        return cv.Scaled(convex_from_dict(d["base"]), d["alpha"])
    if kind == "stretched":
        return cv.Stretched(convex_from_dict(d["base"]), d["alpha"])
    if kind == "sum":
        return cv.SumFn([convex_from_dict(p) for p in d["parts"]])
    if kind == "separable":
        return cv.Separable1D(convex_from_dict(d["base"]), d["d"])
    if kind == "grid":
        return cv.GridFn(cv.GridFunction.from_json_dict(d["grid"]))
    raise InvalidConfig(f"unknown convex function kind {kind!r}")


def graph_to_dict(g):
    return {"x": g.X.tolist(), "p": g.P.tolist()}


def graph_from_dict(d):
    return MonotoneGraph(np.array(d["x"], float), np.array(d["p"], float))


def lagrangian_to_dict(L):
    if isinstance(L, SumFormLagrangian):
        return {"form": "sum", "phi": convex_to_dict(L.phi),
                "gamma": L.gamma.tolist()}
    if isinstance(L, FitzpatrickLagrangian):
        return {"form": "fitzpatrick", "graph": graph_to_dict(L.graph)}
    if isinstance(L, Grid2dLagrangian):
        return {"form": "grid", "grid": L.grid.to_json_dict()}
    if isinstance(L, ProxAverageLagrangian):
        return {"form": "proxavg", "base": lagrangian_to_dict(L.base),
                "probe_box": L.probe_box.tolist()}
    if isinstance(L, TransposedLagrangian):
        return {"form": "transposed", "base": lagrangian_to_dict(L.base)}
    if isinstance(L, TransformedLagrangian):
        return {"form": "transformed", "base": lagrangian_to_dict(L.base),
                "spec": L.spec.as_dict()}
    if isinstance(L, DirectSumLagrangian):
        return {"form": "direct_sum",
                "parts": [lagrangian_to_dict(p) for p in L.parts]}
    if isinstance(L, CrossCoupledLagrangian):
        return {"form": "cross", "L1": lagrangian_to_dict(L.L1),
                "L2": lagrangian_to_dict(L.L2), "A": L.A.tolist()}
    if isinstance(L, BlockLagrangian):
        return {"form": "block",
                "parts": [lagrangian_to_dict(p) for p in L.parts],
                "blocks": [[a.tolist(), g.tolist()] for a, g in L.blocks]}
    raise InvalidConfig(f"cannot serialize lagrangian form {L.form!r}")


def lagrangian_from_dict(d):
    form = d.get("form")
    if form == "sum":
        gamma = np.array(d.get("gamma")) if d.get("gamma") is not None else None
        return SumFormLagrangian(convex_from_dict(d["phi"]), gamma)
    if form == "fitzpatrick":
        return fitzpatrick(graph_from_dict(d["graph"]))
    if form == "grid":
        return Grid2dLagrangian(cv.GridFunction.from_json_dict(d["grid"]))
    if form == "proxavg":
        base = lagrangian_from_dict(d["base"])
        box = np.array(d["probe_box"], float) if "probe_box" in d else None
        return proximal_average(base, probe_box=box)
    if form == "transposed":
        return TransposedLagrangian(lagrangian_from_dict(d["base"]))
    if form == "transformed":
        spec = TransformSpec(d["spec"]["kind"], d["spec"]["value"])
        return TransformedLagrangian(lagrangian_from_dict(d["base"]), spec)
    if form == "direct_sum":
        return DirectSumLagrangian([lagrangian_from_dict(p) for p in d["parts"]])
    if form == "cross":
        return CrossCoupledLagrangian(lagrangian_from_dict(d["L1"]),
                                      lagrangian_from_dict(d["L2"]),
                                      np.array(d["A"], float))
    if form == "block":
        return BlockLagrangian([lagrangian_from_dict(p) for p in d["parts"]],
                               [(np.array(a, float), np.array(g, float))
                                for a, g in d["blocks"]])
    raise InvalidConfig(f"unknown lagrangian form {form!r}")


def certificate_to_json(cert, path=None):
    payload = cert.as_dict()
    if path:
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2)
    return json.dumps(payload, indent=2)


def trace_to_csv(path, rows, header=("k", "objective", "step", "residual")):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([f"{v:.12g}" if isinstance(v, float) else v for v in row])


def save_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)

"""Config-driven command line: every experiment, machine-readable outputs.

One command per process; JSON in, JSON report plus CSV data out. Exit code
0 when every certificate met its tolerance, 1 on a certificate failure
(diagnostics in the report), 2 on invalid input.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import convex as cv
from . import evolution as ev
from . import inverse as iv
from . import pde
from . import solve as sv
from . import tolerances as tol
from .catalog import describe_catalog, lagrangian_from_config, operator_from_config
from .errors import InvalidConfig, SelfdualError
from .lagrangian import selfdual_residual, fitzpatrick, MonotoneGraph, potential_for
from .serialize import graph_from_dict, save_json

COMMANDS = ("check-selfdual", "fitzpatrick", "potential", "solve", "resolvent",
            "evolve", "semigroup", "connect", "elliptic", "parabolic", "inverse")


def _fail(msg):
    raise InvalidConfig(msg)


def _need(cfg, key, kind=None, where="config"):
    if key not in cfg:
        _fail(f"{where}: missing required key {key!r}")
    v = cfg[key]
    if kind is not None and not isinstance(v, kind):
        _fail(f"{where}: key {key!r} must be {kind.__name__}, got {type(v).__name__}")
    return v


def _seed(cfg):
    for name in ("SELFDUAL_SEED", "SELFdual_SEED"):
        env = os.environ.get(name)
        if env is not None:
            return int(env)
    return int(cfg.get("seed", 0))


def _outputs(cfg, config_path):
    base = os.path.splitext(config_path)[0]
    out = cfg.get("output", {})
    return (out.get("report", base + ".report.json"),
            out.get("data", base + ".data.csv"))


def _mesh(cfg):
    m = _need(cfg, "mesh", dict)
    return pde.Mesh1D(int(_need(m, "n", where="mesh")),
                      float(m.get("length", 1.0)))


def _grid_values(cfg, mesh, key="g"):
    spec = cfg.get(key, 0.0)
    x = mesh.nodes
    if isinstance(spec, list):
        v = np.array(spec, dtype=float)
        if v.shape != (mesh.n,):
            _fail(f"{key}: expected {mesh.n} node values, got {len(v)}")
        return v
    if isinstance(spec, dict):
        kind = _need(spec, "kind", str, key)
        amp = float(spec.get("amplitude", 1.0))
        if kind == "sine":
            return amp * np.sin(np.pi * float(spec.get("mode", 1)) * x / mesh.length)
        if kind == "constant":
            return np.full(mesh.n, amp)
        if kind == "zero":
            return np.zeros(mesh.n)
        _fail(f"{key}: unknown kind {kind!r}")
    return np.full(mesh.n, float(spec))


# ---------------------------------------------------------------------------
# command handlers: each returns (ok, report, rows, header)


def cmd_check_selfdual(cfg):
    L = lagrangian_from_config(_need(cfg, "lagrangian", dict))
    box = cfg.get("box", [-3.0, 3.0])
    nodes = int(cfg.get("nodes", 65))
    tolerance = float(cfg.get("tolerance", tol.tol_sd((box[1] - box[0]) / (nodes - 1))))
    rep = selfdual_residual(L, box, nodes)
    ok = rep.residual <= tolerance
    report = {"command": "check-selfdual", "residual": rep.residual,
              "fenchel_violation": rep.fenchel_violation,
              "compared": rep.compared, "tolerance": tolerance, "passed": ok}
    return ok, report, None, None


def cmd_fitzpatrick(cfg):
    gcfg = _need(cfg, "graph", dict)
    if "csv" in gcfg:
        graph = MonotoneGraph.from_csv(gcfg["csv"])
    else:
        graph = graph_from_dict(gcfg)
    L = fitzpatrick(graph)
    probes = np.array(cfg.get("probes", [[1.0, 1.0]]), dtype=float)
    vals = L.value_many(probes)
    rows = [list(z) + [v] for z, v in zip(probes, vals)]
    header = [f"x_{i+1}" for i in range(graph.dim)] + \
        [f"p_{i+1}" for i in range(graph.dim)] + ["value"]
    report = {"command": "fitzpatrick", "graph_size": len(graph),
              "monotone": True, "values": vals.tolist(), "passed": True}
    return True, report, rows, header


def cmd_potential(cfg):
    T = operator_from_config(_need(cfg, "operator", dict))
    L = potential_for(T, validate=bool(cfg.get("validate", True)))
    box = cfg.get("box", [-2.0, 2.0])
    nodes = int(cfg.get("nodes", 33))
    rep = selfdual_residual(L, box, nodes)
    tolerance = float(cfg.get("tolerance", tol.tol_sd((box[1] - box[0]) / (nodes - 1))))
    ok = rep.residual <= tolerance
    report = {"command": "potential", "form": L.form, "residual": rep.residual,
              "fenchel_violation": rep.fenchel_violation,
              "tolerance": tolerance, "passed": ok}
    return ok, report, None, None


def cmd_solve(cfg):
    L = lagrangian_from_config(_need(cfg, "lagrangian", dict))
    p = np.array(_need(cfg, "p", list), dtype=float)
    gap_tol = cfg.get("tolerance")
    trace = []
    x, cert = sv.solve_static(L, p, gap_tol=gap_tol, trace=trace)
    report = {"command": "solve", "certificate": cert.as_dict(),
              "passed": cert.converged}
    rows = [list(t) for t in trace]
    return cert.converged, report, rows, ["k", "objective", "step", "residual"]


def cmd_resolvent(cfg):
    T = operator_from_config(_need(cfg, "operator", dict))
    lam = float(_need(cfg, "lam", (int, float)))
    y = np.array(_need(cfg, "y", list), dtype=float)
    x = sv.resolvent(T, lam, y)
    report = {"command": "resolvent", "point": x.tolist(), "passed": True}
    return True, report, None, None


def cmd_evolve(cfg):
    T = operator_from_config(_need(cfg, "operator", dict))
    bc = _need(cfg, "boundary", dict)
    x0 = np.array(_need(bc, "x0", list, "boundary"), dtype=float)
    B = ev.BoundaryOp.initial_value(x0)
    gcfg = _need(cfg, "grid", dict)
    grid = ev.TimeGrid(int(_need(gcfg, "steps", int, "grid")),
                       float(gcfg.get("t_end", 1.0)))
    path, cert, report = ev.solve_evolution(T, B, grid,
                                            gap_tol=cfg.get("tolerance"))
    report = {"command": "evolve", **report, "passed": cert.converged}
    rows = [[t] + list(row) for t, row in zip(grid.nodes, path.values)]
    header = ["t"] + [f"u_{i+1}" for i in range(path.dim)]
    return cert.converged, report, rows, header


def cmd_semigroup(cfg):
    T = operator_from_config(_need(cfg, "operator", dict))
    omega = float(cfg.get("omega", 0.0))
    x0 = np.array(_need(cfg, "x0", list), dtype=float)
    t_end = float(cfg.get("t", 1.0))
    steps = int(cfg.get("steps", 64))
    pt, path, cert = ev.semigroup_flow(T, omega, x0, t_end, steps, full_path=True)
    report = {"command": "semigroup", "point": pt.tolist(),
              "certificate": cert.as_dict(), "passed": cert.converged}
    rows = [[t] + list(row) for t, row in zip(path.grid.nodes, path.values)]
    header = ["t"] + [f"u_{i+1}" for i in range(path.dim)]
    return cert.converged, report, rows, header


def cmd_connect(cfg):
    T = operator_from_config(_need(cfg, "operator", dict))
    S1 = operator_from_config(_need(cfg, "s1", dict))
    S2 = operator_from_config(_need(cfg, "s2", dict))
    gcfg = _need(cfg, "grid", dict)
    grid = ev.TimeGrid(int(_need(gcfg, "steps", int, "grid")),
                       float(gcfg.get("t_end", 1.0)))
    pu, pv, cert = ev.connect_graphs(T, S1, S2, grid,
                                     gap_tol=cfg.get("tolerance"))
    report = {"command": "connect", "certificate": cert.as_dict(),
              "passed": cert.converged}
    rows = [[t] + list(u) + list(v) for t, u, v
            in zip(grid.nodes, pu.values, pv.values)]
    header = ["t"] + [f"u_{i+1}" for i in range(pu.dim)] + \
        [f"v_{i+1}" for i in range(pv.dim)]
    return cert.converged, report, rows, header


def cmd_elliptic(cfg):
    mesh = _mesh(cfg)
    T = operator_from_config(_need(cfg, "flux", dict))
    lam = float(cfg.get("lambda", 0.0))
    g = _grid_values(cfg, mesh)
    prob = pde.EllipticProblem(T, lam, g, mesh)
    u, cert, report = pde.solve_elliptic(prob, gap_tol=cfg.get("tolerance"))
    report = {"command": "elliptic", **report, "passed": cert.converged}
    rows = [[x, v] for x, v in zip(mesh.nodes, u)]
    return cert.converged, report, rows, ["x", "u"]


def cmd_parabolic(cfg):
    mesh = _mesh(cfg)
    T = operator_from_config(_need(cfg, "flux", dict))
    g = _grid_values(cfg, mesh)
    bc = _need(cfg, "boundary", dict)
    if "x0" in bc:
        u0 = np.array(bc["x0"], dtype=float)
    else:
        u0 = _grid_values(bc, mesh, key="initial")
    B = ev.BoundaryOp.initial_value(u0)
    gcfg = _need(cfg, "tgrid", dict)
    tgrid = ev.TimeGrid(int(_need(gcfg, "steps", int, "tgrid")),
                        float(gcfg.get("t_end", 1.0)))
    prob = pde.ParabolicProblem(T, g, mesh, B, tgrid)
    U, cert, report = pde.solve_parabolic(prob, gap_tol=cfg.get("tolerance"))
    report = {"command": "parabolic", **report, "passed": cert.converged}
    rows = [[t, x, U[k, i]] for k, t in enumerate(tgrid.nodes)
            for i, x in enumerate(mesh.nodes)]
    return cert.converged, report, rows, ["t", "x", "u"]


def cmd_inverse(cfg):
    mesh = _mesh(cfg)
    lam = float(cfg.get("lambda", 0.0))
    g = _grid_values(cfg, mesh)
    obs = _need(cfg, "observed", (dict, list))
    if isinstance(obs, dict) and "csv" in obs:
        u_obs = np.loadtxt(obs["csv"], delimiter=",", skiprows=1, usecols=1)
    else:
        u_obs = np.array(obs, dtype=float)
    ccfg = cfg.get("class", {})
    cls = iv.ParamClass.default_cubic(hi=float(ccfg.get("hi", 2.0)),
                                      theta_min=float(ccfg.get("theta_min", 0.05)))
    eps = cfg.get("eps_schedule", [1e-1, 1e-2, 1e-3, 1e-4])
    prob = iv.InverseProblem(u_obs, g, lam, mesh, eps, cls)
    theta, u, rep = iv.fit_operator(prob)
    report = {"command": "inverse", **rep, "passed": rep["converged"]}
    rows = [[t["eps"]] + t["theta"] + [t["misfit"], t["penalty"]]
            for t in rep["trace"]]
    header = ["eps"] + [f"theta_{i+1}" for i in range(cls.m)] + \
        ["misfit", "penalty"]
    return rep["converged"], report, rows, header


HANDLERS = {
    "check-selfdual": cmd_check_selfdual,
    "fitzpatrick": cmd_fitzpatrick,
    "potential": cmd_potential,
    "solve": cmd_solve,
    "resolvent": cmd_resolvent,
    "evolve": cmd_evolve,
    "semigroup": cmd_semigroup,
    "connect": cmd_connect,
    "elliptic": cmd_elliptic,
    "parabolic": cmd_parabolic,
    "inverse": cmd_inverse,
}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="selfdual",
        description="Variational solvers for monotone vector fields")
    parser.add_argument("--list-catalog", action="store_true",
                        help="print built-in operators and potential forms")
    sub = parser.add_subparsers(dest="command")
    for c in COMMANDS:
        pc = sub.add_parser(c)
        pc.add_argument("--config", required=True)
    args = parser.parse_args(argv)
    if args.list_catalog:
        print(describe_catalog())
        return 0
    if not args.command:
        parser.print_help()
        return 2
    try:
        with open(args.config) as fh:
            try:
                cfg = json.load(fh)
            except json.JSONDecodeError as e:
                print(f"{args.config}: line {e.lineno} column {e.colno}: {e.msg}",
                      file=sys.stderr)
                return 2
        if not isinstance(cfg, dict):
            _fail("top-level config must be a JSON object")
        np.random.seed(_seed(cfg))
        ok, report, rows, header = HANDLERS[args.command](cfg)
    except (InvalidConfig, FileNotFoundError, KeyError, TypeError) as e:
        print(f"invalid input: {e}", file=sys.stderr)
        return 2
    except SelfdualError as e:
        print(f"solver failure: {e}", file=sys.stderr)
        return 1
    report_path, data_path = _outputs(cfg, args.config)
    save_json(report_path, report)
    if rows is not None:
        from .serialize import trace_to_csv
        trace_to_csv(data_path, rows, header=header)
    print(json.dumps(report.get("certificate", report), indent=2))
    if not ok:
        print("certificate failed its tolerance", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command line entry point: ``setgame <subcommand> --spec FILE ...``.

Exit codes: 0 ok, 2 spec error, 3 empty / no-value verdict, 4 numeric
guard violation, 5 I/O error.
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from . import io, plots
from .errors import EmptyCloudError, NoValueError, SetGameError, SpecError
from .game import GameSpec
from .pde import Grid1D, max_selector, solve_hjb_system, zero_sum_value
from .selectors import make_singleton_selector
from .static import (
    clouds_batch,
    continuity_report,
    hausdorff,
    isaacs_values_batch,
    theta_lattice,
)
from .tree import (
    ControlProfile,
    build_tree,
    certify_equilibrium,
    constant_field,
    construct_control,
    payoff_girsanov,
)
from .setvalue import SamplingPlan, branch_family, certified_band, estimate_set_value

DOMAIN = (-6.0, 6.0)


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _gh_expectation(spec: GameSpec, n=80):
    """E[g(B_T)] by Gauss-Hermite quadrature (d = 1)."""
    nodes, weights = np.polynomial.hermite_e.hermegauss(n)
    x = math.sqrt(spec.horizon) * nodes
    g = spec.terminal_values(x[:, None])
    return (weights[:, None] * g).sum(axis=0) / math.sqrt(2 * math.pi)


def _grid(args, spec):
    dx = (DOMAIN[1] - DOMAIN[0]) / (args.nx + 1)
    return Grid1D.uniform(dx, *DOMAIN, horizon=spec.horizon)


def _emit(args, results, csv_rows=None):
    if args.format == "csv":
        if csv_rows is None:
            raise SpecError(f"subcommand {args.command!r} has no CSV form; use --format json")
        header, rows = csv_rows
        text = io.export({"header": header, "rows": rows}, "csv", args.out)
    else:
        text = io.export(results, "json", args.out)
    if args.out is None:
        sys.stdout.write(text)


def _figures(args):
    return args.out is not None and not args.no_figures


# ---------------------------------------------------------------- subcommands

def cmd_hamiltonian(args, spec):
    probes = theta_lattice(spec, args.t_points, args.x_points, args.z_points,
                           tuple(args.x_box), tuple(args.z_box))
    clouds = clouds_batch(spec, probes, [args.eps])[0]
    rows = [
        {"t": th.t, "x": th.x.tolist(), "z": th.z.tolist(), "cloud": c}
        for th, c in zip(probes, clouds)
    ]
    results = {"game": spec.name, "eps": args.eps, "probes": rows}
    empty = [r for r in rows if r["cloud"].is_empty]
    code = 0
    if empty:
        results["verdict"] = f"empty Hamiltonian at {len(empty)} of {len(rows)} probes"
        code = EmptyCloudError.exit_code
    else:
        results["verdict"] = "nonempty at all probes"
        rep = continuity_report(spec, probes, args.eps_ladder)
        results["continuity"] = {"ladder": rep.ladder, "rho": rep.rho, "monotone": rep.monotone}
        if _figures(args):
            results["figures"] = [
                plots.plot_continuity(rep.ladder, rep.rho, plots.figure_path(args.out, "rho"))
            ]
    header = ["probe", "t"] + [f"x{j + 1}" for j in range(spec.brownian_dim)]
    header += [f"y{i + 1}" for i in range(spec.num_players)]
    csv_rows = []
    for m, r in enumerate(rows):
        for p in r["cloud"].points:
            csv_rows.append([m, r["t"], *r["x"], *map(float, p)])
    _emit(args, results, (header, csv_rows))
    return code


def cmd_isaacs(args, spec):
    ts = np.linspace(0.0, spec.horizon, args.t_points)
    xs = np.linspace(*args.x_box, args.x_points)
    zs = np.linspace(*args.z_box, args.z_points)
    X, Zv = np.meshgrid(xs, zs, indexing="ij")
    probes, failing = [], []
    for t in ts:
        s, i = isaacs_values_batch(spec, t, X.reshape(-1, 1), Zv.reshape(-1, 1))
        for x, z, a, b in zip(X.ravel(), Zv.ravel(), s, i):
            row = {"t": float(t), "x": float(x), "z1": float(z), "supinf": float(a),
                   "infsup": float(b), "holds": bool(abs(a - b) <= 1e-12)}
            probes.append(row)
            if not row["holds"]:
                failing.append(row)
    verdict = "Isaacs holds at all probes" if not failing else "no value: Isaacs fails"
    results = {"game": spec.name, "verdict": verdict, "n_probes": len(probes),
               "n_failing": len(failing), "failing": failing}
    if _figures(args):
        sl = [r for r in probes if r["t"] == 0.0 and r["x"] == float(xs[len(xs) // 2])]
        results["figures"] = [plots.plot_isaacs(
            [r["z1"] for r in sl], [r["supinf"] for r in sl], [r["infsup"] for r in sl],
            plots.figure_path(args.out, "isaacs"))]
    header = ["t", "x", "z1", "supinf", "infsup", "holds"]
    csv_rows = [[r[k] for k in header] for r in probes]
    _emit(args, results, (header, csv_rows))
    return NoValueError.exit_code if failing else 0


def cmd_set_value(args, spec):
    tree = build_tree(spec.horizon, args.depth)
    family = branch_family(tree, spec)
    plan = SamplingPlan(n_switch=args.switches, n_random=args.samples, seed=args.seed)
    vc = estimate_set_value(tree, spec, family, plan)
    results = vc.to_dict()
    results["game"] = spec.name
    if args.band > 0:
        band = certified_band(tree, spec, family, vc, args.band, args.delta, args.seed)
        results["band"] = [b.to_dict() for b in band]
        results["metadata"]["delta"] = args.delta
    if _figures(args):
        results["figures"] = [plots.plot_cloud(vc.cloud.points, plots.figure_path(args.out, "cloud"),
                                               results.get("band"))]
    _emit(args, results, io.cloud_rows(vc.cloud, vc.provenance))
    return 0


def cmd_pde(args, spec):
    if spec.brownian_dim != 1:
        raise SpecError("the PDE solver requires d = 1")
    grid = _grid(args, spec)
    reference = _gh_expectation(spec)
    results = {"game": spec.name, "grid": grid.to_dict(),
               "quadrature_without_hamiltonian": reference.tolist()}
    code = 0
    sol = None
    if spec.num_players == 1:
        results["mode"] = "control"
        sol = solve_hjb_system(max_selector(spec, grid), spec, grid)
        results["value"] = sol.root().tolist()
    elif spec.num_players == 2 and spec.zero_sum:
        res = zero_sum_value(spec, grid, strict=args.strict)
        results["mode"] = "zero-sum"
        results["isaacs_ok"] = res.isaacs_ok
        results["z_range"] = res.z_range
        if res.isaacs_ok:
            results["value"] = [res.u1_root, res.u2_root]
            sol = res.solution
        else:
            results["value"] = None
            results["verdict"] = "no value: Isaacs fails"
            results["failing"] = [
                {"t": th.t, "x": th.x.tolist(), "z": th.z.tolist()} for th in res.failing[:50]
            ]
            code = NoValueError.exit_code
    else:
        probes = theta_lattice(spec, 3, 9, 5, (-3.0, 3.0), (-2.0, 2.0))
        sel = make_singleton_selector(spec, probes)
        results["mode"] = "singleton"
        sol = solve_hjb_system(sel, spec, grid)
        results["value"] = sol.root().tolist()
    if sol is not None:
        results["metadata"] = {"boundary": sol.metadata["boundary"], "selector": sol.label}
        if _figures(args):
            u0 = sol.u[0]
            if results.get("mode") == "zero-sum":
                u0 = np.concatenate([u0, -u0], axis=1)
            results["figures"] = [plots.plot_profile(grid.points, u0,
                                                     plots.figure_path(args.out, "u0"))]
    header = ["quantity"] + [f"y{i + 1}" for i in range(spec.num_players)]
    rows = [["quadrature_without_hamiltonian", *map(float, reference)]]
    if results.get("value") is not None:
        rows.append(["value", *map(float, results["value"])])
    _emit(args, results, (header, rows))
    return code


def _load_control(path, tree, spec):
    data = io.read_json(path)
    if "constant" in data:
        return ControlProfile.constant(tree, spec, [tuple(a) for a in data["constant"]])
    if "per_node" in data:
        levels = data["per_node"]
        if len(levels) != tree.depth:
            raise SpecError(f"{path}: control has {len(levels)} levels, tree depth is {tree.depth}")
        return ControlProfile([
            np.array([spec.profile_index([tuple(a) for a in prof]) for prof in lvl], dtype=int)
            for lvl in levels
        ])
    raise SpecError(f"{path}: control file needs 'constant' or 'per_node'")


def _load_eta(path, tree):
    data = io.read_json(path)
    if "constant" in data:
        return constant_field(tree, data["constant"])
    if "levels" in data:
        eta = [np.asarray(v, dtype=float) for v in data["levels"]]
        if len(eta) != tree.depth or any(len(v) != 2**k for k, v in enumerate(eta)):
            raise SpecError(f"{path}: eta levels do not match a depth-{tree.depth} tree")
        return eta
    raise SpecError(f"{path}: eta file needs 'constant' or 'levels'")


def cmd_certify(args, spec):
    tree = build_tree(spec.horizon, args.depth)
    control = _load_control(args.control, tree, spec)
    cert = certify_equilibrium(tree, spec, control)
    results = {"game": spec.name, "depth": args.depth, "certificate": cert.to_dict(),
               "payoff_girsanov": payoff_girsanov(tree, spec, control).tolist()}
    header = ["player", "value", "best_response", "gap"]
    rows = [[i + 1, float(v), float(b), float(g)]
            for i, (v, b, g) in enumerate(zip(cert.values, cert.best_responses, cert.gaps))]
    _emit(args, results, (header, rows))
    return 0


def cmd_construct(args, spec):
    tree = build_tree(spec.horizon, args.depth)
    eta = _load_eta(args.eta, tree)
    control = construct_control(tree, spec, eta, None, args.delta)
    cert = certify_equilibrium(tree, spec, control)
    results = {"game": spec.name, "depth": args.depth, "delta": args.delta,
               "control": control.to_dict(spec), "certificate": cert.to_dict()}
    header = ["level", "node", "profile"]
    rows = [[k, j, str(spec.profile(int(p)))]
            for k, lvl in enumerate(control.levels) for j, p in enumerate(lvl)]
    _emit(args, results, (header, rows))
    return 0


def cmd_hausdorff(args, spec=None):
    a, b = io.read_cloud(args.clouds[0]), io.read_cloud(args.clouds[1])
    d = hausdorff(a, b)
    results = {"distance": d if math.isfinite(d) else None, "empty": not math.isfinite(d)}
    _emit(args, results, (["distance"], [[d]]))
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="setgame", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, spec=True):
        if spec:
            p.add_argument("--spec", required=True, help="game file or builtin name e1..e4")
        p.add_argument("--out", help="output file (stdout when omitted); figures go next to it")
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--no-figures", action="store_true")
        return p

    def lattice(p, n_z=9):
        p.add_argument("--t-points", type=int, default=5)
        p.add_argument("--x-points", type=int, default=9)
        p.add_argument("--z-points", type=int, default=n_z)
        p.add_argument("--x-box", type=_floats, default=[-1.0, 1.0])
        p.add_argument("--z-box", type=_floats, default=[-1.0, 1.0])

    p = common(sub.add_parser("hamiltonian", help="equilibrium clouds on a probe lattice"))
    lattice(p)
    p.add_argument("--eps", type=float, default=0.0)
    p.add_argument("--eps-ladder", type=_floats, default=[0.1, 0.05, 0.02, 0.01])
    p.set_defaults(func=cmd_hamiltonian)

    p = common(sub.add_parser("isaacs", help="Isaacs check for two-player zero-sum games"))
    lattice(p, n_z=9)
    p.set_defaults(func=cmd_isaacs)

    p = common(sub.add_parser("set-value", help="value cloud from sampled index maps"))
    p.add_argument("--depth", type=int, default=12)
    p.add_argument("--samples", type=int, default=200, help="random adapted index maps")
    p.add_argument("--switches", type=int, default=1, help="deterministic time switches")
    p.add_argument("--band", type=int, default=10, help="cloud points to certify (0 to skip)")
    p.add_argument("--delta", type=float, default=0.01)
    p.set_defaults(func=cmd_set_value)

    p = common(sub.add_parser("pde", help="finite-difference value (singleton, zero-sum, control)"))
    p.add_argument("--nx", type=int, default=1199, help="interior grid points on [-6, 6]")
    p.add_argument("--strict", action="store_true", help="full-range Isaacs lattice")
    p.set_defaults(func=cmd_pde)

    p = common(sub.add_parser("certify", help="eps-equilibrium certificate of a control file"))
    p.add_argument("--control", required=True)
    p.add_argument("--depth", type=int, default=12)
    p.set_defaults(func=cmd_certify)

    p = common(sub.add_parser("construct", help="build a control from an eta file"))
    p.add_argument("--eta", required=True)
    p.add_argument("--depth", type=int, default=10)
    p.add_argument("--delta", type=float, default=0.01)
    p.set_defaults(func=cmd_construct)

    p = common(sub.add_parser("hausdorff", help="distance between two cloud files"), spec=False)
    p.add_argument("clouds", nargs=2)
    p.set_defaults(func=cmd_hausdorff)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = io.load_spec(args.spec) if hasattr(args, "spec") else None
        return args.func(args, spec)
    except SetGameError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.exit_code
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return SpecError.exit_code


if __name__ == "__main__":
    sys.exit(main())

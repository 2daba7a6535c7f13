"""Command-line driver: ``flowhom <command> --config SCENARIO --out DIR``."""

import argparse
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .cell import solve_cell_flowrep
from .effective import assemble_B, coercivity_certificate
from .errors import FlowhomError
from .io import write_grid_csv, write_manifest, write_svg_chart, write_table_csv
from .meanvalue import default_schedule, window_average
from .pde import solve_eps, solve_homogenized
from .scenarios import BUILTIN, config_hash, list_builtin, load_config
from .sigma import convergence_study, nonuniqueness_study
from .torus import inverse_transform, nodal_grid

MASS_TOL = 1e-10
L2_TOL = 1e-10


def _eps_list(args, scenario):
    if args.eps:
        return [float(e) for e in args.eps.split(",") if e.strip()]
    return list(scenario.sweep.eps)


def _pool_map(func, items, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(func, items))
    return [func(i) for i in items]


def _center(scenario):
    lo, hi = scenario._diagnostic_box()
    return 0.5 * (lo + hi)


def cmd_cell(scenario, args, out):
    X0 = _center(scenario)
    cutoff = scenario.sweep.cutoff
    cell, spec = solve_cell_flowrep(scenario.field, 0.0, X0, scenario.b, scenario.D, cutoff,
                                    tol=scenario.sweep.tol)
    B = assemble_B(cell, spec, tau=0.0, X=X0)
    d = scenario.dimension
    n = 2 * cutoff + 1
    y = nodal_grid(n, d).reshape(d, -1)
    outputs = []
    for i, w in enumerate(cell.omegas):
        vals = np.asarray(inverse_transform(w, n)).reshape(-1)
        name = f"cell_omega_{i + 1}.csv"
        write_table_csv(out / name, [f"y{a + 1}" for a in range(d)] + ["omega"], np.column_stack([y.T, vals]))
        outputs.append(name)
    rows = [(i + 1, j + 1, B.values[i, j], B.sym[i, j], B.asym[i, j], B.raw[i, j])
            for i in range(d) for j in range(d)]
    write_table_csv(out / "B.csv", ["i", "j", "B", "sym", "asym", "raw"], rows)
    outputs.append("B.csv")
    checks = {
        "residual": bool(np.all(cell.residual_norms <= 10 * scenario.sweep.tol * max(1.0, len(y[0]) ** 0.5))),
        "formula_agreement": B.formula_gap <= 1e-8,
        "sym_positive": float(np.linalg.eigvalsh(B.sym).min()) > 0,
    }
    extra = {"X": X0, "B": B.values, "residual_norms": cell.residual_norms, "iterations": cell.iterations,
             "formula_gap": B.formula_gap}
    return outputs, checks, extra


def _jacobian_chart(scenario, out, X0):
    tau_max = scenario.config["diagnostics"]["tau_max"]
    taus = np.linspace(0.0, tau_max, 101)
    pts = np.repeat(X0.reshape(-1, 1), taus.size, axis=1)
    x = scenario.field.flow_map(pts, taus)
    J = scenario.field.jacobian_map(x, taus)
    norms = np.linalg.norm(np.moveaxis(J, 2, 0), ord=2, axis=(1, 2))
    write_svg_chart(out / "jacobian.svg", {"|J|": (taus, norms)}, "tau", "operator norm", "Jacobian along orbit")
    return "jacobian.svg"


def cmd_effective(scenario, args, out):
    diag = scenario.diagnose()
    X0 = _center(scenario)
    outputs = [_jacobian_chart(scenario, out, X0)]
    checks = {"verdict_matches": diag.verdict == scenario.expected_verdict, "class_consistent": diag.class_consistent}
    extra = {"verdict": diag.verdict, "jacobian_bound": diag.jacobian.value, "jacobian_growth": diag.jacobian.growth,
             "orbit": diag.orbit}
    if diag.verdict != "homogenizes":
        return outputs, checks, extra
    d = scenario.dimension
    if scenario.tensor_is_uniform:
        pts = [X0]
    else:
        lo, hi = scenario._diagnostic_box()
        axes = [np.linspace(l, h, 3) for l, h in zip(lo, hi)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij")).reshape(d, -1).T
    results = _pool_map(scenario.effective_at, list(pts), args.threads)
    header = [f"X{a + 1}" for a in range(d)] + [f"D{i + 1}{j + 1}" for i in range(d) for j in range(d)] + \
        ["sym_min_eig", "certificate_margin"]
    rows, ok = [], True
    for X, T in zip(pts, results):
        cert = coercivity_certificate(T, scenario.coercivity)
        ok = ok and cert.passed
        rows.append(list(X) + list(np.asarray(T.D_eff).ravel()) + [T.sym_min_eig, cert.margin])
    write_table_csv(out / "effective.csv", header, rows)
    outputs.append("effective.csv")
    checks["coercivity_certificate"] = ok
    extra["D_eff"] = [np.asarray(T.D_eff) for T in results]
    return outputs, checks, extra


def _eps_tag(eps):
    return f"{eps:.6g}".replace(".", "p")


def cmd_solve_eps(scenario, args, out):
    eps_list = _eps_list(args, scenario)

    def run(eps):
        return eps, solve_eps(scenario.eps_problem(eps))

    outputs, checks, extra = [], {}, {}
    for eps, sol in _pool_map(run, eps_list, args.threads):
        tag = _eps_tag(eps)
        write_grid_csv(out / f"eps_{tag}_final.csv", sol.box, sol.frames[-1])
        write_table_csv(out / f"eps_{tag}_trace.csv", ["t", "mass", "l2"],
                        np.column_stack([sol.step_times, sol.mass_trace, sol.l2_trace]))
        outputs += [f"eps_{tag}_final.csv", f"eps_{tag}_trace.csv"]
        checks[f"mass_{tag}"] = sol.mass_drift() <= MASS_TOL
        checks[f"l2_monotone_{tag}"] = sol.max_l2_increase() <= L2_TOL
        extra[tag] = {"steps": sol.meta["steps"], "mass_drift": sol.mass_drift(),
                      "l2_increase": sol.max_l2_increase()}
    return outputs, checks, extra


def cmd_solve_hom(scenario, args, out):
    eps = min(_eps_list(args, scenario))
    box = scenario.box(eps)
    sol = solve_homogenized(scenario.hom_problem(box))
    write_grid_csv(out / "hom_final.csv", box, sol.frames[-1])
    write_table_csv(out / "hom_trace.csv", ["t", "mass", "l2"],
                    np.column_stack([sol.step_times, sol.mass_trace, sol.l2_trace]))
    checks = {"mass": sol.mass_drift() <= MASS_TOL, "l2_monotone": sol.max_l2_increase() <= L2_TOL}
    return ["hom_final.csv", "hom_trace.csv"], checks, {"mass_drift": sol.mass_drift()}


def cmd_converge(scenario, args, out):
    report = convergence_study(scenario, _eps_list(args, scenario), threads=args.threads)
    write_table_csv(out / "converge.csv", ["scenario", "eps", "norm", "error", "order"], report.rows())
    series = {report.norm: ([e for e, v in zip(report.epsilon, report.errors) if v],
                            [v for v in report.errors if v])}
    write_svg_chart(out / "converge.svg", series, "eps", "error", report.scenario, logx=True, logy=True)
    outputs = ["converge.csv", "converge.svg"]
    if report.pairing_gaps:
        rows = [(name, eps, gap) for name, gaps in sorted(report.pairing_gaps.items())
                for eps, gap in zip(report.epsilon, gaps)]
        write_table_csv(out / "pairing_gaps.csv", ["test_function", "eps", "gap"], rows)
        outputs.append("pairing_gaps.csv")
    checks = {"verdict_matches": report.verdict == scenario.expected_verdict,
              "decreasing": report.strictly_decreasing, "no_failures": not report.failures}
    extra = {"order": report.order, "errors": report.errors, "failures": report.failures,
             "pairing_gaps": report.pairing_gaps}
    return outputs, checks, extra


def cmd_meanvalue(scenario, args, out):
    X0 = _center(scenario)
    signal = scenario._mean_signal(X0)
    diag = scenario.diagnose()
    if signal.exact_window_average is not None:
        lengths = [2.0 ** k for k in range(1, 37)]
    else:
        lengths = list(default_schedule(8).lengths)
    values = [np.atleast_1d(np.asarray(window_average(signal, l), dtype=float)).ravel() for l in lengths]
    k = values[0].size
    write_table_csv(out / "meanvalue.csv", ["window"] + [f"m{i + 1}" for i in range(k)],
                    [[l] + list(v) for l, v in zip(lengths, values)])
    write_svg_chart(out / "meanvalue.svg", {"first entry": (lengths, [v[0] for v in values])}, "window half-width",
                    "window average", scenario.name, logx=True)
    checks = {"verdict_matches": diag.verdict == scenario.expected_verdict}
    return ["meanvalue.csv", "meanvalue.svg"], checks, {"verdict": diag.verdict}


def cmd_counterexample(scenario, args, out):
    if args.name == "shear":
        sc = load_config("shear")
        report = convergence_study(sc, _eps_list(args, sc), threads=args.threads, battery=False)
        rows = [(e, n, g) for e, n, g in zip(report.epsilon, report.errors, report.extra["grad_x1"])]
        write_table_csv(out / "shear.csv", ["eps", "norm_at_T", "grad_x1_norm"], rows)
        write_svg_chart(out / "shear.svg", {"||u(T)||": (report.epsilon, report.errors),
                                            "||d_X1 v||": (report.epsilon, report.extra["grad_x1"])},
                        "eps", "norm", "shear", logx=True, logy=True)
        checks = {"verdict_trivial": report.verdict == "trivial_limit", "norm_decreasing": report.strictly_decreasing,
                  "gradient_decreasing": all(a > b for a, b in zip(report.extra["grad_x1"],
                                                                    report.extra["grad_x1"][1:]))}
        return ["shear.csv", "shear.svg"], checks, {"errors": report.errors, "grad_x1": report.extra["grad_x1"]}
    result = nonuniqueness_study()
    keys = ["exponent", "epsilon", "distance_to_1", "distance_to_2", "closer", "predicted", "window_average"]
    write_table_csv(out / "nonunique.csv", keys, [[b[k] for k in keys] for b in result["branches"]])
    return ["nonunique.csv"], {"branches_agree": result["passed"]}, result


COMMANDS = {
    "cell": cmd_cell,
    "effective": cmd_effective,
    "solve-eps": cmd_solve_eps,
    "solve-hom": cmd_solve_hom,
    "converge": cmd_converge,
    "meanvalue": cmd_meanvalue,
    "counterexample": cmd_counterexample,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default="constant_drift", help="built-in scenario name or INI file")
    common.add_argument("--out", default="flowhom_out", help="output directory")
    common.add_argument("--eps", default=None, help="comma-separated epsilon values overriding the sweep")
    common.add_argument("--seed", type=int, default=0, help="seed for randomized diagnostics")
    common.add_argument("--threads", type=int, default=1, help="worker threads for independent runs")
    parser = argparse.ArgumentParser(prog="flowhom", description="Homogenization along mean-flow orbits")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "counterexample":
            p.add_argument("name", choices=["shear", "nonunique"])
    sub.add_parser("list-scenarios", parents=[common])
    return parser


def run(argv=None):
    """Parse arguments, run one command and write its manifest; returns the manifest."""
    args = build_parser().parse_args(argv)
    if args.command == "list-scenarios":
        for name in list_builtin():
            sc = load_config(name)
            print(f"{name:20s} {sc.expected_verdict:14s} {sc.description}")
        return {"scenarios": list(BUILTIN)}
    np.random.seed(args.seed)
    started = datetime.now(timezone.utc).isoformat()
    scenario = load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", category=UserWarning)
        outputs, checks, extra = COMMANDS[args.command](scenario, args, out)
    return write_manifest(out, scenario.name, config_hash(scenario.config), args.command, outputs, checks,
                          extra, started)


def main(argv=None):
    try:
        manifest = run(argv)
    except FlowhomError as exc:
        print(f"flowhom: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    if "checks" in manifest:
        for name, ok in manifest["checks"].items():
            print(f"{'PASS' if ok else 'FAIL'} {name}")
        return 0 if manifest["passed"] else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line driver: ``ssr <solve|sweep|continue|qp-sweep|backbone> --config FILE``.

Each command writes a CSV file with a ``# key: value`` header block and a
run summary (``<out>.summary.yaml``) holding settings, per-point solver
metadata and timings. CSV files depend only on the configuration, so
identical inputs give byte-identical results.
"""
from __future__ import annotations

import argparse
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import yaml

from .config import config_from_dict, parse_config
from .errors import ConfigError, ConvergenceError, DiscretizationError, ResonanceError, SSRError

COMMANDS = ("solve", "sweep", "continue", "qp-sweep", "backbone")


def fmt(value):
    """17 significant digits for floats, plain text otherwise."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_csv(path, header, columns, rows):
    lines = [f"# {k}: {fmt(v)}" for k, v in header.items()]
    lines.append(",".join(columns))
    lines.extend(",".join(fmt(v) for v in row) for row in rows)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_summary(path, summary):
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(summary, fh, sort_keys=True)


def summary_path(out):
    root, _ = os.path.splitext(out)
    return root + ".summary.yaml"


def _header(cfg, command):
    s = cfg.solver
    return {"command": command, "model": cfg.system["model"],
            "nonlinearity": cfg.system["nonlinearity"].get("type", "none"),
            "forcing": cfg.forcing["type"], "method": s["method"], "m": s["m"],
            "tol": float(s["tol"]), "route": s["route"], "scheme": s["scheme"]}


def _amp_columns(n):
    return [f"amp_dof{j + 1}" for j in range(n)]


def _require_forcing(cfg, kind, command):
    if cfg.forcing["type"] != kind:
        raise ConfigError(f"{command} needs {kind} forcing",
                          [f"forcing.type: {command} needs {kind!r}, got {cfg.forcing['type']!r}"])


# ------------------------------------------------------------------ commands

def cmd_solve(cfg):
    from .newton import solve, solve_quasiperiodic_hybrid
    from .problem import periodic_problem

    system = cfg.build_system()
    forcing = cfg.build_forcing()
    s = cfg.solver
    if forcing.k > 1:
        sol, trace, method = solve_quasiperiodic_hybrid(
            system, forcing, K=cfg.qp_sweep["K"], tol=s["tol"], max_iter=s["max_iter"],
            method=s["method"], K_max=cfg.qp_sweep["K_max"])
        row = [*forcing.Omega, float(np.max(sol.amplitude())), True, method, trace.iterations]
        return ["omega1", "omega2", "max_amp", "converged", "method", "iterations"], [row], []
    problem = periodic_problem(system, forcing, m=s["m"], route=s["route"], scheme=s["scheme"])
    sol, trace, method = solve(problem, s["method"], None, s["tol"], s["max_iter"])
    om = forcing.Omega[0]
    row = [om, 2 * np.pi / om, *sol.amplitude(), True, method, trace.iterations,
           sol.meta["residual"]]
    cols = ["omega", "T", *_amp_columns(system.n), "converged", "method", "iterations", "residual"]
    return cols, [row], []


def cmd_sweep(cfg):
    from .continuation import sequential_sweep

    _require_forcing(cfg, "harmonic", "sweep")
    system = cfg.build_system()
    sw, s = cfg.sweep, cfg.solver
    omegas = np.linspace(sw["omega_start"], sw["omega_stop"], int(sw["points"]))
    branch = sequential_sweep(system, cfg.build_forcing(omegas[0]), omegas, s["m"], s["method"],
                              s["tol"], s["max_iter"], s["route"], s["scheme"])
    rows, warnings = [], []
    for p in branch.points:
        amp = [np.nan] * system.n if p.amplitude is None else list(p.amplitude)
        rows.append([p.omega, p.T, *amp, not p.failed, p.method, p.iterations, p.residual])
        if p.failed:
            warnings.append(f"no convergence at omega={fmt(p.omega)}")
    cols = ["omega", "T", *_amp_columns(system.n), "converged", "method", "iterations", "residual"]
    return cols, rows, warnings


def _branch_rows(branch, n, extra=None):
    rows = []
    for p in branch.points:
        row = [p.omega, p.T, *p.amplitude, not p.failed, p.method, p.iterations, p.residual,
               p.arc_param, p.param_sign, p.fold]
        if extra:
            row += [extra(p)]
        rows.append(row)
    cols = ["omega", "T", *_amp_columns(n), "converged", "method", "iterations", "residual",
            "arc_param", "tangent_T_sign", "fold"]
    return cols, rows


def cmd_continue(cfg):
    from .continuation import continue_branch

    _require_forcing(cfg, "harmonic", "continue")
    system = cfg.build_system()
    c, s = cfg.continuation, cfg.solver
    branch = continue_branch(system, cfg.build_forcing(c["omega_start"]), c["omega_start"],
                             c["omega_stop"], dp=c["dp"], m=s["m"], tol=s["tol"],
                             max_points=int(c["max_points"]), route=s["route"], method=s["method"])
    cols, rows = _branch_rows(branch, system.n)
    warnings = [] if branch.settings.get("stopped") == "range" else [
        f"branch ended before leaving the frequency interval ({len(branch)} points)"]
    return cols, rows, warnings


def cmd_backbone(cfg):
    from .continuation import backbone_continue

    system = cfg.build_system()
    b, s = cfg.backbone, cfg.solver
    branch = backbone_continue(system, int(b["phase_dof"]), float(b["seed_amplitude"]),
                               float(b["dp"]), s["m"], int(b["mode"]), int(b["max_points"]),
                               min(float(s["tol"]), 1e-9), b["amplitude_stop"])
    cols, rows = _branch_rows(branch, system.n, extra=lambda p: p.d)
    return cols + ["d"], rows, []


def _qp_point(args):
    data, base_dir, om1, om2 = args
    from .newton import solve_quasiperiodic_hybrid

    cfg = config_from_dict(data, base_dir)
    s, q = cfg.solver, cfg.qp_sweep
    try:
        sol, trace, method = solve_quasiperiodic_hybrid(
            cfg.build_system(), cfg.build_forcing(om1, om2), K=q["K"], tol=s["tol"],
            max_iter=s["max_iter"], method=s["method"], K_max=q["K_max"])
        return [om1, om2, float(np.max(sol.amplitude())), True, method, trace.iterations], None
    except (ConvergenceError, DiscretizationError, ResonanceError) as exc:
        return [om1, om2, float("nan"), False, s["method"], 0], f"{type(exc).__name__}: {exc}"


def cmd_qp_sweep(cfg):
    _require_forcing(cfg, "quasiperiodic", "qp-sweep")
    q = cfg.qp_sweep
    o1 = np.linspace(q["omega1"][0], q["omega1"][1], int(q["omega1"][2]))
    o2 = np.linspace(q["omega2"][0], q["omega2"][1], int(q["omega2"][2]))
    tasks = [(cfg.to_dict(), cfg.base_dir, float(a), float(b)) for a in o1 for b in o2]
    jobs = int(cfg.output["jobs"])
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_qp_point, tasks))  # map keeps the task order
    else:
        results = [_qp_point(t) for t in tasks]
    rows = [r for r, _ in results]
    warnings = [f"no solution at ({fmt(r[0])}, {fmt(r[1])}): {why}" for r, why in results if why]
    return ["omega1", "omega2", "max_amp", "converged", "method", "iterations"], rows, warnings


HANDLERS = {"solve": cmd_solve, "sweep": cmd_sweep, "continue": cmd_continue,
            "qp-sweep": cmd_qp_sweep, "backbone": cmd_backbone}


def run_command(cfg, command):
    """Run ``command`` and write its CSV and summary; returns the summary mapping."""
    start = time.perf_counter()
    cols, rows, warnings = HANDLERS[command](cfg)
    elapsed = time.perf_counter() - start
    out = cfg.output["path"]
    if not os.path.isabs(out):
        out = os.path.abspath(out)
    write_csv(out, _header(cfg, command), cols, rows)
    conv = cols.index("converged")
    summary = {
        "command": command,
        "settings": cfg.to_dict(),
        "points": [{"method": str(r[conv + 1]), "iterations": int(r[conv + 2]),
                    "converged": bool(r[conv])} for r in rows],
        "warnings": warnings,
        "timings": {"total_seconds": float(elapsed)},
        "csv": out,
    }
    write_summary(summary_path(out), summary)
    return summary


def build_parser():
    parser = argparse.ArgumentParser(prog="ssr", description="Steady-state response solver.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="YAML configuration file")
    parser.add_argument("--out", help="CSV output path (overrides output.path)")
    parser.add_argument("--method", choices=("picard", "newton", "hybrid"))
    parser.add_argument("--nt", type=int, help="collocation nodes per period")
    parser.add_argument("--tol", type=float)
    parser.add_argument("--max-iter", type=int, dest="max_iter")
    parser.add_argument("--jobs", type=int, help="worker processes for qp-sweep")
    parser.add_argument("--echo", action="store_true", help="print the validated configuration")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
        data = cfg.to_dict()
        for key, section, name in (("method", "solver", "method"), ("nt", "solver", "m"),
                                   ("tol", "solver", "tol"), ("max_iter", "solver", "max_iter"),
                                   ("jobs", "output", "jobs"), ("out", "output", "path")):
            value = getattr(args, key)
            if value is not None:
                data[section][name] = value
        cfg = config_from_dict(data, cfg.base_dir)
        if args.echo:
            sys.stdout.write(cfg.echo())
        summary = run_command(cfg, args.command)
    except ConfigError as exc:
        print(f"ssr: {exc}", file=sys.stderr)
        for problem in exc.problems:
            print(f"  - {problem}", file=sys.stderr)
        return 2
    except (SSRError, np.linalg.LinAlgError) as exc:
        print(f"ssr: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    for w in summary["warnings"]:
        print(f"ssr: warning: {w}", file=sys.stderr)
    print(f"wrote {summary['csv']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""``mvd`` command line interface.

Exit codes:
    0  success
    2  configuration or usage error
    3  grid rejected (dt/h^2 > 1/2 without allow_unstable, or dt > h)
    4  solver produced a non-finite value
    5  a refinement level failed during ``converge``
    6  ``verify-builtin``: ex1/ex2 residual above threshold
    7  compatibility check failed with ``checks.compatibility = "error"``
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, load_config
from .discretization import RULES, build_weights
from .errors import FootOutOfCell, NonFiniteResult, StabilityViolation, UnsupportedRule
from .models import PROBLEM_NAMES, builtin, compatibility_check, probe_grid, residual_oracle
from .scheme import run
from .verify import LevelFailure, convergence_ladder, max_node_error, self_convergence

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STABILITY = 3
EXIT_NONFINITE = 4
EXIT_LEVEL = 5
EXIT_VERIFY = 6
EXIT_COMPAT = 7

RESIDUAL_THRESHOLD = 1e-6
RESIDUAL_FD_STEP = 1e-4


def fmt(value) -> str:
    """Shortest decimal string that round-trips to the same binary64."""
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return repr(float(value))


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def _err(msg: str) -> None:
    print(f"mvd: {msg}", file=sys.stderr)


# -- solve ------------------------------------------------------------------


def cmd_solve(config_path, output_dir=None) -> int:
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    try:
        grid = cfg.build_grid()
    except (StabilityViolation, FootOutOfCell) as exc:
        _err(f"grid rejected: {exc}")
        return EXIT_STABILITY
    try:
        rule = build_weights(grid.M, cfg.rule, cfg.include_left_endpoint)
    except UnsupportedRule as exc:
        _err(str(exc))
        return EXIT_CONFIG
    coeffs = cfg.problem.coeffs
    meta_warnings = {}
    if rule.rule_name != cfg.rule:
        meta_warnings["quadrature"] = f"{cfg.rule} needs an even panel count; used {rule.rule_name}"
    if not grid.ratio_ok:
        meta_warnings["stability"] = f"dt/h^2 = {grid.diffusion_ratio!r} > 0.5 (allow_unstable)"

    compat = None
    if cfg.compatibility != "off":
        compat = compatibility_check(coeffs, rule, grid)
        if compat > cfg.compatibility_tol:
            msg = f"compatibility residual {compat!r} exceeds {cfg.compatibility_tol!r}"
            if cfg.compatibility == "error":
                _err(msg)
                return EXIT_COMPAT
            meta_warnings["compatibility"] = msg

    snapshots = cfg.snapshots if cfg.snapshots is not None else [grid.T]
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            traj = run(coeffs, grid, rule, snapshot_times=snapshots)
    except NonFiniteResult as exc:
        _err(f"solver failed: {exc}")
        return EXIT_NONFINITE
    except ValueError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    meta_warnings.update(traj.warnings)

    out = Path(output_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    snap_meta = []
    x = grid.nodes
    for t in snapshots:
        level = traj.requested[t]
        name = f"solution_t{t:.6f}.csv"
        write_csv(out / name, ("x", "u"), zip(x, traj.snapshots[level]))
        entry = {"requested_t": t, "level": level, "t": level * grid.dt, "file": name}
        if cfg.problem.exact is not None:
            entry["max_node_error"] = max_node_error(
                traj.snapshots[level], cfg.problem.exact, grid, level * grid.dt
            )
        snap_meta.append(entry)
    write_csv(out / "series.csv", ("t", "S", "u_boundary"), zip(traj.t, traj.S, traj.u_boundary))

    meta = {
        "version": __version__,
        "problem": {
            "name": cfg.problem.name,
            "a_dagger": cfg.problem.a_dagger,
            "epsilon": coeffs.epsilon,
            "sources": cfg.problem.sources,
            "notes": cfg.problem.notes,
        },
        "grid": grid.as_dict(),
        "h": grid.h,
        "dt": grid.dt,
        "dt_over_h2": grid.diffusion_ratio,
        "quadrature": {
            "rule": rule.rule_name,
            "requested": cfg.rule,
            "include_left_endpoint": rule.include_left_endpoint,
        },
        "compatibility_residual": compat,
        "snapshots": snap_meta,
        "final": {"S": traj.final.S, "u_boundary": float(traj.final.U[0])},
        "warnings": meta_warnings,
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    for key, msg in meta_warnings.items():
        _err(f"warning [{key}]: {msg}")
    print(f"wrote {len(snap_meta)} snapshot(s), series.csv and meta.json to {out}")
    return EXIT_OK


# -- converge ---------------------------------------------------------------


def cmd_converge(config_path, levels: int, self_mode: bool = False, output_dir=None, reference="successive") -> int:
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    prob = cfg.problem
    if levels < 2 or (self_mode and levels < 3):
        _err(f"--levels must be at least {3 if self_mode else 2}")
        return EXIT_CONFIG
    if not self_mode and prob.exact is None:
        why = (
            "its printed closed form does not satisfy the equation (unresolved exact solution)"
            if prob.claimed_exact is not None
            else "it has no exact solution"
        )
        _err(f"problem {prob.name!r} cannot use an exact-solution ladder: {why}; use --self")
        return EXIT_CONFIG
    try:
        base = cfg.build_grid()
    except (StabilityViolation, FootOutOfCell) as exc:
        _err(f"grid rejected: {exc}")
        return EXIT_STABILITY
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            if self_mode:
                report = self_convergence(
                    prob, base, levels, cfg.rule, cfg.include_left_endpoint, reference=reference
                )
            else:
                report = convergence_ladder(prob, base, levels, cfg.rule, cfg.include_left_endpoint)
    except LevelFailure as exc:
        _err(str(exc))
        return EXIT_LEVEL
    out = Path(output_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "convergence.csv", ("level", "M", "N", "h", "dt", "max_error", "order"), report.rows())
    print("order")
    for row in report.rows():
        print(fmt(row[-1]) or "-")
    return EXIT_OK


# -- verify-builtin ---------------------------------------------------------


def cmd_verify_builtin() -> int:
    status = EXIT_OK
    header = f"{'problem':8} {'residual':>12} {'compat':>12}  note"
    print(header)
    print("-" * len(header))
    for name in PROBLEM_NAMES:
        prob = builtin(name)
        grid = prob.default_grid
        rule = build_weights(grid.M)
        compat = compatibility_check(prob.coeffs, rule, grid)
        candidate = prob.exact or prob.claimed_exact
        notes = []
        if candidate is None:
            res_text = "n/a"
            notes.append("no closed-form solution")
        else:
            res = residual_oracle(
                prob.coeffs, candidate, probe_grid(grid.T, prob.a_dagger), RESIDUAL_FD_STEP, prob.a_dagger
            )
            res_text = f"{res:.3e}"
            if prob.exact is not None and res > RESIDUAL_THRESHOLD:
                notes.append("FAIL: residual above threshold")
                status = EXIT_VERIFY
            elif prob.exact is None:
                notes.append("residual nonzero - see notes (printed solution not exact)")
        if compat > 1e-6:
            notes.append("warning: compatibility residual > 1e-6")
        print(f"{name:8} {res_text:>12} {compat:12.3e}  {'; '.join(notes)}")
    return status


# -- weights ----------------------------------------------------------------


def cmd_weights(M: int, rule: str) -> int:
    try:
        q = build_weights(M, rule)
    except UnsupportedRule as exc:
        _err(str(exc))
        return EXIT_CONFIG
    except ValueError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    if q.rule_name != rule:
        _err(f"note: {rule} needs an even panel count; using {q.rule_name}")
    print(" ".join(np.format_float_positional(w, trim="-") for w in q.weights))
    return EXIT_OK


# -- entry point ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mvd", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="run one simulation from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--output-dir")

    c = sub.add_parser("converge", help="refinement study (h/2, dt/4 per level)")
    c.add_argument("--config", required=True)
    c.add_argument("--levels", type=int, default=3)
    c.add_argument("--self", dest="self_mode", action="store_true", help="self-convergence, no exact solution")
    c.add_argument("--reference", choices=("successive", "finest"), default="successive")
    c.add_argument("--output-dir")

    sub.add_parser("verify-builtin", help="residual and compatibility checks for ex1-ex4")

    w = sub.add_parser("weights", help="print Newton-Cotes weights")
    w.add_argument("--m", type=int, required=True)
    w.add_argument("--rule", default="simpson", help=f"one of {', '.join(RULES)}")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "solve":
        return cmd_solve(args.config, args.output_dir)
    if args.command == "converge":
        return cmd_converge(args.config, args.levels, args.self_mode, args.output_dir, args.reference)
    if args.command == "verify-builtin":
        return cmd_verify_builtin()
    return cmd_weights(args.m, args.rule)


if __name__ == "__main__":
    sys.exit(main())

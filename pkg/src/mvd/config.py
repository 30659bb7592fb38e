"""JSON run configuration.

Example::

    {
      "builtin": "ex1",
      "grid": {"M": 400, "T": 0.05, "N": 16000},
      "quadrature": {"rule": "simpson", "include_left_endpoint": true},
      "snapshots": [0.05],
      "output_dir": "out/ex1",
      "allow_unstable": false,
      "checks": {"compatibility": "warn", "compatibility_tol": 1e-6}
    }

Instead of ``builtin`` an ``inline`` problem may be given::

    "inline": {
      "a_dagger": 1, "epsilon": 1,
      "d_expr": "3*(1 + 1/(1 - x))", "B_expr": "4/(1 + exp(-2))*exp(-x)",
      "psi_expr": "1", "g_expr": "s", "u0_expr": "exp(-x)*(1 - x)",
      "exact_expr": "exp(-t)*exp(-x)*(1 - x)"
    }

``u0_expr`` may be the string ``"mollified-ex4"``; ``exact_expr`` is
optional. Any numeric field may also be a string holding a constant
expression such as ``"exp(-1)"``; it is evaluated once at load time.
A builtin's competition weight can be replaced with a top-level
``psi_expr``. ``grid`` is optional for builtins (their default grid is used).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .discretization import RULES, GridSpec, build_grid
from .errors import MVDError, ParseError
from .expr import compile_function, evaluate, parse
from .models import PROBLEM_NAMES, BuiltinProblem, builtin, make_coefficients, mollified_initial

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config"]

_TOP_KEYS = {
    "builtin",
    "inline",
    "psi_expr",
    "grid",
    "quadrature",
    "snapshots",
    "output_dir",
    "allow_unstable",
    "checks",
}
_INLINE_KEYS = {"a_dagger", "epsilon", "d_expr", "B_expr", "psi_expr", "g_expr", "u0_expr", "exact_expr"}
_INLINE_REQUIRED = _INLINE_KEYS - {"exact_expr"}
_CHECK_MODES = ("warn", "error", "off")


class ConfigError(MVDError, ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"config key {key!r}: {message}")
        self.key = key


@dataclass
class RunConfig:
    problem: BuiltinProblem
    grid_request: Optional[dict]
    rule: str = "simpson"
    include_left_endpoint: bool = True
    snapshots: Optional[list] = None
    output_dir: str = "out"
    allow_unstable: bool = False
    compatibility: str = "warn"
    compatibility_tol: float = 1e-6
    raw: dict = field(default_factory=dict)

    def build_grid(self) -> GridSpec:
        """Resolve the grid; may raise StabilityViolation / FootOutOfCell."""
        a = self.problem.a_dagger
        if self.grid_request is None:
            g = self.problem.default_grid
            return build_grid(a, g.M, g.T, g.N, allow_unstable=self.allow_unstable)
        req = self.grid_request
        return build_grid(a, req["M"], req["T"], req["N"], allow_unstable=self.allow_unstable)


def _number(value, key: str) -> float:
    if isinstance(value, bool):
        raise ConfigError(key, "expected a number, got a boolean")
    if isinstance(value, (int, float)):
        out = float(value)
    elif isinstance(value, str):
        try:
            out = evaluate(parse(value, ()), {})
        except ParseError as exc:
            raise ConfigError(key, f"bad constant expression {value!r}: {exc}") from None
    else:
        raise ConfigError(key, f"expected a number or constant expression, got {type(value).__name__}")
    if not math.isfinite(out):
        raise ConfigError(key, f"value {value!r} is not finite")
    return out


def _integer(value, key: str) -> int:
    out = _number(value, key)
    if out != int(out):
        raise ConfigError(key, f"expected an integer, got {value!r}")
    return int(out)


def _expr(value, key: str, argnames):
    if not isinstance(value, str):
        raise ConfigError(key, "expected an expression string")
    try:
        return compile_function(value, argnames)
    except ParseError as exc:
        raise ConfigError(key, str(exc)) from None


def _check_keys(section: dict, allowed: set, prefix: str = "") -> None:
    for key in section:
        if key not in allowed:
            raise ConfigError(prefix + key, "unknown key")


def _problem(raw: dict) -> BuiltinProblem:
    has_builtin, has_inline = "builtin" in raw, "inline" in raw
    if has_builtin == has_inline:
        raise ConfigError("builtin", "exactly one of 'builtin' or 'inline' must be given")
    if has_builtin:
        name = raw["builtin"]
        if name not in PROBLEM_NAMES:
            raise ConfigError("builtin", f"unknown problem {name!r}; choose from {', '.join(PROBLEM_NAMES)}")
        prob = builtin(name)
        if "psi_expr" in raw:
            _expr(raw["psi_expr"], "psi_expr", ("x",))
            prob = prob.with_psi(raw["psi_expr"])
        return prob

    if "psi_expr" in raw:
        raise ConfigError("psi_expr", "top-level psi_expr only applies to builtin problems")
    spec = raw["inline"]
    if not isinstance(spec, dict):
        raise ConfigError("inline", "expected an object")
    _check_keys(spec, _INLINE_KEYS, "inline.")
    missing = sorted(_INLINE_REQUIRED - set(spec))
    if missing:
        raise ConfigError("inline." + missing[0], "missing")
    a = _number(spec["a_dagger"], "inline.a_dagger")
    if a <= 0:
        raise ConfigError("inline.a_dagger", "must be positive")
    eps = _number(spec["epsilon"], "inline.epsilon")
    if eps < 0:
        raise ConfigError("inline.epsilon", "must be nonnegative")
    if spec["u0_expr"] == "mollified-ex4":
        u0 = mollified_initial(a, 0.1)
    else:
        u0 = _expr(spec["u0_expr"], "inline.u0_expr", ("x",))
    coeffs = make_coefficients(
        _expr(spec["d_expr"], "inline.d_expr", ("x", "S")),
        _expr(spec["B_expr"], "inline.B_expr", ("x",)),
        _expr(spec["psi_expr"], "inline.psi_expr", ("x",)),
        _expr(spec["g_expr"], "inline.g_expr", ("s",)),
        u0,
        eps,
    )
    exact = None
    if "exact_expr" in spec:
        exact = _expr(spec["exact_expr"], "inline.exact_expr", ("t", "x"))
    sources = {k[: -len("_expr")]: spec[k] for k in sorted(spec) if k.endswith("_expr") and k != "exact_expr"}
    return BuiltinProblem(
        name="inline",
        a_dagger=a,
        coeffs=coeffs,
        exact=exact,
        default_grid=None,
        notes="user-defined problem",
        sources=sources,
    )


def _grid_request(raw: dict, inline: bool) -> Optional[dict]:
    if "grid" not in raw:
        if inline:
            raise ConfigError("grid", "required for inline problems")
        return None
    g = raw["grid"]
    if not isinstance(g, dict):
        raise ConfigError("grid", "expected an object")
    _check_keys(g, {"M", "T", "N", "dt"}, "grid.")
    for key in ("M", "T"):
        if key not in g:
            raise ConfigError("grid." + key, "missing")
    if ("N" in g) == ("dt" in g):
        raise ConfigError("grid.N", "exactly one of 'N' or 'dt' must be given")
    M = _integer(g["M"], "grid.M")
    T = _number(g["T"], "grid.T")
    if T <= 0:
        raise ConfigError("grid.T", "must be positive")
    if "N" in g:
        N = _integer(g["N"], "grid.N")
    else:
        dt = _number(g["dt"], "grid.dt")
        if dt <= 0:
            raise ConfigError("grid.dt", "must be positive")
        N = round(T / dt)
        if N < 1 or abs(N * dt - T) > 1e-9 * T:
            raise ConfigError("grid.dt", f"T={T!r} is not an integer multiple of dt={dt!r}")
    if M < 3:
        raise ConfigError("grid.M", "must be at least 3")
    if N < 1:
        raise ConfigError("grid.N", "must be at least 1")
    return {"M": M, "T": T, "N": N}


def parse_config(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "expected a JSON object")
    _check_keys(raw, _TOP_KEYS)
    problem = _problem(raw)
    cfg = RunConfig(problem=problem, grid_request=_grid_request(raw, problem.name == "inline"), raw=raw)

    quad = raw.get("quadrature", {})
    if not isinstance(quad, dict):
        raise ConfigError("quadrature", "expected an object")
    _check_keys(quad, {"rule", "include_left_endpoint"}, "quadrature.")
    cfg.rule = quad.get("rule", "simpson")
    if cfg.rule not in RULES:
        raise ConfigError("quadrature.rule", f"unsupported rule {cfg.rule!r}; choose from {', '.join(RULES)}")
    cfg.include_left_endpoint = quad.get("include_left_endpoint", True)
    if not isinstance(cfg.include_left_endpoint, bool):
        raise ConfigError("quadrature.include_left_endpoint", "expected true or false")

    if "snapshots" in raw:
        snaps = raw["snapshots"]
        if not isinstance(snaps, list):
            raise ConfigError("snapshots", "expected a list of times")
        cfg.snapshots = [_number(v, f"snapshots[{i}]") for i, v in enumerate(snaps)]

    out = raw.get("output_dir", "out")
    if not isinstance(out, str) or not out:
        raise ConfigError("output_dir", "expected a nonempty path string")
    cfg.output_dir = out

    cfg.allow_unstable = raw.get("allow_unstable", False)
    if not isinstance(cfg.allow_unstable, bool):
        raise ConfigError("allow_unstable", "expected true or false")

    checks = raw.get("checks", {})
    if not isinstance(checks, dict):
        raise ConfigError("checks", "expected an object")
    _check_keys(checks, {"compatibility", "compatibility_tol"}, "checks.")
    cfg.compatibility = checks.get("compatibility", "warn")
    if cfg.compatibility not in _CHECK_MODES:
        raise ConfigError("checks.compatibility", f"expected one of {', '.join(_CHECK_MODES)}")
    if "compatibility_tol" in checks:
        cfg.compatibility_tol = _number(checks["compatibility_tol"], "checks.compatibility_tol")
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return parse_config(raw)

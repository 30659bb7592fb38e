"""Error measurement, refinement ladders and steady-state diagnostics."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .discretization import GridSpec, build_weights
from .errors import MissingSnapshot, MVDError
from .scheme import Trajectory, run

__all__ = [
    "LevelResult",
    "ConvergenceReport",
    "LevelFailure",
    "max_node_error",
    "observed_orders",
    "ladder_grids",
    "convergence_ladder",
    "self_convergence",
    "steady_state_gap",
    "fit_error_constant",
    "default_workers",
]

REFINE_POLICY = "h -> h/2, dt -> dt/4"


@dataclass(frozen=True)
class LevelResult:
    M: int
    N: int
    h: float
    dt: float
    max_error: float


@dataclass
class ConvergenceReport:
    levels: List[LevelResult]
    orders: List[float]
    refine_policy: str = REFINE_POLICY
    kind: str = "exact"

    def rows(self):
        """(level, M, N, h, dt, max_error, order) tuples; order is None on the first row."""
        out = []
        for k, lv in enumerate(self.levels):
            order = self.orders[k - 1] if k > 0 else None
            out.append((k, lv.M, lv.N, lv.h, lv.dt, lv.max_error, order))
        return out


class LevelFailure(MVDError):
    def __init__(self, level: int, cause: Exception):
        super().__init__(f"refinement level {level} failed: {cause}")
        self.level = level
        self.cause = cause


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("MVD_THREADS", "1")))
    except ValueError:
        return 1


def max_node_error(U, exact: Callable, grid: GridSpec, t: float) -> float:
    U = np.asarray(U, dtype=float)
    ref = np.broadcast_to(np.asarray(exact(t, grid.nodes), dtype=float), U.shape)
    return float(np.max(np.abs(U - ref)))


def observed_orders(errors) -> List[float]:
    """log2 of successive error ratios (assumes h halves between entries)."""
    out = []
    for a, b in zip(errors[:-1], errors[1:]):
        if a == 0.0 and b == 0.0:
            out.append(math.nan)
        elif b == 0.0:
            out.append(math.inf)
        else:
            out.append(math.log2(a / b))
    return out


def ladder_grids(base: GridSpec, num_levels: int) -> List[GridSpec]:
    grids = [base]
    for _ in range(num_levels - 1):
        grids.append(grids[-1].refined(2))
    return grids


def _map_levels(fn, grids, workers):
    def guarded(k):
        try:
            return fn(grids[k])
        except MVDError as exc:
            raise LevelFailure(k, exc) from exc

    workers = workers or default_workers()
    if workers <= 1 or len(grids) == 1:
        return [guarded(k) for k in range(len(grids))]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(guarded, range(len(grids))))


def convergence_ladder(
    problem,
    base: GridSpec,
    num_levels: int,
    rule_name: str = "simpson",
    include_left_endpoint: bool = True,
    norm: str = "final",
    workers: Optional[int] = None,
) -> ConvergenceReport:
    """Errors against the exact solution on nested grids h, h/2, h/4, ...

    ``norm="final"`` measures max_j |U_j^N - u(T, x_j)|; ``norm="all"``
    takes the max over every time level as well.
    """
    if problem.exact is None:
        raise ValueError(f"problem {problem.name!r} has no exact solution; use self_convergence")
    if norm not in ("final", "all"):
        raise ValueError(f"norm must be 'final' or 'all', got {norm!r}")
    exact = problem.exact
    grids = ladder_grids(base, num_levels)

    def solve(grid):
        rule = build_weights(grid.M, rule_name, include_left_endpoint)
        worst = [0.0]
        callback = None
        if norm == "all":
            def callback(state):
                e = max_node_error(state.U, exact, grid, state.n * grid.dt)
                worst[0] = max(worst[0], e)
        traj = run(problem.coeffs, grid, rule, callback=callback)
        if norm == "all":
            return worst[0]
        return max_node_error(traj.final.U, exact, grid, grid.T)

    errors = _map_levels(solve, grids, workers)
    levels = [LevelResult(g.M, g.N, g.h, g.dt, e) for g, e in zip(grids, errors)]
    return ConvergenceReport(levels, observed_orders(errors), kind="exact")


def self_convergence(
    problem,
    base: GridSpec,
    num_levels: int,
    rule_name: str = "simpson",
    include_left_endpoint: bool = True,
    reference: str = "successive",
    workers: Optional[int] = None,
) -> ConvergenceReport:
    """Refinement study without an exact solution.

    Fine profiles are restricted to coarse nodes by injection (grids are
    nested, so no interpolation is involved). With ``reference="successive"``
    level k is compared with level k+1, which makes the ratio of consecutive
    differences tend to 2**p for a method of order p. With
    ``reference="finest"`` every coarser level is compared with the finest
    one; those errors are biased low on the last level, which inflates the
    apparent order (a first-order method reads log2(3) on three levels).
    """
    if num_levels < 3:
        raise ValueError("self-convergence needs at least 3 levels")
    if reference not in ("successive", "finest"):
        raise ValueError(f"reference must be 'successive' or 'finest', got {reference!r}")
    grids = ladder_grids(base, num_levels)

    def solve(grid):
        rule = build_weights(grid.M, rule_name, include_left_endpoint)
        return run(problem.coeffs, grid, rule).final.U

    profiles = _map_levels(solve, grids, workers)
    errors = []
    for k in range(num_levels - 1):
        ref_k = k + 1 if reference == "successive" else num_levels - 1
        stride = 2 ** (ref_k - k)
        assert len(profiles[ref_k][::stride]) == len(profiles[k])
        errors.append(float(np.max(np.abs(profiles[k] - profiles[ref_k][::stride]))))
    levels = [LevelResult(g.M, g.N, g.h, g.dt, e) for g, e in zip(grids[:-1], errors)]
    return ConvergenceReport(levels, observed_orders(errors), kind=f"self-{reference}")


def fit_error_constant(report: ConvergenceReport) -> float:
    """Least-squares C in max_error ~ C * (h + dt), fitted through the origin."""
    s = np.array([lv.h + lv.dt for lv in report.levels])
    e = np.array([lv.max_error for lv in report.levels])
    return float(np.dot(s, e) / np.dot(s, s))


def steady_state_gap(traj: Trajectory, t1: float, t2: float) -> float:
    """max_j |U_j(t1) - U_j(t2)| relative to max_j |U_j(t1)|."""
    try:
        a = traj.at_time(t1)
        b = traj.at_time(t2)
    except ValueError as exc:
        raise MissingSnapshot(str(exc)) from exc
    scale = max(float(np.max(np.abs(a))), 1e-300)
    return float(np.max(np.abs(a - b))) / scale

"""Implicit characteristics / finite-difference stepper.

One step from level n-1 to n:

1. births ``U_0^n = g(h * sum q_j B_j U_j^{n-1})`` (explicit in the boundary);
2. ``U_M^n = 0``;
3. for interior nodes the previous profile is linearly interpolated at the
   characteristic foot ``x_j - dt``, mortality is applied explicitly with
   ``S^{n-1}``, and diffusion is treated implicitly, giving the tridiagonal
   system ``-r U_{j-1} + (1 + 2r) U_j - r U_{j+1} = rhs_j`` with
   ``r = eps * dt / h**2``;
4. ``S^n`` is recomputed from the completed profile.

No nonlinear solve is needed because every nonlinearity is lagged.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np

from .discretization import GridSpec, QuadratureRule, integrate, weighted_population
from .errors import (
    DominanceViolation,
    LengthMismatch,
    MissingSnapshot,
    NonFiniteResult,
    NonFiniteState,
)

__all__ = [
    "CoefficientSet",
    "SolverState",
    "Trajectory",
    "TridiagonalFactor",
    "Stepper",
    "characteristic_foot_interpolate",
    "boundary_birth",
    "thomas_solve",
    "initial_state",
    "step",
    "run",
    "snapshot_level",
]


@dataclass(frozen=True)
class CoefficientSet:
    """Problem data.

    d(x, S) mortality, B(x) fertility, psi(x) competition weight, g(s) birth
    nonlinearity, u0(x) initial density, epsilon >= 0 diffusion in age.
    The callables must accept numpy arrays for x.
    """

    d: Callable
    B: Callable
    psi: Callable
    g: Callable
    u0: Callable
    epsilon: float

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")

    @property
    def d_uses_population(self) -> bool:
        uses = getattr(self.d, "uses", None)
        return True if uses is None else bool(uses("S"))


@dataclass(frozen=True, eq=False)
class SolverState:
    n: int
    U: np.ndarray
    S: float


@dataclass
class Trajectory:
    """Output of :func:`run`.

    ``snapshots`` maps time level to a copy of the profile; ``requested``
    maps each requested time to the level that was stored for it. ``t``,
    ``S`` and ``u_boundary`` hold the (t, S, U_0) series for every level.
    """

    grid: GridSpec
    snapshots: dict = field(default_factory=dict)
    requested: dict = field(default_factory=dict)
    t: np.ndarray = None
    S: np.ndarray = None
    u_boundary: np.ndarray = None
    final: Optional[SolverState] = None
    warnings: dict = field(default_factory=dict)

    @property
    def series(self):
        return list(zip(self.t.tolist(), self.S.tolist(), self.u_boundary.tolist()))

    def at_time(self, t: float) -> np.ndarray:
        level = self.requested.get(t)
        if level is None:
            level = snapshot_level(t, self.grid)
        if level not in self.snapshots:
            raise MissingSnapshot(f"no snapshot recorded for t={t}")
        return self.snapshots[level]


# -- building blocks --------------------------------------------------------


def characteristic_foot_interpolate(U_prev, grid: GridSpec) -> np.ndarray:
    """Values at x_j - dt, j = 1..M, by linear interpolation in cell j."""
    U_prev = np.asarray(U_prev, dtype=float)
    if len(U_prev) != grid.M + 1:
        raise LengthMismatch(f"expected {grid.M + 1} values, got {len(U_prev)}")
    lam = grid.dt / grid.h
    return lam * U_prev[:-1] + (1.0 - lam) * U_prev[1:]


def boundary_birth(U_prev, rule: QuadratureRule, B_samples, g, h: float) -> float:
    U_prev = np.asarray(U_prev, dtype=float)
    B_samples = np.asarray(B_samples, dtype=float)
    if len(U_prev) != len(B_samples):
        raise LengthMismatch(f"{len(B_samples)} fertility samples for {len(U_prev)} nodes")
    s = integrate(rule, B_samples * U_prev, h)
    births = float(g(s))
    if not math.isfinite(births):
        raise NonFiniteResult(f"g({s!r}) = {births!r}")
    return births


class TridiagonalFactor:
    """Thomas-algorithm factorisation of a tridiagonal matrix.

    ``sub[i]`` is A[i+1, i] and ``sup[i]`` is A[i, i+1]; both have length
    n-1. Factor once, then :meth:`solve` any number of right-hand sides.
    Strict diagonal dominance is required so that no pivoting is needed.
    """

    def __init__(self, sub, diag, sup):
        sub = [float(v) for v in sub]
        diag = [float(v) for v in diag]
        sup = [float(v) for v in sup]
        n = len(diag)
        if n == 0 or len(sub) != n - 1 or len(sup) != n - 1:
            raise LengthMismatch(
                f"diagonal lengths {len(sub)}/{n}/{len(sup)} do not form a tridiagonal system"
            )
        for i in range(n):
            off = (abs(sub[i - 1]) if i > 0 else 0.0) + (abs(sup[i]) if i < n - 1 else 0.0)
            if not abs(diag[i]) > off:
                raise DominanceViolation(
                    f"row {i}: |diag|={abs(diag[i])!r} <= off-diagonal sum {off!r}"
                )
        self.n = n
        self.sub, self.diag, self.sup = sub, diag, sup
        # forward elimination coefficients
        self._den = den = [0.0] * n
        self._cp = cp = [0.0] * max(n - 1, 0)
        den[0] = diag[0]
        for i in range(1, n):
            cp[i - 1] = sup[i - 1] / den[i - 1]
            den[i] = diag[i] - sub[i - 1] * cp[i - 1]

    def solve(self, rhs) -> np.ndarray:
        d = rhs.tolist() if isinstance(rhs, np.ndarray) else [float(v) for v in rhs]
        n = self.n
        if len(d) != n:
            raise LengthMismatch(f"rhs has length {len(d)}, system has {n} rows")
        sub, den, cp = self.sub, self._den, self._cp
        y = [0.0] * n
        prev = y[0] = d[0] / den[0]
        for i in range(1, n):
            prev = y[i] = (d[i] - sub[i - 1] * prev) / den[i]
        for i in range(n - 2, -1, -1):
            prev = y[i] = y[i] - cp[i] * prev
        return np.array(y)

    def matvec(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.multiply(self.diag, x)
        out[1:] += np.multiply(self.sub, x[:-1])
        out[:-1] += np.multiply(self.sup, x[1:])
        return out

    def residual(self, x, rhs) -> float:
        return float(np.max(np.abs(self.matvec(x) - np.asarray(rhs, dtype=float))))


def thomas_solve(sub, diag, sup, rhs) -> np.ndarray:
    """Solve a strictly diagonally dominant tridiagonal system."""
    return TridiagonalFactor(sub, diag, sup).solve(rhs)


# -- time stepping ----------------------------------------------------------


def _first_bad(values) -> int:
    return int(np.flatnonzero(~np.isfinite(values))[0])


class Stepper:
    """Caches everything a step needs that does not change between steps."""

    def __init__(
        self,
        coeffs: CoefficientSet,
        grid: GridSpec,
        rule: QuadratureRule,
        check_residual: bool = False,
    ):
        if rule.M != grid.M:
            raise LengthMismatch(f"rule built for M={rule.M}, grid has M={grid.M}")
        self.coeffs, self.grid, self.rule = coeffs, grid, rule
        self.check_residual = check_residual
        M = grid.M
        self.x = grid.nodes
        self.x_int = self.x[1:M]
        self.B = self._sample("B", coeffs.B, self.x)
        self.psi = self._sample("psi", coeffs.psi, self.x)
        self.r = coeffs.epsilon * grid.dt / grid.h**2
        n = M - 1
        self.factor = TridiagonalFactor([-self.r] * (n - 1), [1.0 + 2.0 * self.r] * n, [-self.r] * (n - 1))
        self._d_fixed = None
        if not coeffs.d_uses_population:
            self._d_fixed = self._sample("d", lambda x: coeffs.d(x, 0.0), self.x_int, offset=1)

    @staticmethod
    def _sample(name, f, x, offset=0):
        vals = np.broadcast_to(np.asarray(f(x), dtype=float), x.shape).copy()
        if not np.all(np.isfinite(vals)):
            j = _first_bad(vals) + offset
            raise NonFiniteResult(f"{name} is not finite at node {j} (x={x[j - offset]!r})")
        return vals

    def population(self, U) -> float:
        return weighted_population(self.rule, self.psi, U, self.grid.h)

    def mortality(self, S: float, level: int) -> np.ndarray:
        if self._d_fixed is not None:
            return self._d_fixed
        vals = np.broadcast_to(
            np.asarray(self.coeffs.d(self.x_int, S), dtype=float), self.x_int.shape
        )
        if not np.all(np.isfinite(vals)):
            j = _first_bad(vals) + 1
            raise NonFiniteState(
                f"mortality d(x, S) not finite at node {j} with S={S!r} (level {level})",
                level=level,
                node=j,
            )
        return vals

    def advance(self, state: SolverState) -> SolverState:
        grid = self.grid
        M, dt, r = grid.M, grid.dt, self.r
        level = state.n + 1
        U_prev = state.U
        try:
            births = boundary_birth(U_prev, self.rule, self.B, self.coeffs.g, grid.h)
        except NonFiniteResult as exc:
            raise NonFiniteState(f"{exc} (level {level})", level=level, node=0) from exc
        foot = characteristic_foot_interpolate(U_prev, grid)
        # overflow surfaces below as NonFiniteState
        with np.errstate(over="ignore", invalid="ignore"):
            rhs = foot[: M - 1] - dt * self.mortality(state.S, level) * U_prev[1:M]
        rhs[0] += r * births
        # U_M^n = 0 adds nothing to the last row
        interior = self.factor.solve(rhs)
        if self.check_residual:
            res = self.factor.residual(interior, rhs)
            bound = 1e-12 * (1.0 + float(np.max(np.abs(rhs))))
            if res > bound:
                raise ArithmeticError(f"tridiagonal residual {res:g} > {bound:g} at level {level}")
        U = np.empty(M + 1)
        U[0] = births
        U[1:M] = interior
        U[M] = 0.0
        if not np.all(np.isfinite(U)):
            j = _first_bad(U)
            raise NonFiniteState(
                f"profile not finite at node {j} (level {level})", level=level, node=j
            )
        S = self.population(U)
        if not math.isfinite(S):
            raise NonFiniteState(f"weighted population not finite (level {level})", level=level)
        return SolverState(level, U, S)


def initial_state(coeffs: CoefficientSet, grid: GridSpec, rule: QuadratureRule, stepper=None):
    """Level-0 state; returns ``(state, warning_or_None)``."""
    stepper = stepper or Stepper(coeffs, grid, rule)
    U = Stepper._sample("u0", coeffs.u0, grid.nodes)
    note = None
    if U[-1] != 0.0:
        note = f"u0(a_dagger) = {U[-1]!r} != 0; U_M^0 forced to 0"
        warnings.warn(note, stacklevel=3)
        U[-1] = 0.0
    return SolverState(0, U, stepper.population(U)), note


def step(
    state: SolverState, coeffs: CoefficientSet, grid: GridSpec, rule: QuadratureRule
) -> SolverState:
    """Advance one level. :func:`run` reuses a :class:`Stepper` instead."""
    if state.n >= grid.N:
        raise ValueError(f"state is already at the final level N={grid.N}")
    return Stepper(coeffs, grid, rule).advance(state)


def snapshot_level(t: float, grid: GridSpec) -> int:
    """Nearest time level to t; exact ties go to the lower level."""
    tol = 1e-9 * max(1.0, grid.T)
    if t < -tol or t > grid.T + tol:
        raise ValueError(f"snapshot time {t} outside [0, {grid.T}]")
    q = t / grid.dt
    lvl = math.floor(q)
    if q - lvl > 0.5 + 1e-9:
        lvl += 1
    return min(max(lvl, 0), grid.N)


def run(
    coeffs: CoefficientSet,
    grid: GridSpec,
    rule: QuadratureRule,
    snapshot_times: Iterable[float] = (),
    callback: Optional[Callable[[SolverState], None]] = None,
    check_residual: bool = False,
) -> Trajectory:
    """Integrate from t=0 to t=T.

    ``callback`` (if given) sees every state, level 0 included.
    """
    stepper = Stepper(coeffs, grid, rule, check_residual=check_residual)
    state, note = initial_state(coeffs, grid, rule, stepper)
    traj = Trajectory(grid)
    if note:
        traj.warnings["initial_boundary"] = note
    for t in snapshot_times:
        traj.requested[t] = snapshot_level(t, grid)
    wanted = set(traj.requested.values())

    N = grid.N
    S_series = np.empty(N + 1)
    u0_series = np.empty(N + 1)

    def record(st):
        S_series[st.n] = st.S
        u0_series[st.n] = st.U[0]
        if st.n in wanted:
            traj.snapshots[st.n] = st.U.copy()
        if callback is not None:
            callback(st)

    record(state)
    for _ in range(N):
        state = stepper.advance(state)
        record(state)
    traj.t = grid.times
    traj.S = S_series
    traj.u_boundary = u0_series
    traj.final = state
    return traj

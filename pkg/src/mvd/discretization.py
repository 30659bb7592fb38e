"""Uniform age/time grids and Newton-Cotes weights for the nonlocal integrals."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    FootOutOfCell,
    IndexOutOfRange,
    LengthMismatch,
    StabilityViolation,
    UnsupportedRule,
)

__all__ = [
    "GridSpec",
    "QuadratureRule",
    "RULES",
    "build_grid",
    "node",
    "build_weights",
    "integrate",
    "weighted_population",
]

# Relative slack on the two grid inequalities, so that printed grids sitting
# exactly on the bound (dt/h**2 == 1/2, dt == h) survive binary rounding.
_BOUND_RTOL = 1e-12

MAX_DIFFUSION_RATIO = 0.5

RULES = ("trapezoid", "simpson", "simpson38-hybrid")


@dataclass(frozen=True)
class GridSpec:
    """Uniform space-time grid on [0, a_dagger] x [0, T].

    ``h`` and ``dt`` are derived from the integer counts so they can never
    disagree with them.
    """

    a_dagger: float
    M: int
    T: float
    N: int
    allow_unstable: bool = False

    @property
    def h(self) -> float:
        return self.a_dagger / self.M

    @property
    def dt(self) -> float:
        return self.T / self.N

    @property
    def diffusion_ratio(self) -> float:
        """dt / h**2."""
        return self.dt / self.h**2

    @property
    def ratio_ok(self) -> bool:
        return self.diffusion_ratio <= MAX_DIFFUSION_RATIO * (1.0 + _BOUND_RTOL)

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.M + 1) * self.h

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.N + 1) * self.dt

    def refined(self, factor: int = 2) -> "GridSpec":
        """Grid with h/factor and dt/factor**2 (keeps dt/h**2 fixed)."""
        return build_grid(
            self.a_dagger,
            self.M * factor,
            self.T,
            self.N * factor**2,
            allow_unstable=self.allow_unstable,
        )

    def as_dict(self) -> dict:
        return {
            "a_dagger": self.a_dagger,
            "M": self.M,
            "T": self.T,
            "N": self.N,
            "h": self.h,
            "dt": self.dt,
            "dt_over_h2": self.diffusion_ratio,
            "ratio_ok": self.ratio_ok,
            "allow_unstable": self.allow_unstable,
        }


def build_grid(
    a_dagger: float, M: int, T: float, N: int, allow_unstable: bool = False
) -> GridSpec:
    """Validate and build a :class:`GridSpec`.

    Raises
    ------
    StabilityViolation
        dt/h**2 > 1/2 and ``allow_unstable`` is false.
    FootOutOfCell
        dt > h. Never overridable: the foot interpolation uses one cell.
    """
    if not (a_dagger > 0 and np.isfinite(a_dagger)):
        raise ValueError(f"a_dagger must be positive and finite, got {a_dagger}")
    if int(M) != M or M < 3:
        raise ValueError(f"M must be an integer >= 3, got {M}")
    if not (T > 0 and np.isfinite(T)):
        raise ValueError(f"T must be positive and finite, got {T}")
    if int(N) != N or N < 1:
        raise ValueError(f"N must be an integer >= 1, got {N}")
    grid = GridSpec(float(a_dagger), int(M), float(T), int(N), bool(allow_unstable))
    if grid.dt > grid.h * (1.0 + _BOUND_RTOL):
        raise FootOutOfCell(
            f"dt={grid.dt:g} exceeds h={grid.h:g}; the characteristic foot "
            "would leave its cell"
        )
    if not grid.ratio_ok and not allow_unstable:
        raise StabilityViolation(
            f"dt/h^2 = {grid.diffusion_ratio:g} > {MAX_DIFFUSION_RATIO}"
        )
    return grid


def node(grid: GridSpec, j: int) -> float:
    if not 0 <= j <= grid.M:
        raise IndexOutOfRange(f"node index {j} outside 0..{grid.M}")
    return j * grid.h


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Newton-Cotes weights q_0..q_M; the integral is h * sum(q_j f_j)."""

    weights: np.ndarray
    rule_name: str
    include_left_endpoint: bool = True
    requested: str = field(default="", compare=False)

    @property
    def M(self) -> int:
        return len(self.weights) - 1

    @property
    def degree(self) -> int:
        """Highest polynomial degree integrated exactly."""
        return 1 if self.rule_name == "trapezoid" else 3


def _simpson(panels: int) -> np.ndarray:
    q = np.ones(panels + 1)
    q[1:panels:2] = 4.0
    q[2:panels:2] = 2.0
    return q / 3.0


def build_weights(
    M: int, rule_name: str = "simpson", include_left_endpoint: bool = True
) -> QuadratureRule:
    """Composite Newton-Cotes weights on M uniform panels.

    ``simpson`` with an odd panel count silently becomes the Simpson + 3/8
    hybrid (3/8 rule on the last three panels). With
    ``include_left_endpoint=False`` the weight of x_0 is zeroed, which
    reproduces a sum that starts at j=1.
    """
    if rule_name not in RULES:
        raise UnsupportedRule(f"unknown rule {rule_name!r}; choose from {RULES}")
    if int(M) != M or M < 3:
        raise ValueError(f"M must be an integer >= 3, got {M}")
    M = int(M)
    if rule_name == "trapezoid":
        q = np.ones(M + 1)
        q[0] = q[-1] = 0.5
        name = "trapezoid"
    elif rule_name == "simpson" and M % 2 == 0:
        q = _simpson(M)
        name = "simpson"
    else:
        q = np.zeros(M + 1)
        m = M - 3
        if m % 2:
            # even M requested as hybrid: plain Simpson is already exact to degree 3
            q = _simpson(M)
            name = "simpson"
        else:
            if m:
                q[: m + 1] = _simpson(m)
            q[m:] += np.array([3.0, 9.0, 9.0, 3.0]) / 8.0
            name = "simpson38-hybrid"
    if not include_left_endpoint:
        q[0] = 0.0
    q.setflags(write=False)
    return QuadratureRule(q, name, include_left_endpoint, requested=rule_name)


def _check_len(rule: QuadratureRule, *arrays) -> None:
    for a in arrays:
        if len(a) != len(rule.weights):
            raise LengthMismatch(
                f"expected {len(rule.weights)} samples, got {len(a)}"
            )


def integrate(rule: QuadratureRule, samples, h: float) -> float:
    samples = np.asarray(samples, dtype=float)
    _check_len(rule, samples)
    return float(h * np.dot(rule.weights, samples))


def weighted_population(rule: QuadratureRule, psi_samples, U, h: float) -> float:
    """Discrete S = h * sum_j q_j psi(x_j) U_j."""
    psi_samples = np.asarray(psi_samples, dtype=float)
    U = np.asarray(U, dtype=float)
    _check_len(rule, psi_samples, U)
    return float(h * np.dot(rule.weights, psi_samples * U))

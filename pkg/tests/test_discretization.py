import math
from fractions import Fraction

import numpy as np
import pytest

from mvd.discretization import (
    GridSpec,
    build_grid,
    build_weights,
    integrate,
    node,
    weighted_population,
)
from mvd.errors import (
    FootOutOfCell,
    IndexOutOfRange,
    LengthMismatch,
    StabilityViolation,
    UnsupportedRule,
)


# -- grids ------------------------------------------------------------------


def test_reference_grid_ex1():
    g = build_grid(1.0, 400, 0.05, 16000)
    assert g.h == pytest.approx(0.0025, rel=1e-15)
    assert g.dt == pytest.approx(3.125e-6, rel=1e-15)
    assert g.diffusion_ratio == pytest.approx(0.5, rel=1e-12)
    assert g.ratio_ok


def test_reference_grid_ex3():
    g = build_grid(2.0, 2000, 0.01, 20000)
    assert g.h == pytest.approx(0.001, rel=1e-15)
    assert g.dt == pytest.approx(5e-7, rel=1e-15)


def test_unstable_ratio_rejected():
    with pytest.raises(StabilityViolation):
        build_grid(1.0, 4, 1.0, 8)


def test_unstable_ratio_override_is_recorded():
    g = build_grid(1.0, 4, 1.0, 8, allow_unstable=True)
    assert g.diffusion_ratio == pytest.approx(2.0)
    assert not g.ratio_ok
    assert g.allow_unstable


def test_foot_outside_cell_always_rejected():
    # dt = 0.5 > h = 0.25
    with pytest.raises(FootOutOfCell):
        build_grid(1.0, 4, 1.0, 2, allow_unstable=True)


def test_dt_equal_h_accepted():
    g = build_grid(1.0, 4, 1.0, 4, allow_unstable=True)
    assert g.dt == g.h


@pytest.mark.parametrize(
    "args",
    [(0.0, 4, 1.0, 4), (1.0, 2, 1.0, 4), (1.0, 4, -1.0, 4), (1.0, 4, 1.0, 0), (1.0, 4.5, 1.0, 4)],
)
def test_invalid_grid_arguments(args):
    with pytest.raises(ValueError):
        build_grid(*args)


def test_grid_derived_steps_consistent():
    g = GridSpec(3.0, 30, 0.2, 400)
    assert g.h == 3.0 / 30 and g.dt == 0.2 / 400
    assert len(g.nodes) == 31 and g.nodes[-1] == pytest.approx(3.0)


def test_refined_keeps_ratio_and_nests():
    g = build_grid(1.0, 50, 0.05, 250)
    f = g.refined()
    assert (f.M, f.N) == (100, 1000)
    assert f.diffusion_ratio == pytest.approx(g.diffusion_ratio, rel=1e-12)
    np.testing.assert_array_equal(f.nodes[::2], g.nodes)


@pytest.mark.parametrize("a, M, j, expected", [(1.0, 4, 0, 0.0), (1.0, 4, 4, 1.0), (2.0, 2000, 1000, 1.0)])
def test_node(a, M, j, expected):
    g = build_grid(a, M, 1.0, 10 * M * M, allow_unstable=False)
    assert node(g, j) == pytest.approx(expected, abs=1e-15)


def test_node_out_of_range():
    g = build_grid(1.0, 4, 1.0, 100)
    with pytest.raises(IndexOutOfRange):
        node(g, 5)
    with pytest.raises(IndexOutOfRange):
        node(g, -1)


# -- weights ----------------------------------------------------------------


def test_trapezoid_weights():
    q = build_weights(4, "trapezoid")
    np.testing.assert_allclose(q.weights, [0.5, 1, 1, 1, 0.5], rtol=0, atol=1e-15)


def test_simpson_weights():
    q = build_weights(4, "simpson")
    np.testing.assert_allclose(q.weights, [1 / 3, 4 / 3, 2 / 3, 4 / 3, 1 / 3], rtol=0, atol=1e-15)


def _exact_weights_by_moments(M, degree_nodes):
    """Exact rational check: sum q_j j^k == M^(k+1)/(k+1) for k <= 3 (h = 1)."""
    return [Fraction(M) ** (k + 1) / (k + 1) for k in range(degree_nodes + 1)]


def test_hybrid_weights_m5():
    q = build_weights(5, "simpson38-hybrid")
    assert q.rule_name == "simpson38-hybrid"
    expected = [Fraction(1, 3), Fraction(4, 3), Fraction(17, 24), Fraction(9, 8), Fraction(9, 8), Fraction(3, 8)]
    # oracle: the expected weights integrate 1, x, x^2, x^3 exactly on [0, 5] (h = 1)
    moments = _exact_weights_by_moments(5, 3)
    for k in range(4):
        assert sum(w * j**k for j, w in enumerate(expected)) == moments[k]
    np.testing.assert_allclose(q.weights, [float(w) for w in expected], rtol=0, atol=1e-15)


def test_simpson_with_odd_m_switches_to_hybrid():
    assert build_weights(7, "simpson").rule_name == "simpson38-hybrid"
    q3 = build_weights(3, "simpson")
    np.testing.assert_allclose(q3.weights, [3 / 8, 9 / 8, 9 / 8, 3 / 8], rtol=0, atol=1e-15)


def test_unsupported_rule():
    with pytest.raises(UnsupportedRule):
        build_weights(4, "gauss")


def test_left_endpoint_dropped():
    q = build_weights(4, "simpson", include_left_endpoint=False)
    assert q.weights[0] == 0.0
    assert q.weights[1] == pytest.approx(4 / 3)


def test_weights_immutable():
    q = build_weights(6)
    with pytest.raises(ValueError):
        q.weights[0] = 1.0


@pytest.mark.parametrize("rule", ["trapezoid", "simpson", "simpson38-hybrid"])
@pytest.mark.parametrize("M", range(4, 65))
def test_exactness_on_monomials(rule, M):
    q = build_weights(M, rule)
    a = 1.7
    h = a / M
    x = np.arange(M + 1) * h
    assert h * q.weights.sum() == pytest.approx(a, rel=1e-12)
    assert np.all(q.weights >= 0)
    for k in range(q.degree + 1):
        exact = a ** (k + 1) / (k + 1)
        assert integrate(q, x**k, h) == pytest.approx(exact, rel=1e-12)


def test_trapezoid_not_exact_for_quadratics():
    q = build_weights(8, "trapezoid")
    x = np.linspace(0, 1, 9)
    assert abs(integrate(q, x**2, 1 / 8) - 1 / 3) > 1e-4


def test_integrate_examples():
    q = build_weights(100)
    x = np.linspace(0, 1, 101)
    assert integrate(q, np.ones(101), 0.01) == pytest.approx(1.0, abs=1e-12)
    assert integrate(q, np.exp(-x), 0.01) == pytest.approx(1 - math.exp(-1), abs=1e-9)
    assert integrate(q, np.exp(-x) - math.exp(-1), 0.01) == pytest.approx(1 - 2 * math.exp(-1), abs=1e-9)


def test_integrate_length_mismatch():
    with pytest.raises(LengthMismatch):
        integrate(build_weights(4), [1, 2, 3], 0.25)


def test_simpson_order_on_exponential():
    errs = []
    for M in (8, 16, 32, 64, 128):
        x = np.linspace(0, 1, M + 1)
        errs.append(abs(integrate(build_weights(M), np.exp(-x), 1 / M) - (1 - math.exp(-1))))
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    assert all(r >= 8 for r in ratios)


def test_left_endpoint_drop_bound():
    M = 40
    h = 1 / M
    x = np.linspace(0, 1, M + 1)
    f = np.cos(3 * x) + 2
    full = build_weights(M, "simpson", True)
    lit = build_weights(M, "simpson", False)
    diff = abs(integrate(full, f, h) - integrate(lit, f, h))
    assert diff <= h * full.weights[0] * np.max(np.abs(f)) + 1e-15


def test_weighted_population():
    q = build_weights(100)
    x = np.linspace(0, 1, 101)
    assert weighted_population(q, np.ones(101), np.zeros(101), 0.01) == 0.0
    u0 = np.exp(-x) - math.exp(-1)
    assert weighted_population(q, np.ones(101), u0, 0.01) == pytest.approx(1 - 2 * math.exp(-1), abs=1e-9)
    q2 = build_weights(2000)
    assert weighted_population(q2, np.ones(2001), np.ones(2001), 0.001) == pytest.approx(2.0, abs=1e-12)
    with pytest.raises(LengthMismatch):
        weighted_population(q, np.ones(100), np.ones(101), 0.01)

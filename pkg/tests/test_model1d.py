import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import MODEL_FD_1_12_1
from fundgap import model1d as M
from fundgap.errors import DomainError, HypothesisFail


@pytest.fixture(scope="module")
def sol_12():
    return M.solve_model(1.0, 1.2, 1.0)


def test_equal_curvatures_reduce_to_cosine():
    sol = M.solve_model(1.0, 1.0, 1.0)
    assert sol.lambda1 == pytest.approx(math.pi ** 2, abs=1e-8)
    assert np.abs(sol.phi - np.cos(math.pi * sol.s)).max() <= 1e-8
    assert sol.L == pytest.approx(1.0, abs=1e-9)


def test_solution_shape_invariants(sol_12):
    phi = sol_12.phi
    assert abs(phi[0]) <= 1e-9 and abs(phi[-1]) <= 1e-9
    assert np.all(phi[1:-1] > 0)
    assert np.abs(phi - phi[::-1]).max() <= 1e-9
    assert sol_12.phi[len(phi) // 2] == 1.0
    assert sol_12.L == pytest.approx(math.pi / math.sqrt(sol_12.lambda1), rel=1e-15)


def test_matches_finite_difference_oracle(sol_12):
    assert sol_12.lambda1 == pytest.approx(MODEL_FD_1_12_1, rel=1e-5)


def test_above_schrodinger_lower_bound(sol_12):
    assert sol_12.lambda1 >= M.eigen_lower_bound(1.0, 1.2, 1.0)


def test_eigen_lower_bound_examples():
    assert M.eigen_lower_bound(1, 1, 1) == pytest.approx(math.pi ** 2, rel=1e-15)
    assert M.eigen_lower_bound(1, 1.2, 1) == pytest.approx(math.pi ** 2 - 0.2 * (4 + math.pi), rel=1e-14)
    assert M.eigen_lower_bound(1, 1.2, 1) == pytest.approx(8.441, abs=1e-3)
    assert M.eigen_lower_bound(1, 1.3, 0.5) == pytest.approx(37.336, abs=1e-3)


def test_schrodinger_form_gives_same_eigenvalue(sol_12):
    assert M.solve_model_schrodinger(1.0, 1.2, 1.0) == pytest.approx(sol_12.lambda1, abs=1e-7)
    assert M.solve_model_schrodinger(1.0, 1.3, 0.8) == pytest.approx(M.solve_model(1.0, 1.3, 0.8).lambda1, abs=1e-7)


def test_parameter_preconditions():
    with pytest.raises(DomainError):
        M.solve_model(1.2, 1.0, 1.0)
    with pytest.raises(DomainError):
        M.solve_model(0.0, 1.0, 1.0)
    with pytest.raises(DomainError):
        M.solve_model(1.0, 1.0, 1.6)
    with pytest.raises(DomainError):
        M.solve_model(1.0, 1.0, 1.0, grid_n=100)
    # the endpoint of the admissible diameter range is accepted
    M.solve_model(1.0, 1.2, math.pi / (2 * math.sqrt(1.2)))


def test_phi_and_psi_strictly_decreasing(sol_12):
    rep = M.check_psi_inequalities(sol_12)
    assert rep.phi_decreasing and rep.psi_decreasing
    assert rep.endpoint_slope < 0


def test_psi_battery_equal_curvature_example():
    sol = M.solve_model(1.0, 1.0, 1.0)
    rep = M.check_psi_inequalities(sol)
    assert rep.values["iii"] == pytest.approx(-math.pi ** 2 + 0.5, abs=1e-6)
    assert np.abs(sol.psi - (-math.pi * np.tan(math.pi * sol.s_psi))).max() <= 1e-6
    assert rep.passed


def test_psi_battery_pinched_example(sol_12):
    rep = M.check_psi_inequalities(sol_12)
    assert rep.passed, rep.values
    assert abs(rep.values["v"]) <= 1e-12


def test_psi_battery_rejects_pinching_at_limit():
    sol = M.solve_model(1.0, M.PINCH_LIMIT, 0.5)
    with pytest.raises(HypothesisFail, match="pinching"):
        M.check_psi_inequalities(sol)


def test_pinch_limit_value():
    assert M.PINCH_LIMIT == pytest.approx(1.3212, abs=1e-4)
    assert M.PINCH_LIMIT * (3 + 4 * math.pi) == pytest.approx(8 + 4 * math.pi, rel=1e-15)


def test_psi_interpolation_agrees_with_grid(sol_12):
    s = sol_12.s_psi[::37]
    assert np.abs(sol_12.psi_at(s) - sol_12.psi[::37]).max() <= 1e-9
    with pytest.raises(DomainError):
        sol_12.psi_at(0.5)


@pytest.mark.parametrize("k_hi, D", [(1.0, 1.0), (1.2, 1.0), (1.3, 0.8)])
def test_riccati_comparison(k_hi, D):
    rep = M.riccati_compare(M.solve_model(1.0, k_hi, D))
    assert rep.ok
    if k_hi == 1.0:
        assert abs(rep.max_violation) <= 1e-9


def test_comparison_psi_solves_riccati():
    L = 1.3
    s = np.linspace(0, 0.5, 50)
    h = 1e-6
    d = (M.comparison_psi(L, s + h) - M.comparison_psi(L, s - h)) / (2 * h)
    assert np.abs(d + M.comparison_psi(L, s) ** 2 + (math.pi / L) ** 2).max() <= 1e-6


def test_eigenvalue_below_euclidean_over_grid():
    for k_lo in (0.5, 1.0, 2.0):
        for ratio in (1.0, 1.1, 1.3):
            k_hi = k_lo * ratio
            for frac in (0.3, 0.7, 1.0):
                D = frac * math.pi / (2 * math.sqrt(k_hi))
                sol = M.solve_model(k_lo, k_hi, D)
                assert sol.lambda1 <= math.pi ** 2 / D ** 2 * (1 + 1e-10)
                assert sol.L >= D * (1 - 1e-10)


def test_eigenvalue_lipschitz_smoke():
    base = M.solve_model(1.0, 1.2, 1.0, grid_n=256).lambda1
    for args in [(1.0 + 1e-6, 1.2, 1.0), (1.0, 1.2 + 1e-6, 1.0), (1.0, 1.2, 1.0 - 1e-6)]:
        assert abs(M.solve_model(*args, grid_n=256).lambda1 - base) <= 1e-3


def test_richardson_oracle_close_to_shooting(sol_12):
    assert sol_12.lambda1 == pytest.approx(oracles.richardson_fd_model(1.0, 1.2, 1.0), rel=1e-8)


admissible = st.tuples(st.floats(0.3, 3.0), st.floats(1.0, 1.32), st.floats(0.1, 1.0))


@settings(max_examples=30)
@given(admissible)
def test_psi_battery_holds_below_pinch_limit(p):
    k_lo, ratio, frac = p
    k_hi = k_lo * ratio
    D = frac * math.pi / (2 * math.sqrt(k_hi))
    sol = M.solve_model(k_lo, k_hi, D)
    assert sol.lambda1 >= M.eigen_lower_bound(k_lo, k_hi, D) - 1e-9
    assert M.check_psi_inequalities(sol).passed
    assert M.riccati_compare(sol).ok

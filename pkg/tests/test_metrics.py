import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kfcs.metrics import (
    BudgetExceededError,
    compressibility_check,
    delta_S,
    incoherence_report,
    theorem1_condition,
    theta_S_Sp,
)
from kfcs.numerics import ContractError
from oracles import delta_by_quadratic_forms, theta_by_pairs, unit_columns

THREE = np.array([[1.0, 0.0, 1 / math.sqrt(2)], [0.0, 1.0, 1 / math.sqrt(2)]])


def test_three_column_delta():
    assert delta_S(THREE, 2) == pytest.approx(1 / math.sqrt(2), abs=1e-9)


def test_three_column_theta():
    assert theta_S_Sp(THREE, 1, 1) == pytest.approx(1 / math.sqrt(2), abs=1e-9)


def test_orthonormal_is_isometry():
    Q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((6, 6)))
    for S in range(1, 7):
        assert delta_S(Q, S) == pytest.approx(0.0, abs=1e-12)
    assert theta_S_Sp(Q, 2, 3) == pytest.approx(0.0, abs=1e-12)


def test_unit_columns_delta1_zero():
    A = unit_columns(np.random.default_rng(1), 5, 9)
    assert delta_S(A, 1) == pytest.approx(0.0, abs=1e-12)


def test_theta_symmetric():
    A = unit_columns(np.random.default_rng(2), 6, 10)
    assert theta_S_Sp(A, 1, 3) == pytest.approx(theta_S_Sp(A, 3, 1), abs=1e-14)


def test_budget_refusal():
    A = unit_columns(np.random.default_rng(3), 10, 40)
    with pytest.raises(BudgetExceededError):
        delta_S(A, 10, budget=1e6)
    with pytest.raises(BudgetExceededError):
        theta_S_Sp(A, 5, 5, budget=1e6)


def test_order_out_of_range():
    with pytest.raises(ContractError):
        delta_S(THREE, 4)
    with pytest.raises(ContractError):
        theta_S_Sp(THREE, 2, 2)


@pytest.mark.parametrize("seed", range(10))
def test_matches_subset_by_subset_oracle(seed):
    A = unit_columns(np.random.default_rng(seed), 8, 16)
    for S in (2, 3):
        assert delta_S(A, S) == pytest.approx(delta_by_quadratic_forms(A, S), abs=1e-9)
    assert theta_S_Sp(A, 1, 2) == pytest.approx(theta_by_pairs(A, 1, 2), abs=1e-9)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31))
def test_monotone_and_theta_below_delta(seed):
    A = unit_columns(np.random.default_rng(seed), 8, 16)
    d = [delta_S(A, S) for S in range(1, 5)]
    assert all(a <= b + 1e-12 for a, b in zip(d, d[1:]))
    t11, t12, t22 = theta_S_Sp(A, 1, 1), theta_S_Sp(A, 1, 2), theta_S_Sp(A, 2, 2)
    assert t11 <= t12 + 1e-12 and t12 <= t22 + 1e-12
    assert t11 <= d[1] + 1e-12 and t12 <= d[2] + 1e-12 and t22 <= d[3] + 1e-12


def test_report_orthonormal_passes():
    rep = incoherence_report(np.eye(6), 2, 0)
    assert rep.passed
    assert rep.delta[4] == 0.0 and rep.delta[6] == 0.0


def test_report_flags_coherent_matrix():
    rep = incoherence_report(THREE, 1, 0)
    assert not rep.checks["delta_2Smax_plus_delta_3Smax_lt_1"]
    assert rep.delta[2] == pytest.approx(1 / math.sqrt(2))


def test_compressibility_cases():
    assert compressibility_check(np.zeros(3), 0.1)
    assert not compressibility_check(np.array([0.2, 0.5]), 0.5)
    assert compressibility_check(np.array([]), 0.0)


def test_theorem1_condition_equality_counts():
    # theta = 0: (t - t_a + 1) sigma_sys^2 = sigma_obs^2 / (1 - delta) exactly
    assert theorem1_condition(3, 3, 1.0, 0.5, 0.0, 123.0, 0.5)
    assert not theorem1_condition(3, 3, 0.99, 0.5, 0.0, 123.0, 0.5)


def test_theorem1_condition_delta_near_one():
    assert not theorem1_condition(1000, 1, 1e6, 1 - 1e-15, 0.5, 1.0, 1.0)
    assert not theorem1_condition(1000, 1, 1e6, 1.0, 0.5, 1.0, 1.0)


def test_theorem1_condition_enumerated_inputs():
    A = unit_columns(np.random.default_rng(7), 8, 16)
    d, th = delta_S(A, 2), theta_S_Sp(A, 2, 1)
    lam = 4.0
    rhs = th**2 / (1 - d) ** 2 * lam + 0.1 / (1 - d)
    steps = math.ceil(rhs / 0.5)
    assert theorem1_condition(10 + steps - 1, 10, 0.5, d, th, lam, 0.1)
    assert not theorem1_condition(10 + steps - 2, 10, 0.5, d, th, lam, 0.1)

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import norm

from kfcs.audits import simplex_etf
from kfcs.bounds import (
    BoundInputs,
    DomainError,
    b1,
    b_cslse,
    dantzig_constants,
    gaussian_q,
    gaussian_q_inv,
    min_over_S_bound,
    tau_epsilon,
)
from kfcs.metrics import delta_S, theta_S_Sp
from oracles import unit_columns

S2 = 16 / 648


def _inputs(**kw):
    base = dict(C1=1.0, C2=2.0, C3=3.0, lambda_m=4.0, S_max=20, sigma_obs_sq=S2)
    base.update(kw)
    return BoundInputs(**base)


def test_b1_zero_noise():
    assert b1(_inputs(sigma_obs_sq=0.0)) == 0.0


def test_b1_published_parameters():
    assert b1(_inputs()) == pytest.approx(320 * 16 / 648)
    assert b1(_inputs()) == pytest.approx(7.901, abs=1e-3)


def test_b1_quadratic_in_lambda():
    assert b1(_inputs(lambda_m=8.0)) == pytest.approx(4 * b1(_inputs()))


@given(st.floats(0.1, 10), st.integers(1, 50), st.floats(0, 5), st.floats(0.1, 4))
def test_b1_separable(c1, s, s2, k):
    base = b1(_inputs(C1=c1, S_max=s, sigma_obs_sq=s2))
    assert b1(_inputs(C1=c1, S_max=2 * s, sigma_obs_sq=s2)) == pytest.approx(2 * base)
    assert b1(_inputs(C1=c1, S_max=s, sigma_obs_sq=k * s2)) == pytest.approx(k * base)


def test_cslse_no_undetected_part():
    inp = _inputs(T_size=5, Delta_size=0, delta_T=0.2, theta_T_Delta=0.3)
    assert b_cslse(5, inp) == pytest.approx(2.0 * 5 * S2)


def test_cslse_zero_theta_branch():
    inp = _inputs(T_size=6, Delta_size=2, delta_T=0.25, theta_T_Delta=0.0, E_xDelta_sq=7.0)
    S = 3
    L0 = (6 + 2 - S) * S2 / (1 - 0.25)
    assert b_cslse(S, inp) == pytest.approx(2.0 * S * S2 + 3.0 * (6 + 2 - S) / S * L0)


def _cslse_exact(S, C2, C3, s2, d, th, T, D, E):
    """Rational-arithmetic recomputation of the bound."""
    C2, C3, s2, d, th, E = map(Fraction, (C2, C3, s2, d, th, E))
    leak = th * th / ((1 - d) * (1 - d))
    if S >= D:
        L0 = leak * E + (T + D - S) * s2 / (1 - d)
    else:
        L0 = (leak + 1) * E + T * s2 / (1 - d)
    return float(C2 * S * s2 + C3 * Fraction(T + D - S, S) * L0)


def test_cslse_small_instance_double_entry():
    A = simplex_etf(12)
    d, th = delta_S(A, 3), theta_S_Sp(A, 3, 2)
    c1, c2, c3 = dantzig_constants(A, 4.0)
    inp = BoundInputs(C1=1.0, C2=c2, C3=c3, lambda_m=4.0, S_max=5, sigma_obs_sq=0.01,
                      delta_T=d, theta_T_Delta=th, T_size=3, Delta_size=2, E_xDelta_sq=4.0)
    for S in (1, 2):
        assert math.isfinite(c2(S))
        want = _cslse_exact(S, c2(S), c3(S), 0.01, d, th, 3, 2, 4.0)
        assert b_cslse(S, inp) == pytest.approx(want, rel=1e-12)


def test_cslse_both_branches_literal():
    kw = dict(C2=1.5, C3=0.5, s2=0.1, d=0.3, th=0.4, T=4, D=3, E=2.0)
    inp = _inputs(C2=1.5, C3=0.5, sigma_obs_sq=0.1, delta_T=0.3, theta_T_Delta=0.4,
                  T_size=4, Delta_size=3, E_xDelta_sq=2.0)
    for S in range(1, 8):
        assert b_cslse(S, inp) == pytest.approx(_cslse_exact(S, **kw), rel=1e-12)


def test_cslse_domain_error():
    with pytest.raises(DomainError):
        b_cslse(1, _inputs(delta_T=1.0, T_size=1))
    with pytest.raises(ValueError):
        _inputs(delta_T=-0.1)


def test_cslse_beyond_support_size_keeps_first_term():
    inp = _inputs(T_size=2, Delta_size=1, E_xDelta_sq=3.0)
    assert b_cslse(5, inp) == pytest.approx(2.0 * 5 * S2)


def test_q_inverse_against_scipy():
    for p in (1e-8, 0.01, 0.2, 0.45, 0.4999, 0.5, 0.7, 0.99):
        assert gaussian_q_inv(p) == pytest.approx(norm.isf(p), abs=1e-10)
        assert gaussian_q(norm.isf(p)) == pytest.approx(p, rel=1e-12)


def test_tau_zero_bound():
    assert tau_epsilon(0.1, _inputs(sigma_obs_sq=0.0), 1.0) == 0


def test_tau_published_case():
    inp = _inputs()
    q = norm.isf(0.9 ** (1 / 20) / 2)
    want = math.ceil(4 * b1(inp) / q**2)
    assert tau_epsilon(0.1, inp, 1.0) == want


def test_tau_domain():
    with pytest.raises(DomainError):
        tau_epsilon(0.0, _inputs(), 1.0)
    with pytest.raises(DomainError):
        tau_epsilon(1.0, _inputs(), 1.0)


@given(st.floats(0.01, 0.9), st.floats(0.01, 0.9), st.floats(0.1, 5), st.floats(0.1, 5))
def test_tau_monotone(e1, e2, v1, v2):
    inp = _inputs(S_max=4, sigma_obs_sq=1e-3)
    lo_e, hi_e = sorted((e1, e2))
    lo_v, hi_v = sorted((v1, v2))
    assert tau_epsilon(hi_e, inp, 1.0) <= tau_epsilon(lo_e, inp, 1.0)
    assert tau_epsilon(0.1, inp, hi_v) <= tau_epsilon(0.1, inp, lo_v)


def test_min_single_element():
    inp = _inputs(T_size=3, Delta_size=2, E_xDelta_sq=1.0, delta_T=0.1, theta_T_Delta=0.1)
    S, v = min_over_S_bound(inp, [2])
    assert S == 2 and v == pytest.approx(b_cslse(2, inp))


def test_min_decreasing_takes_right_endpoint():
    inp = _inputs(C2=0.0, C3=1.0, T_size=10, Delta_size=0)
    values = [b_cslse(S, inp) for S in range(1, 9)]
    assert all(a > b for a, b in zip(values, values[1:]))
    assert min_over_S_bound(inp, range(1, 9))[0] == 8


def test_min_ties_prefer_smaller():
    inp = _inputs(C2=0.0, C3=1.0, T_size=2, Delta_size=0)
    assert min_over_S_bound(inp, [2, 3, 4])[0] == 2


def test_min_exhaustive_scan():
    A = simplex_etf(12)
    c1, c2, c3 = dantzig_constants(A, 3.0)
    inp = BoundInputs(C1=c1(1), C2=c2, C3=c3, lambda_m=3.0, S_max=3, sigma_obs_sq=0.05,
                      delta_T=delta_S(A, 2), theta_T_Delta=theta_S_Sp(A, 2, 2),
                      T_size=2, Delta_size=2, E_xDelta_sq=5.0)
    scan = {S: b_cslse(S, inp) for S in range(1, 5)}
    S_star, v = min_over_S_bound(inp, range(1, 5))
    assert v == min(scan.values()) and scan[S_star] == v


def test_dantzig_constant_definition():
    A = unit_columns(np.random.default_rng(9), 8, 16)
    c1, c2, c3 = dantzig_constants(A, 2.0)
    denom = 1 - delta_S(A, 2) - theta_S_Sp(A, 1, 2)
    want = 4 / denom if denom > 0 else math.inf
    assert c1(1) == pytest.approx(want)
    if math.isfinite(want):
        assert c2(1) == pytest.approx(2 * want**2 * 4.0)
        assert c3(1) == pytest.approx(2 * want**2)
    assert c1(6) == math.inf  # 3S exceeds what this matrix can certify

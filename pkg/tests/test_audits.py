import numpy as np
import pytest

from kfcs import audits
from kfcs.metrics import delta_S


def test_simplex_frame_gram():
    A = audits.simplex_etf(12)
    G = A.T @ A
    np.testing.assert_allclose(G, (13 / 12) * np.eye(13) - 1 / 12, atol=1e-14)


def test_certified_constants_match_closed_form():
    inst = audits.certified_instance()
    for S in (2, 4, 6):
        assert inst.report.delta[S] == pytest.approx((S - 1) / 12, abs=1e-12)
    assert inst.report.theta[(2, 4)] == pytest.approx(np.sqrt(8) / 12, abs=1e-12)
    assert inst.C1 == pytest.approx(4 / (1 - 0.25 - np.sqrt(8) / 12), rel=1e-10)
    assert inst.report.passed


def test_lemma2_small_run():
    rep = audits.lemma2_audit(n_trials=10, horizon=20)
    assert rep.n_checks > 0 and rep.passed()


def test_convergence_small_run():
    rep = audits.convergence_audit(n_trials=10)
    assert rep.t_check == 10 + rep.tau and rep.ratio <= 0.01


def test_cslse_small_run():
    rep = audits.cslse_audit(n_draws=300)
    assert rep.precondition and rep.passed and rep.S_star in (1, 2)

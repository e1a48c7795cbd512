import math

import numpy as np
import pytest

import tmkt


def test_solve_p_hits_the_target():
    p = tmkt.solve_p(10, 0.4)
    assert abs(tmkt.expected_replaced(10, p) - 4.0) < 1e-9
    assert abs(sum(tmkt.t_star_pmf(10, p)) - 1.0) < 1e-12


def test_conditional_infeasible_raises():
    assert tmkt.conditional_lower_bound(10) == pytest.approx(0.55)
    with pytest.raises(tmkt.TmktError, match="infeasible"):
        tmkt.solve_p(10, 0.4, tmkt.MixMode.CONDITIONAL)


def test_histogram_counts():
    h = tmkt.t_star_histogram(8, 0.5, draws=5000, seed=1)
    assert len(h) == 9
    assert sum(h) == 5000


def test_cka_invariances():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(20, 5))
    y = rng.normal(size=(20, 3))
    assert tmkt.linear_cka(x, x) == pytest.approx(1.0)
    assert tmkt.linear_cka(3.0 * x, y) == pytest.approx(tmkt.linear_cka(x, y))


def test_variance_lab_trace_identity():
    m = tmkt.random_model(3, 8, 4, 0.25, 9)
    d = tmkt.cov_difference(m)
    assert math.isclose(d["trace_lhs"], d["trace_rhs"], rel_tol=0, abs_tol=1e-12)
    assert d["min_eigenvalue"] >= -1e-10
    np.testing.assert_allclose(np.trace(tmkt.analytic_cov_bm(m) - tmkt.analytic_cov_tsm(m)), d["trace_lhs"])


def test_cli_round_trip():
    code, out = tmkt.cli("solve-p", "--timesteps", 10, "--ratio", 0.4)
    assert code == 0
    assert out["achieved_expectation"] == pytest.approx(4.0)
    code, out = tmkt.cli("solve-p", "--timesteps", 10, "--ratio", 0.4, "--mode", "conditional")
    assert code == 6
    assert out["error"]["category"] == "infeasible"
    code, _ = tmkt.cli("nope")
    assert code == 2

import math

import numpy as np
import pytest

from zdx import driver as drv
from zdx.spectral import (
    TwistedOperator,
    decompose,
    dominant_eigenvalue,
    fit_stable_params,
    integrale_ratio,
    lattice_aperiodicity,
    llt_check,
    norm_A,
    norm_a,
    phi0,
)
from zdx.lattice import StableParams


def test_twisted_at_zero_is_transition(markov3):
    op = TwistedOperator.at(markov3, np.zeros(1))
    assert np.allclose(op.matrix, markov3.transition)


def test_pm1_walk_periodic():
    s = decompose(drv.pm1_walk(), 16, fit=False)
    assert not s.aperiodic
    assert not lattice_aperiodicity(drv.pm1_walk()).aperiodic
    assert dominant_eigenvalue(drv.pm1_walk(), [math.pi]) == pytest.approx(-1.0, abs=1e-12)


@pytest.mark.parametrize("name", ["lazy_1d", "lazy_2d", "markov_3state"])
def test_fixtures_aperiodic_and_agree_with_lattice(name):
    d = drv.fixtures()[name]
    s = decompose(d, 16, fit=False)
    assert s.aperiodic and s.lattice.aperiodic
    assert s.period == 1


def test_lazy_1d_branch_closed_form(lazy1):
    for u in np.linspace(-3, 3, 13):
        assert dominant_eigenvalue(lazy1, [u]) == pytest.approx(0.5 + 0.5 * math.cos(u), abs=1e-12)


@pytest.mark.parametrize("name", ["lazy_1d", "lazy_2d", "markov_3state"])
def test_decomposition_identities(name):
    s = decompose(drv.fixtures()[name], 16, fit=False)
    for key, val in s.hypothesis_residuals().items():
        assert val <= 1e-8, key


@pytest.mark.parametrize("M", [2, 3])
def test_cyclic_chain_decomposition(M):
    s = decompose(drv.cyclic_chain(M), 16, fit=False)
    assert s.period == M
    for key, val in s.hypothesis_residuals().items():
        assert val <= 1e-8, key


def test_branch_conjugate_and_bounded(markov3):
    s = decompose(markov3, 32, fit=False)
    lam = s.lam[s.in_U]
    assert np.all(np.abs(lam) <= 1 + 1e-12)
    assert np.any(np.isclose(lam, 1.0))
    u = np.array([0.7])
    assert dominant_eigenvalue(markov3, -u) == pytest.approx(np.conj(dominant_eigenvalue(markov3, u)), abs=1e-10)


def test_fit_lazy_1d(lazy1):
    params, resid = fit_stable_params(decompose(lazy1, 64, fit=False))
    assert params.theta == pytest.approx(0.25, rel=1e-6)
    assert params.alpha == 2.0
    assert phi0(params) == pytest.approx(1 / math.sqrt(math.pi), rel=1e-6)


def test_fit_lazy_2d(lazy2):
    params, _ = fit_stable_params(decompose(lazy2, 32, fit=False))
    assert np.allclose(params.sigma, np.eye(2) / 4, atol=1e-6)
    assert phi0(params) == pytest.approx(2 / math.pi, rel=1e-6)


def test_fit_markov_theta_matches_asymptotic_variance(markov3):
    params, _ = fit_stable_params(decompose(markov3, 64, fit=False))
    assert params.theta == pytest.approx(markov3.asymptotic_covariance[0, 0] / 2, rel=0.01)


def test_llt_lazy_1d(lazy1):
    lo = llt_check(lazy1, 100)
    hi = llt_check(lazy1, 10**4)
    assert hi["max_scaled_error"] < lo["max_scaled_error"]
    assert hi["p0"] == pytest.approx(hi["phi0_over_an"], rel=0.01)


def test_llt_lazy_2d(lazy2):
    assert llt_check(lazy2, 1000)["max_scaled_error"] < llt_check(lazy2, 100)["max_scaled_error"]


def test_norm_A_increasing_and_explicit():
    p1 = StableParams(2.0, 0.25)
    A = [norm_A(p1, n) for n in (10, 100, 1000, 10**4)]
    assert all(a < b for a, b in zip(A, A[1:]))
    # a_n = sqrt(n) here, so A_n^2 ~ 2 sqrt(n)
    assert norm_A(p1, 10**6) ** 2 / (2 * math.sqrt(10**6)) == pytest.approx(1.0, rel=2e-3)
    p2 = StableParams(2.0, 0.5, sigma=np.eye(2) / 4)
    r = [norm_A(p2, n) ** 2 / math.log(n) for n in (10**3, 10**4, 10**5)]
    assert abs(r[2] - r[1]) < abs(r[1] - r[0])
    assert norm_a(p1, 16) == pytest.approx(4.0)


def test_integrale_ratio():
    assert integrale_ratio(1, 2.0, 1, 1000) == 1.0
    assert integrale_ratio(2, 2.0, 1, 10**5) == pytest.approx(math.pi / 4, rel=0.01)
    r = [integrale_ratio(2, 2.0, 2, n) for n in (10**3, 10**5)]
    assert abs(r[1] - 1) < abs(r[0] - 1)


def test_bad_grid_rejected(lazy1):
    with pytest.raises(ValueError):
        decompose(lazy1, 15)

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from zdx import driver as drv
from zdx.excursion import (
    ExcursionError,
    alpha_dp,
    alpha_exact,
    conditioned_chain,
    geometric_exp_ks,
    hit_stats,
    induced_norm_bound,
    n0p_values,
    reduced_chain,
    sample_excursions,
    simulate_excursion,
    visit_distribution,
    wilson_interval,
)
from zdx.lattice import Observable, make_fp


def test_lazy_1d_hit_probability_exact(lazy1):
    ch = reduced_chain(lazy1, [(1,)])
    assert 1 / alpha_exact(ch, (1,)) == pytest.approx(0.25, abs=1e-12)


def test_lazy_2d_hit_probability_exact(lazy2):
    ch = reduced_chain(lazy2, [(1, 0)])
    assert 1 / alpha_exact(ch, (1, 0)) == pytest.approx(0.25, abs=1e-6)


def test_visit_distribution_lazy_1d(lazy1):
    # N_p given N_p > 0 is geometric with success 1/alpha; alpha = 4|p| here
    pmf = visit_distribution(reduced_chain(lazy1, [(3,)]), (3,))
    assert pmf.sum() == pytest.approx(1.0, abs=1e-10)
    s = 1 / 12
    k = np.arange(1, 6)
    assert pmf[0] == pytest.approx(1 - s, abs=1e-12)
    assert np.allclose(pmf[1:6], s * s * (1 - s) ** (k - 1), atol=1e-12)
    assert np.dot(np.arange(len(pmf)), pmf) == pytest.approx(1.0, abs=1e-8)


def test_conditioned_chain_weight(lazy1):
    ch = reduced_chain(lazy1, [(2,)])
    cond = conditioned_chain(ch, (2,))
    assert cond.weight == pytest.approx(1 / alpha_exact(ch, (2,)))
    assert np.allclose(cond.T.sum(axis=1), 1.0)


def test_origin_site_rejected(lazy1):
    with pytest.raises(ExcursionError):
        alpha_exact(reduced_chain(lazy1, [(1,)]), (0,))
    with pytest.raises(ExcursionError):
        alpha_dp(lazy1, (0,))


def test_alpha_dp_brackets_lazy_1d(lazy1):
    br = alpha_dp(lazy1, (1,), tol=1e-4)
    assert br.converged and br.lo <= br.hi
    assert br.contains(0.25)


def test_alpha_dp_brackets_lazy_2d(lazy2):
    br = alpha_dp(lazy2, (1, 0), tol=1e-3)
    assert br.contains(0.25)
    assert br.width <= 1e-3


def test_alpha_dp_absorbing_matches_monte_carlo():
    step = drv.IidStep.from_atoms({(1,): 0.4, (-2,): 0.2, (0,): 0.4})
    br = alpha_dp(step, (2,), tol=1e-4)
    assert br.method == "absorbing" and br.converged
    n = 40_000
    b = sample_excursions(step, [(2,)], n, seed=4, engine="direct", cap=10**6).valid()
    lo, hi = wilson_interval(int(np.count_nonzero(b.counts((2,)))), b.n, z=4.0)
    assert lo <= 0.5 * (br.lo + br.hi) <= hi


def test_alpha_dp_rejects_markov(markov3):
    with pytest.raises(ExcursionError):
        alpha_dp(markov3, (1,))


def test_alpha_symmetry(lazy2):
    a = alpha_exact(reduced_chain(lazy2, [(2, 1)]), (2, 1))
    b = alpha_exact(reduced_chain(lazy2, [(-2, -1)]), (-2, -1))
    assert a == pytest.approx(b, rel=1e-6)


def test_hit_stats_lazy_1d(lazy1):
    hs = hit_stats(lazy1, (1,), 200_000, seed=3)
    assert hs.alpha_ci[0] <= 4.0 <= hs.alpha_ci[1]
    assert abs(hs.kac_mean - 1.0) <= 4 * hs.kac_se
    # given N_1 > 0 the count is geometric with mean alpha
    vals = np.array(list(hs.conditional_Np))
    cnt = np.array(list(hs.conditional_Np.values()))
    assert np.dot(vals, cnt) / cnt.sum() == pytest.approx(4.0, rel=0.03)
    assert hs.reliable and hs.censored_rate == 0.0


def test_hit_stats_needs_samples(lazy1):
    with pytest.raises(ExcursionError):
        hit_stats(lazy1, (1,), 10, seed=0)


def test_n0p_values():
    hit = np.array([False, True, False, False, True, False])
    assert list(n0p_values(hit)) == [1, 0, 2, 1, 0]
    assert len(n0p_values(np.zeros(4, bool))) == 0


def test_wilson_interval_contains_point():
    lo, hi = wilson_interval(30, 100)
    assert lo < 0.3 < hi
    assert 0 <= wilson_interval(0, 100)[0] <= wilson_interval(0, 100)[1]


def test_induced_norm_fp(lazy1):
    out = induced_norm_bound(lazy1, make_fp((1,)), 2, 200_000, seed=5)
    # E(N_1 - 1)^2 = 2 g(1) - 2 = 6 for i.i.d. excursions
    assert out["norm_q_power"] == pytest.approx(6.0, rel=0.05)
    assert out["holds"]


def test_induced_norm_zero():
    out = induced_norm_bound(drv.lazy_1d(), Observable.zero(1), 2, 1000, seed=0)
    assert out["norm"] == 0.0 and out["holds"]


def test_induced_norm_two_sided(lazy1):
    obs = Observable.from_mapping({(-2,): 1.0, (0,): -2.0, (2,): 1.0})
    assert induced_norm_bound(lazy1, obs, 3, 100_000, seed=6)["holds"]


def test_simulate_excursion_deterministic(lazy1):
    obs = [make_fp((1,))]
    a = simulate_excursion(lazy1, obs, np.random.default_rng(11), cap=10**6)
    b = simulate_excursion(lazy1, obs, np.random.default_rng(11), cap=10**6)
    assert a == b
    assert a.visits[(0,)] == 1
    assert a.induced_sums[0] == a.visits[(1,)] - 1


def test_sample_excursions_reproducible(lazy1):
    a = sample_excursions(lazy1, [(2,)], 5000, seed=1)
    b = sample_excursions(lazy1, [(2,)], 5000, seed=1)
    assert np.array_equal(a.visits, b.visits)


def test_direct_engine_agrees_with_reduced(lazy1):
    n = 20_000
    red = sample_excursions(lazy1, [(1,)], n, seed=2, engine="reduced")
    dire = sample_excursions(lazy1, [(1,)], n, seed=2, engine="direct", cap=10**6).valid()
    assert dire.censored_rate == 0.0
    p_red = np.mean(red.counts((1,)) > 0)
    p_dir = np.mean(dire.counts((1,)) > 0)
    se = math.sqrt(0.25 * 0.75 / n)
    assert abs(p_red - 0.25) <= 4 * se
    assert abs(p_dir - 0.25) <= 4 * se


def test_geometric_exp_ks_closed_form():
    # the largest gap sits at the first atom: 1 - e^{-1/alpha}
    for a in (4.0, 11.7, 40.0):
        assert geometric_exp_ks(a) == pytest.approx(1 - math.exp(-1 / a), rel=1e-3)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 40))
def test_lazy_1d_alpha_linear(k):
    ch = reduced_chain(drv.lazy_1d(), [(k,)])
    assert alpha_exact(ch, (k,)) == pytest.approx(4 * k, rel=1e-9)

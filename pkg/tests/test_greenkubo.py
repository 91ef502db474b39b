import numpy as np
import pytest
from scipy import stats

from zdx import driver as drv
from zdx.greenkubo import (
    GreenKuboError,
    block_classes,
    cesaro_terms,
    coboundary_surrogate,
    gk_extension,
    gk_fp_identity,
    gk_induced,
    gk_subset_invariance,
    obm_standard_error,
)
from zdx.kernel import g_series
from zdx.lattice import Observable, make_fp


def test_lazy_1d_fp_value(lazy1):
    r = gk_extension(lazy1, make_fp((1,)))
    assert r.converged
    assert r.value == pytest.approx(6.0, abs=1e-6)


def test_per_k_terms_lazy_1d(lazy1):
    # the lazy step is a centred Binomial(2, 1/2), so S_k + k ~ Binomial(2k, 1/2)
    r = gk_extension(lazy1, make_fp((1,)))
    k = np.arange(1, 60)
    p0 = stats.binom.pmf(k, 2 * k, 0.5)
    p1 = stats.binom.pmf(k + 1, 2 * k, 0.5)
    assert r.per_k_terms[0] == pytest.approx(2.0)
    assert np.allclose(r.per_k_terms[1:60], 2 * p0 - 2 * p1, atol=1e-14)


def test_bilinear_scaling(lazy1):
    f = make_fp((2,))
    base = gk_extension(lazy1, f).value
    assert gk_extension(lazy1, f.scaled(3.0)).value == pytest.approx(9 * base, rel=1e-8)


@pytest.mark.parametrize("name,p", [("lazy_2d", (1, 0)), ("lazy_2d", (2, 1)), ("markov_3state", (2,))])
def test_fp_identity(name, p):
    out = gk_fp_identity(drv.fixtures()[name], p)
    assert out["holds"], out


def test_fp_identity_explicit_markov(markov3):
    gk = gk_extension(markov3, make_fp((1,))).value
    assert gk == pytest.approx(2 * g_series(markov3, (1,)).value - 2, abs=1e-5)


def test_zero_observable(lazy1):
    assert gk_extension(lazy1, Observable.zero(1)).value == 0.0


def test_nonzero_sum_rejected(lazy1):
    with pytest.raises(GreenKuboError):
        gk_extension(lazy1, Observable(1, ((0,), (1,)), (1.0, 1.0)))
    with pytest.raises(GreenKuboError):
        gk_extension(lazy1, Observable(1, ((3,),), (1.0,)))


def test_nonnegative_on_random_observables(lazy2):
    rng = np.random.default_rng(0)
    pts = [(0, 0), (1, 0), (0, 2), (-1, 1)]
    for _ in range(3):
        obs = Observable.from_mapping(dict(zip(pts, rng.normal(size=len(pts)))))
        assert gk_extension(lazy2, obs).value >= 0


def test_cesaro_terms_mean():
    f = np.array([1.0, -1.0, 2.0, 0.5, -0.5, 1.5])
    y = cesaro_terms(f, 2)
    assert np.allclose(y, f[:5] ** 2 + f[:5] * f[1:6])


def test_obm_iid_close_to_naive():
    x = np.random.default_rng(1).normal(size=40_000)
    assert obm_standard_error(x) == pytest.approx(1 / 200, rel=0.15)


def test_induced_lazy_1d(lazy1):
    r = gk_induced(lazy1, make_fp((1,)), 200_000, k_max=8, seed=2)
    assert abs(r.value - 6.0) <= 4 * r.ci
    # i.i.d. excursions: lag covariances vanish
    assert np.all(np.abs(r.per_k_terms[1:]) < 0.1)


def test_induced_zero_observable(lazy1):
    assert gk_induced(lazy1, Observable.zero(1), 100).value == 0.0


def test_induced_bad_kmax(lazy1):
    with pytest.raises(GreenKuboError):
        gk_induced(lazy1, make_fp((1,)), 100, k_max=0)


@pytest.mark.parametrize("M", [2, 3])
def test_subset_invariance_cyclic(M):
    d = drv.cyclic_chain(M)
    h = np.random.default_rng(M).normal(size=d.transition.shape[0])
    out = gk_subset_invariance(d, M, h)
    assert abs(out["difference"]) <= 1e-10 * max(1.0, abs(out["full"]))


def test_subset_invariance_zero(markov3):
    d = drv.cyclic_chain(2)
    out = gk_subset_invariance(d, 2, np.zeros(d.transition.shape[0]))
    assert out["full"] == 0.0 and out["induced"] == 0.0


def test_block_classes_rejects_aperiodic(markov3):
    with pytest.raises(GreenKuboError):
        block_classes(markov3, 2)


def test_subset_invariance_needs_markov(lazy1):
    with pytest.raises(GreenKuboError):
        gk_subset_invariance(lazy1, 2, [0.0])


def _line(t):
    return Observable.from_mapping({(1,): 1.0, (2,): t, (0,): -1.0 - t}, center=False)


def test_coboundary_surrogate_minimises(markov3):
    obs, s2, t = coboundary_surrogate(markov3)
    assert s2 > 0
    assert gk_extension(markov3, _line(t)).value == pytest.approx(s2, rel=1e-6)
    for dt in (-0.1, 0.1):
        assert gk_extension(markov3, _line(t + dt)).value > s2

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from zdx import driver as drv
from zdx.lattice import Observable, make_fp
from zdx.mlgm import (
    MlgmError,
    birkhoff_samples,
    clt_experiment,
    exact_second_moment,
    ml_moment,
    mlgm_moment,
    normalization_ratio,
    positive_stable,
    sample_ml,
    sample_mlgm,
    sampler_report,
    second_moment_ratio,
)


def test_mlgm_moment_values():
    assert mlgm_moment(0.5, 2) == pytest.approx(1.0)
    assert mlgm_moment(0.0, 4) == pytest.approx(6.0)
    assert mlgm_moment(0.5, 4) == pytest.approx(1.5 * math.pi)
    assert mlgm_moment(1.0, 4) == pytest.approx(3.0)
    assert mlgm_moment(0.3, 3) == 0.0


def test_ml_moment_values():
    assert ml_moment(0.0, 3) == pytest.approx(6.0)
    assert ml_moment(1.0, 5) == pytest.approx(1.0)
    assert ml_moment(0.5, 2) == pytest.approx(math.pi / 2)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 1.0), st.integers(1, 6))
def test_mlgm_moment_from_ml(gamma, h):
    # E X^{2h} = E Y^h E Z^{2h}
    gauss = math.prod(range(1, 2 * h, 2))
    assert mlgm_moment(gamma, 2 * h) == pytest.approx(ml_moment(gamma, h) * gauss, rel=1e-10)


def test_bad_gamma_rejected():
    with pytest.raises(MlgmError):
        ml_moment(1.5, 2)
    with pytest.raises(MlgmError):
        positive_stable(1.0, np.random.default_rng(0))


def test_positive_stable_laplace():
    rng = np.random.default_rng(0)
    S = positive_stable(0.5, rng, 400_000)
    for s in (0.5, 1.0, 2.0):
        assert np.mean(np.exp(-s * S)) == pytest.approx(math.exp(-s**0.5), abs=3e-3)


def test_sample_ml_half():
    Y = sample_ml(0.5, np.random.default_rng(1), 10**6)
    assert Y.mean() == pytest.approx(1.0, rel=0.01)
    assert np.mean(Y**2) == pytest.approx(math.pi / 2, rel=0.01)


def test_sample_ml_third():
    Y = sample_ml(1 / 3, np.random.default_rng(2), 10**6)
    assert np.mean(Y**2) == pytest.approx(ml_moment(1 / 3, 2), rel=0.02)


def test_sample_ml_endpoints():
    rng = np.random.default_rng(3)
    assert np.all(sample_ml(1.0, rng, 10) == 1.0)
    Y = sample_ml(0.0, rng, 10**5)
    assert Y.mean() == pytest.approx(1.0, rel=0.02)
    assert np.all(Y >= 0)


def test_sample_mlgm_symmetric():
    x = sample_mlgm(0.5, np.random.default_rng(4), 10**6)
    assert abs(x.mean()) < 5e-3
    assert np.mean(x**2) == pytest.approx(1.0, rel=0.01)


def test_sampler_report_deterministic():
    a = sampler_report(0.5, 10**4, seed=7)
    b = sampler_report(0.5, 10**4, seed=7)
    assert a == b
    assert a["moments"][2]["exact"] == pytest.approx(1.0)


def test_exact_second_moment_one_step(lazy1):
    # S_1 in {0, 1} with mass 3/4 where beta^2 = 1
    assert exact_second_moment(lazy1, make_fp((1,)), 1) == pytest.approx(0.75)


def test_exact_second_moment_zero(lazy1):
    assert exact_second_moment(lazy1, Observable.zero(1), 50) == 0.0


def test_exact_second_moment_brute_force(lazy1):
    # enumerate all 3^n paths
    n = 6
    rng_steps = np.array([-1, 0, 1])
    probs = np.array([0.25, 0.5, 0.25])
    beta = {1: 1.0, 0: -1.0}
    total = 0.0
    for idx in np.ndindex(*(3,) * n):
        pos = np.cumsum(rng_steps[list(idx)])
        z = sum(beta.get(int(x), 0.0) for x in pos)
        total += np.prod(probs[list(idx)]) * z * z
    assert exact_second_moment(lazy1, make_fp((1,)), n) == pytest.approx(total, rel=1e-12)


def test_exact_matches_monte_carlo(lazy1):
    obs = make_fp((1,))
    ns = [16, 256, 1024]
    Z = birkhoff_samples(lazy1, obs, ns, 100_000, seed=9)
    for i, n in enumerate(ns):
        v = Z[:, i] ** 2
        se = v.std(ddof=1) / math.sqrt(len(v))
        assert abs(v.mean() - exact_second_moment(lazy1, obs, n)) <= 4 * se


def test_exact_second_moment_guards(lazy2, markov3):
    with pytest.raises(MlgmError):
        exact_second_moment(lazy2, make_fp((1, 0)), 10**4)
    with pytest.raises(MlgmError):
        exact_second_moment(markov3, make_fp((1,)), 10)
    with pytest.raises(MlgmError):
        exact_second_moment(drv.lazy_1d(), make_fp((1,)), 0)


def test_birkhoff_reproducible(lazy1):
    a = birkhoff_samples(lazy1, make_fp((1,)), [8, 32], 1000, seed=1)
    b = birkhoff_samples(lazy1, make_fp((1,)), [32, 8], 1000, seed=1)
    assert a.shape == (1000, 2)
    assert np.array_equal(a, b)


def test_second_moment_ratio_approaches_one(lazy1):
    r = [second_moment_ratio(lazy1, make_fp((1,)), n) for n in (2**8, 2**12)]
    assert abs(r[1] - 1) < abs(r[0] - 1)


def test_normalization_ratio(lazy1):
    assert normalization_ratio(lazy1, 10**5) == pytest.approx(1.0, abs=0.01)


def test_clt_experiment_small(lazy1):
    out = clt_experiment(lazy1, make_fp((1,)), [64, 1024], 20_000, seed=3)
    assert out["gamma"] == pytest.approx(0.5)
    assert out["sigma_gk2"] == pytest.approx(6.0, abs=1e-6)
    assert [r["n"] for r in out["rows"]] == [64, 1024]
    assert out["note"] is None

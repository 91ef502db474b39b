import math

import numpy as np
import pytest

from zdx import driver as drv
from zdx.kernel import RenewalParams, g_asymptotic, g_fourier, g_fourier_many, g_series, g_series_many
from zdx.lattice import StableParams


def test_series_lazy_1d(lazy1):
    e = g_series(lazy1, (1,))
    assert e.converged
    assert e.value == pytest.approx(4.0, abs=1e-4)


def test_series_lazy_2d_unit(lazy2):
    assert g_series(lazy2, (1, 0)).value == pytest.approx(4.0, abs=1e-3)


def test_origin_is_zero(lazy1, lazy2):
    assert g_series(lazy1, (0,)).value == 0.0
    assert g_fourier(lazy1, (0,)).value == 0.0
    assert g_fourier(lazy2, (0, 0)).value == 0.0


def test_fourier_lazy_1d(lazy1):
    f = g_fourier(lazy1, (1,))
    assert f.value == pytest.approx(4.0, abs=1e-3)
    s = g_series(lazy1, (1,))
    assert abs(f.value - s.value) <= f.error_bound + s.error_bound


def test_skip_free_linear(lazy1):
    for e in g_series_many(lazy1, [(k,) for k in (2, 5, 10)]):
        assert e.value == pytest.approx(4 * abs(e.p[0]), abs=1e-4)


def test_fourier_matches_series_lazy_2d(lazy2):
    s = g_series(lazy2, (2, 1))
    f = g_fourier(lazy2, (2, 1))
    assert abs(s.value - f.value) <= s.error_bound + f.error_bound


def test_markov_series_matches_fourier(markov3):
    pts = [(1,), (2,), (3,)]
    for s, f in zip(g_series_many(markov3, pts), g_fourier_many(markov3, pts)):
        assert abs(s.value - f.value) <= s.error_bound + f.error_bound


def test_symmetry(markov3, lazy2):
    for d, p in ((markov3, (3,)), (lazy2, (2, 1))):
        a, b = g_series_many(d, [p, tuple(-c for c in p)])
        assert a.value == b.value


def test_values_nonnegative(markov3):
    for e in g_fourier_many(markov3, [(k,) for k in range(1, 6)]):
        assert e.value >= -e.error_bound


def test_asymptotic_lazy_1d():
    params = StableParams(2.0, 0.25)
    assert g_asymptotic(params, None, (10,)).value == pytest.approx(40.0)


def test_asymptotic_lazy_2d_log():
    params = StableParams(2.0, 0.5, sigma=np.eye(2) / 4)
    ren = RenewalParams()
    assert ren.I(math.exp(-3)) == pytest.approx(3.0)
    # (2 / (pi sqrt(det Sigma))) I(1/|p|) with |p| = e^3
    assert 2 / (math.pi * math.sqrt(np.linalg.det(params.sigma))) * ren.I(math.exp(-3)) == pytest.approx(24 / math.pi)
    val = g_asymptotic(params, ren, (20, 0)).value
    assert val == pytest.approx(8 / math.pi * math.log(20))


def test_asymptotic_stable_three_halves():
    params = StableParams(1.5, 1.0)
    val = g_asymptotic(params, None, (16,)).value
    assert val == pytest.approx(4 / ((math.sqrt(math.pi) / 2) * (math.sqrt(2) / 2)), rel=1e-12)
    assert val == pytest.approx(6.383, abs=1e-3)


def test_asymptotic_mismatch_rejected():
    with pytest.raises(ValueError):
        g_asymptotic(StableParams(2.0, 0.25), None, (1, 1))
    with pytest.raises(ValueError):
        g_asymptotic(StableParams(2.0, 0.5, sigma=np.eye(2) / 4), None, (3, 0))


def test_asymptotic_ratio_at_50(lazy1):
    r = g_series(lazy1, (50,)).value / g_asymptotic(StableParams(2.0, 0.25), None, (50,)).value
    assert abs(r - 1) <= 0.05


def test_lazy_2d_log_offset_bounded(lazy2):
    vals = g_series_many(lazy2, [(4, 0), (8, 0), (16, 0), (32, 0)])
    off = [v.value - 8 / math.pi * math.log(v.p[0]) for v in vals]
    assert max(off) - min(off) < 0.2


def test_series_partial_sums_within_bound(lazy1):
    e = g_series(lazy1, (3,))
    assert abs(e.diagnostics["partial_sum"] + e.diagnostics["tail"] - e.value) <= e.error_bound + 1e-12

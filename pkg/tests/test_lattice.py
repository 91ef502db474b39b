import math

import pytest
from hypothesis import given, strategies as st

from zdx.lattice import Observable, SlowlyVarying, StableParams, make_fp, validate_observable


def test_make_fp_1d():
    f = make_fp((1,))
    assert f.as_dict() == {(1,): 1.0, (0,): -1.0}


def test_make_fp_2d():
    f = make_fp((2, 1))
    assert f.as_dict() == {(2, 1): 1.0, (0, 0): -1.0}


def test_make_fp_rejects_origin():
    with pytest.raises(ValueError):
        make_fp((0,))


def test_validate_fp():
    r = validate_observable(make_fp((1,)), 2.0, 1, 0.5)
    assert r.zero_sum_residual == 0.0
    assert r.weighted_norm == 1.0
    assert r.accepted


def test_validate_two_sided():
    obs = Observable.from_mapping({(2,): 1, (-2,): 1, (0,): -2})
    r = validate_observable(obs, 2.0, 1, 0.5)
    assert r.zero_sum_residual == 0.0
    assert r.weighted_norm == 4.0


def test_validate_flags_nonzero_sum():
    r = validate_observable(Observable(1, ((1,),), (1.0,)), 2.0, 1, 0.5)
    assert r.zero_sum_residual == 1.0
    assert not r.accepted


def test_from_mapping_centres():
    obs = Observable.from_mapping({(1,): 3.0, (2,): 1.0})
    assert abs(obs.total) < 1e-12
    assert obs.weights == (1.0, -1.0)


def test_single_point_support_rejected():
    with pytest.raises(ValueError):
        Observable.from_mapping({(1,): 2.0})


def test_mixed_dimensions_rejected():
    with pytest.raises(ValueError):
        Observable(1, ((1,), (1, 0)), (1.0, -1.0))


def test_duplicate_points_rejected():
    with pytest.raises(ValueError):
        Observable(1, ((1,), (1,)), (1.0, -1.0))


def test_json_roundtrip():
    obs = Observable.from_mapping({(2, 0): 1, (-2, 1): 1, (0, 0): -2})
    assert Observable.from_json(obs.to_json()) == obs


@given(st.dictionaries(st.integers(-20, 20), st.floats(-5, 5, allow_nan=False), min_size=2, max_size=8))
def test_fp_and_centred_observables_have_zero_sum(mapping):
    obs = Observable.from_mapping({(k,): v for k, v in mapping.items()})
    assert abs(obs.total) <= 1e-12 * max(1.0, sum(abs(v) for v in mapping.values()))


@given(st.permutations([((2,), 1.0), ((-2,), 1.0), ((0,), -2.0), ((5,), 0.0)]))
def test_validate_is_permutation_invariant(items):
    obs = Observable(1, tuple(p for p, _ in items), tuple(w for _, w in items))
    r = validate_observable(obs, 2.0, 1, 0.5)
    assert r.weighted_norm == 4.0
    assert r.zero_sum_residual == 0.0


def test_stable_params_validation():
    StableParams(2.0, 0.25)
    with pytest.raises(ValueError):
        StableParams(2.5, 0.25)
    with pytest.raises(ValueError):
        StableParams(2.0, -1.0)
    with pytest.raises(ValueError):
        StableParams(2.0, 1.0, sigma=[[1.0, 2.0], [2.0, 1.0]])
    p = StableParams(2.0, 0.5, sigma=[[0.25, 0], [0, 0.25]])
    assert p.d == 2 and p.gamma == 0.0
    assert StableParams(2.0, 0.25).gamma == 0.5


def test_slowly_varying():
    assert SlowlyVarying()(10.0) == 1.0
    assert SlowlyVarying("log")(math.e**2) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        SlowlyVarying("power")

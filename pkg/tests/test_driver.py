import numpy as np
import pytest

from zdx import driver as drv
from zdx.rng import split_counts, stream


def test_lazy_1d_one_and_two_steps(lazy1):
    t = drv.occupation_probs(lazy1, 2)
    assert t.prob(1, (0,)) == 0.5
    assert t.prob(1, (1,)) == 0.25 and t.prob(1, (-1,)) == 0.25
    assert t.prob(2, (0,)) == pytest.approx(3 / 8, abs=1e-15)


def test_lazy_2d_two_steps(lazy2):
    t = drv.occupation_probs(lazy2, 2)
    assert t.prob(2, (0, 0)) == pytest.approx(5 / 16, abs=1e-15)


def test_return_mass(lazy1):
    assert drv.return_mass(lazy1, 1) == 1.0
    assert drv.return_mass(lazy1, 2) == pytest.approx(1.5, abs=1e-15)
    assert drv.return_mass(lazy1, 3) == pytest.approx(1.875, abs=1e-15)


@pytest.mark.parametrize("name", ["lazy_1d", "lazy_2d", "markov_3state"])
def test_mass_conserved(name):
    d = drv.fixtures()[name]
    t = drv.occupation_probs(d, 12)
    for k in range(13):
        assert t.mass(k) == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("name", ["lazy_1d", "lazy_2d"])
def test_symmetric_drivers_give_symmetric_tables(name):
    d = drv.fixtures()[name]
    t = drv.occupation_probs(d, 10)
    flipped = t.probs[:, ::-1] if d.d == 1 else t.probs[:, ::-1, ::-1]
    assert np.array_equal(t.probs, flipped)


def test_markov_fft_matches_stencil(markov3):
    k = 40
    dist, _ = drv.distribution_at(markov3, k, 40)
    t = drv.occupation_probs(markov3, k)
    assert np.max(np.abs(dist - t.probs[k])) < 1e-14


def test_state_resolved_marginalizes(markov3):
    t = drv.occupation_probs(markov3, 8, state_resolved=True)
    assert np.allclose(t.state_probs.sum(axis=1), t.probs, atol=1e-15)


def test_iid_validation():
    with pytest.raises(drv.DriverError):
        drv.IidStep.from_atoms({(1,): 0.5, (0,): 0.5})  # nonzero mean
    with pytest.raises(drv.DriverError):
        drv.IidStep.from_atoms({(1,): 0.5, (-1,): 0.4})  # not normalized


def test_markov_validation():
    P = np.array([[1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(drv.DriverError):
        drv.MarkovDriver(P, np.array([[1], [-1]]))  # reducible
    P = np.array([[0.5, 0.5], [0.5, 0.5]])
    with pytest.raises(drv.DriverError):
        drv.MarkovDriver(P, np.array([[1], [0]]))  # nonzero mean


def test_markov_invariants(markov3):
    mu = markov3.stationary
    assert np.abs(mu @ markov3.transition - mu).sum() <= 1e-10
    assert abs(mu @ markov3.step[:, 0]) <= 1e-10
    assert np.allclose(markov3.transition.sum(axis=1), 1.0, atol=1e-12)


def test_json_roundtrip(markov3, lazy2):
    for d in (markov3, lazy2):
        again = drv.driver_from_json(d.to_json())
        assert again.to_json() == d.to_json()
    with pytest.raises(drv.DriverError):
        drv.driver_from_json({"kind": "levy"})


def test_degenerate_one_atom_walk():
    d = drv.IidStep.from_atoms({(0,): 1.0})
    g = stream(0, "degenerate")
    traj = drv.sample_trajectory(d, 50, g)
    assert np.all(traj.positions == 0)


def test_step_sampling_is_reproducible(lazy1):
    a = drv.sample_trajectory(lazy1, 200, stream(7, "t")).positions
    b = drv.sample_trajectory(lazy1, 200, stream(7, "t")).positions
    assert np.array_equal(a, b)


def test_markov_step_is_image_of_next_state(markov3):
    g = stream(3, "markov")
    state = 0
    for _ in range(200):
        prev = state
        step, state = drv.step_sample(markov3, g, state)
        assert markov3.transition[prev, state] > 0
        assert tuple(step) == tuple(markov3.step[state])


def test_trajectory_increments_in_support(markov3, lazy2):
    for d in (markov3, lazy2):
        tr = drv.sample_trajectory(d, 300, stream(1, "inc"))
        inc = np.diff(tr.positions, axis=0)
        support = {tuple(a) for a in (d.points if d.kind == "iid" else d.step)}
        assert all(tuple(x) in support for x in inc)


def test_monte_carlo_matches_occupation_at_k8(lazy2):
    n = 10**6
    k = 8
    g = stream(11, "mc-occupation")
    steps = g.choice(len(lazy2.probs), size=(n, k), p=lazy2.probs)
    S = lazy2.points[steps].sum(axis=1)
    t = drv.occupation_probs(lazy2, k)
    R = t.box_radius
    counts = np.zeros_like(t.probs[k])
    np.add.at(counts, (S[:, 0] + R, S[:, 1] + R), 1)
    freq = counts / n
    p = t.probs[k]
    assert np.all(np.abs(freq - p) <= 4 * np.sqrt(p * (1 - p) / n) + 1e-12)


def test_split_counts():
    assert split_counts(10, 3) == [4, 3, 3]
    assert sum(split_counts(10**6 + 1, 8)) == 10**6 + 1

"""Window emission and buffer sampling semantics."""

import numpy as np
import pytest

from msacl.replay import NStepCollector, ReplayBuffer, Transition


def make_transition(t: int, terminated: bool = False) -> Transition:
    s = np.array([float(t), 0.0])
    s1 = np.array([float(t + 1), 0.0])
    return Transition(x=s, u=np.array([0.1 * t]), reward=float(-t),
                      logp_behavior=-1.0, x_next=s1, s=s, s_next=s1,
                      terminated=terminated)


def test_window_emission_schedule():
    col = NStepCollector(10)
    for t in range(1, 10):
        assert col.push(make_transition(t)) is None
    w = col.push(make_transition(10))
    assert w is not None
    assert np.array_equal(w["s"][:, 0], np.arange(1.0, 11.0))
    w2 = col.push(make_transition(11))
    assert np.array_equal(w2["s"][:, 0], np.arange(2.0, 12.0))
    # consecutive windows overlap in n-1 transitions
    assert np.array_equal(w["s"][1:], w2["s"][:-1])


def test_window_is_a_copy():
    col = NStepCollector(2)
    col.push(make_transition(0))
    w = col.push(make_transition(1))
    col.push(make_transition(2))
    assert np.array_equal(w["s"][:, 0], [0.0, 1.0])


def test_clear_requires_fresh_fill():
    col = NStepCollector(3)
    col.push(make_transition(0))
    col.push(make_transition(1))
    col.clear()
    assert len(col) == 0
    assert col.push(make_transition(5)) is None
    assert col.push(make_transition(6)) is None
    assert col.push(make_transition(7)) is not None


def test_n_equal_one_emits_every_push():
    col = NStepCollector(1)
    for t in range(3):
        w = col.push(make_transition(t))
        assert w is not None and w["s"].shape == (1, 2)


def test_chain_break_rejected():
    col = NStepCollector(4)
    col.push(make_transition(0))
    with pytest.raises(ValueError):
        col.push(make_transition(5))


def test_packed_fields_and_flags():
    col = NStepCollector(2)
    col.push(make_transition(3))
    w = col.push(make_transition(4, terminated=True))
    assert w["terminated"].tolist() == [False, True]
    assert w["reward"].tolist() == [-3.0, -4.0]
    assert w["logp_behavior"].shape == (2,)
    assert w["u"].shape == (2, 1)


def test_buffer_eviction_is_fifo():
    buf = ReplayBuffer(capacity=3, warm_size=1)
    col = NStepCollector(1)
    for t in range(4):
        buf.add(col.push(make_transition(t)))
    assert len(buf) == 3
    stored = sorted(p["s"][0, 0] for p in buf._store)
    assert stored == [1.0, 2.0, 3.0]


def test_sampling_rules():
    buf = ReplayBuffer(capacity=10, warm_size=1)
    rng = np.random.default_rng(0)
    with pytest.raises(RuntimeError):
        buf.sample(1, rng)
    col = NStepCollector(1)
    buf.add(col.push(make_transition(7)))
    batch = buf.sample(3, rng)
    assert batch.size == 3 and batch.n == 1
    assert np.all(batch.s[:, 0, 0] == 7.0)

    cold = ReplayBuffer(capacity=10, warm_size=5)
    cold.add(col.push(make_transition(8)))
    with pytest.raises(RuntimeError):
        cold.sample(1, rng)


def test_sampling_is_uniform():
    buf = ReplayBuffer(capacity=10, warm_size=1)
    for t in range(10):
        col = NStepCollector(1)
        buf.add(col.push(make_transition(t)))
    rng = np.random.default_rng(1)
    draws = 100_000
    batch = buf.sample(draws, rng)
    sigma = np.sqrt(0.1 * 0.9 / draws)
    for t in range(10):
        freq = np.mean(batch.s[:, 0, 0] == float(t))
        assert abs(freq - 0.1) < 3 * sigma


def test_all_states_concatenation():
    buf = ReplayBuffer(capacity=4, warm_size=1)
    col = NStepCollector(3)
    for t in range(5):
        w = col.push(make_transition(t))
        if w:
            buf.add(w)
    batch = buf.sample(2, np.random.default_rng(2))
    allstates = batch.all_states()
    assert allstates.shape == (2, 4, 2)
    assert np.array_equal(allstates[:, -1], batch.s_next[:, -1])
    assert np.array_equal(allstates[:, :-1], batch.s)

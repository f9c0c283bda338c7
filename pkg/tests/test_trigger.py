import copy

import numpy as np
import pytest

from errors import ConfigError, ConsistencyError, InvalidArgumentError
from load_config import build_config
from sim import run
from trigger import (
    TriggerState,
    advance_sampling_instant,
    check_phi,
    events_frame,
    measurement_vectors,
    min_inter_event_gap,
    phi_weight,
    should_trigger,
)


def test_should_trigger_examples():
    assert should_trigger([0.1, 0.0], [1.0, 0.0], np.eye(2), 0.1) is False
    assert should_trigger([0.5, 0.0], [1.0, 0.0], np.eye(2), 0.1) is True
    # equality does not fire
    assert should_trigger([0.5], [1.0], np.eye(1), 0.25) is False
    with pytest.raises(InvalidArgumentError):
        should_trigger([0.1, 0.0, 0.0], [1.0, 0.0], np.eye(2), 0.1)


def test_phi_weight_and_validation():
    W = phi_weight([[2.0, 0.5], [0.5, 1.0]], 2)
    assert W.shape == (4, 4)
    assert W[0, 2] == 0.5 and W[1, 3] == 0.5 and W[0, 1] == 0.0
    with pytest.raises(ConfigError):
        check_phi([[1.0, 0.0], [0.0, -1.0]])
    with pytest.raises(ConfigError):
        check_phi([[1.0, 0.3], [0.0, 1.0]])
    with pytest.raises(ConfigError):
        TriggerState(N=2, n=1, h=0.1, zeta=0.1, Phi=np.eye(3))
    with pytest.raises(ConfigError):
        TriggerState(N=2, n=1, h=0.1, zeta=[0.1, -0.1], Phi=np.eye(2))


def test_measurement_vectors_example(unit_edge):
    ts = TriggerState(N=2, n=1, h=0.1, zeta=0.1, Phi=np.eye(2))
    ts.held_y = np.array([[[0.0], [1.0]], [[0.0], [0.0]]])
    live = np.array([[[0.0], [0.5]], [[0.0], [0.0]]])
    x = np.zeros((2, 1))
    out = measurement_vectors(ts, live, x, unit_edge, 0, 0.3)
    assert out["z_i"][1] == pytest.approx(2.0)
    assert out["e_i"][1] == pytest.approx(0.5)
    assert out["delta_i"][1] == pytest.approx(0.5)
    with pytest.raises(InvalidArgumentError):
        measurement_vectors(ts, live, x, unit_edge, 0, 0.35)
    with pytest.raises(InvalidArgumentError):
        measurement_vectors(ts, live, x, None, 0, 0.3)


def test_measurement_vectors_before_first_sample(unit_edge):
    ts = TriggerState(N=2, n=1, h=0.1, zeta=0.1, Phi=np.eye(2))
    with pytest.raises(ConsistencyError):
        measurement_vectors(ts, np.zeros((2, 2, 1)), np.zeros((2, 1)), unit_edge, 0, 0.0)


def test_first_sample_fires_everyone(ring_chord, rng):
    ts = TriggerState(N=6, n=2, h=0.1, zeta=0.1, Phi=np.eye(6))
    y = rng.normal(size=(6, 6, 2))
    fired = advance_sampling_instant(ts, y, rng.normal(size=(6, 2)), ring_chord, 0)
    assert fired == list(range(6))
    assert np.array_equal(ts.held_y, y)
    assert all(ev == [0.0] for ev in ts.events)
    assert ts.samples.tolist() == [1] * 6
    # right after a broadcast the mismatch is zero
    out = measurement_vectors(ts, y, np.zeros((6, 2)), ring_chord, 2, 0.0)
    assert np.allclose(out["e_i"], 0.0)


def test_no_event_at_exact_consensus(ring_chord, rng):
    ts = TriggerState(N=6, n=2, h=0.1, zeta=0.1, Phi=np.eye(6))
    x = rng.normal(size=(6, 2))
    y = np.broadcast_to(x, (6, 6, 2)).copy()
    advance_sampling_instant(ts, y, x, ring_chord, 0)
    for q in range(1, 5):
        assert advance_sampling_instant(ts, y, x, ring_chord, q) == []
    assert ts.samples.tolist() == [5] * 6
    assert min_inter_event_gap(ts) == float("inf")


def test_vectorized_decision_matches_rule(ring_chord, rng):
    ts = TriggerState(N=6, n=2, h=0.1, zeta=[0.1, 0.05, 0.1, 0.05, 0.1, 0.05], Phi=np.eye(6))
    x = rng.normal(size=(6, 2))
    y0 = np.broadcast_to(x, (6, 6, 2)) + 0.1 * rng.normal(size=(6, 6, 2))
    advance_sampling_instant(ts, y0, x, ring_chord, 0)
    y1 = y0 + 0.05 * rng.normal(size=(6, 6, 2))
    held = ts.held_y.copy()
    expected = []
    for i in range(6):
        out = measurement_vectors(ts, y1, x, ring_chord, i, 0.1)
        if should_trigger(out["e_i"], out["z_i"], ts.Phi, ts.zeta[i]):
            expected.append(i)
    fired = advance_sampling_instant(ts, y1, x, ring_chord, 1)
    assert fired == expected
    for i in range(6):
        assert np.array_equal(ts.held_y[i], y1[i] if i in fired else held[i])


def test_samples_must_advance(ring_chord, rng):
    ts = TriggerState(N=6, n=2, h=0.1, zeta=0.1, Phi=np.eye(6))
    y = rng.normal(size=(6, 6, 2))
    advance_sampling_instant(ts, y, np.zeros((6, 2)), ring_chord, 0)
    with pytest.raises(InvalidArgumentError):
        advance_sampling_instant(ts, y, np.zeros((6, 2)), ring_chord, 0)


def test_events_frame_order():
    ts = TriggerState(N=2, n=1, h=0.1, zeta=0.1, Phi=np.eye(2))
    ts.events = [[0.0, 0.2], [0.0, 0.1]]
    frame = events_frame(ts)
    assert list(frame.columns) == ["t", "player"]
    assert frame["t"].tolist() == [0.0, 0.0, 0.1, 0.2]
    assert frame["player"].tolist() == [1, 2, 2, 1]
    assert min_inter_event_gap(ts) == pytest.approx(0.1)


@pytest.fixture
def short_toy(toy_raw):
    raw = copy.deepcopy(toy_raw)
    raw["horizon"] = 0.3
    return raw


def test_events_live_on_the_sampling_grid(short_toy):
    cfg = build_config(short_toy, quiet=True)
    traj = run(cfg)
    ts = traj.trigger
    h = cfg.trigger["h"]
    assert ts.samples.tolist() == [300, 300]
    for i, ev in enumerate(ts.events):
        ev = np.array(ev)
        assert ev[0] == 0.0
        assert len(ev) <= ts.samples[i]
        assert np.all(np.abs(ev / h - np.round(ev / h)) < 1e-9)
    assert min_inter_event_gap(ts) >= h - 1e-12


def test_larger_threshold_fires_less(short_toy):
    base = build_config(short_toy, quiet=True)
    raw = copy.deepcopy(short_toy)
    raw["trigger"]["zeta"] = [0.1, 0.1]
    loose = build_config(raw, quiet=True)
    n_base = sum(len(ev) for ev in run(base).trigger.events)
    n_loose = sum(len(ev) for ev in run(loose).trigger.events)
    assert n_loose <= n_base

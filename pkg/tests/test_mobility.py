import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mobiroute.errors import ConfigError, OutOfRangeError, TraceParseError
from mobiroute.mobility import (
    MobilityConfig,
    MobilityTrace,
    PositionSampler,
    adjacency,
    connectivity_stats,
    generate_rwp_trace,
    neighbors_at,
    parse_trace,
    position_at,
    positions_at,
    serialize_trace,
)


def small_trace(n=25, duration=2000.0, seed=7):
    return generate_rwp_trace(MobilityConfig(device_count=n, duration=duration, seed=seed))


# -- config ---------------------------------------------------------------------


@pytest.mark.parametrize("kw", [
    dict(area=(0, 500)),
    dict(area=(500, -1)),
    dict(mean_speed=2.0, speed_delta=2.0),
    dict(speed_delta=-1.0),
    dict(device_count=0),
    dict(duration=0.0),
])
def test_invalid_config_rejected(kw):
    with pytest.raises(ConfigError):
        MobilityConfig(**kw)


# -- generation -----------------------------------------------------------------


def test_generation_is_deterministic():
    a = serialize_trace(small_trace(seed=7))
    b = serialize_trace(small_trace(seed=7))
    assert a == b
    assert a != serialize_trace(small_trace(seed=8))


def test_waypoints_inside_area_and_cover_duration():
    tr = small_trace()
    assert tr.device_count == 25
    for w in tr.waypoints:
        assert w[0, 0] == 0.0
        assert np.all(np.diff(w[:, 0]) > 0)
        assert w[-1, 0] >= tr.duration
        assert np.all(w[:, 1:] >= 0) and np.all(w[:, 1] <= 500) and np.all(w[:, 2] <= 500)


def _leg_speeds(w):
    d = np.hypot(np.diff(w[:, 1]), np.diff(w[:, 2]))
    return d / np.diff(w[:, 0])


def test_later_leg_speeds_uniform_in_range():
    tr = small_trace(n=50, duration=20000.0)
    speeds = np.concatenate([_leg_speeds(w)[1:] for w in tr.waypoints])
    assert speeds.min() >= 1.0 - 1e-9 and speeds.max() <= 5.0 + 1e-9
    assert abs(speeds.mean() - 3.0) < 0.1


def _mc_stationary_speed(rng, n_walkers=400, horizon=20000.0, samples=40):
    """Brute force: start walkers uniformly, let them run far past the
    transient and read the speed of the leg in progress at random times."""
    out = []
    for _ in range(n_walkers):
        x, y = rng.random(2) * 500
        t = 0.0
        times = np.sort(rng.uniform(horizon / 2, horizon, samples))
        i = 0
        while i < samples:
            tx, ty = rng.random(2) * 500
            s = rng.uniform(1.0, 5.0)
            t_end = t + math.hypot(tx - x, ty - y) / s
            while i < samples and times[i] < t_end:
                out.append(s)
                i += 1
            t, x, y = t_end, tx, ty
    return float(np.mean(out))


def test_initial_speeds_follow_stationary_distribution():
    oracle = _mc_stationary_speed(np.random.default_rng(0))
    # the speed of the first leg is the speed in progress at t=0
    tr = generate_rwp_trace(MobilityConfig(device_count=4000, duration=1.0, seed=3))
    first = np.array([_leg_speeds(w)[0] for w in tr.waypoints])
    assert abs(first.mean() - oracle) / oracle < 0.05
    # and it is visibly below the uniform-start mean of 3
    assert first.mean() < 2.8


def test_initial_positions_not_uniform():
    # stationary RWP concentrates devices towards the center
    tr = generate_rwp_trace(MobilityConfig(device_count=4000, duration=1.0, seed=4))
    p = np.array([w[0, 1:] for w in tr.waypoints])
    r = np.hypot(p[:, 0] - 250, p[:, 1] - 250)
    uniform_mean = 250 * (math.sqrt(2) + math.asinh(1)) / 3  # mean distance to center of a square
    assert r.mean() < 0.9 * uniform_mean


# -- text format ----------------------------------------------------------------


def test_round_trip():
    tr = small_trace(n=5)
    back = parse_trace(serialize_trace(tr))
    assert back == tr
    assert back.duration == tr.duration and back.area == tr.area


def test_one_line_two_waypoints():
    tr = parse_trace("0 0 0 10 10 0\n")
    assert tr.device_count == 1
    assert tr.waypoints[0].shape == (2, 3)


@pytest.mark.parametrize("text, line", [
    ("0 0 0 5 3\n", 1),
    ("0 0 0 10 1 1\n0 0 0 5 3\n", 2),
    ("0 0 0 x 1 1\n", 1),
    ("0 0 0 0 1 1\n", 1),
    ("1 0 0 5 1 1\n", 1),
    ("0 0 0 nan 1 1\n", 1),
])
def test_malformed_lines_report_line_number(text, line):
    with pytest.raises(TraceParseError) as err:
        parse_trace(text)
    assert err.value.line == line
    assert f"line {line}" in str(err.value)


def test_out_of_area_rejected():
    with pytest.raises(TraceParseError):
        parse_trace("0 0 0 10 600 0\n", area=(500, 500))


def test_short_trace_rejected():
    with pytest.raises(TraceParseError):
        parse_trace("0 0 0 10 1 0\n", duration=20)


# -- interpolation --------------------------------------------------------------


def trace_of(*rows, duration=None):
    w = [np.array(r, dtype=float).reshape(-1, 3) for r in rows]
    return MobilityTrace((500.0, 500.0), duration or min(x[-1, 0] for x in w), w)


def test_midpoint_and_hand_computed_interpolation():
    tr = trace_of([0, 0, 0, 10, 10, 0], [0, 0, 0, 4, 8, 4])
    assert position_at(tr, 0, 5) == (5.0, 0.0)
    assert position_at(tr, 1, 1) == (2.0, 1.0)


def test_exact_waypoint_time():
    tr = trace_of([0, 1, 2, 3, 7, 9, 6, 2, 2])
    assert position_at(tr, 0, 3) == (7.0, 9.0)
    assert position_at(tr, 0, 6) == (2.0, 2.0)


def test_out_of_range_time():
    tr = trace_of([0, 0, 0, 10, 10, 0])
    with pytest.raises(OutOfRangeError):
        position_at(tr, 0, 10.5)
    with pytest.raises(OutOfRangeError):
        position_at(tr, 0, -1)


def test_vectorized_positions_match_scalar():
    tr = small_trace(n=6)
    times = np.linspace(0, tr.duration, 37)
    pos = positions_at(tr, times)
    for i, t in enumerate(times):
        for v in range(6):
            assert np.allclose(pos[i, v], position_at(tr, v, t), atol=1e-9)
    sampler = PositionSampler(tr, block=100)
    for t in (0, 99, 100, 1500, 999, 2000):
        assert np.allclose(sampler(t), positions_at(tr, [t])[0])


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 1999), st.floats(1e-3, 1.0))
def test_positions_continuous(t, eps):
    tr = small_trace(n=3)
    for v in range(3):
        a = np.array(position_at(tr, v, t))
        b = np.array(position_at(tr, v, t + eps))
        assert np.linalg.norm(a - b) <= 5.0 * eps + 1e-9


# -- neighborhoods --------------------------------------------------------------


def test_boundary_distance_is_in_range():
    tr = trace_of([0, 0, 0, 10, 0, 0], [0, 30, 40, 10, 30, 40])
    assert neighbors_at(tr, 0, 3, 50.0) == {1}
    assert neighbors_at(tr, 0, 3, 49.999) == set()


def test_single_device_has_no_neighbors():
    tr = trace_of([0, 0, 0, 10, 0, 0])
    assert neighbors_at(tr, 0, 1, 100) == set()


def test_adjacency_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(20):
        pos = rng.random((25, 2)) * 500
        adj = adjacency(pos, 80.0)
        for i in range(25):
            for j in range(25):
                expect = i != j and math.dist(pos[i], pos[j]) <= 80.0
                assert adj[i, j] == expect
    tr = small_trace()
    for v in range(25):
        brute = {u for u in range(25) if u != v and math.dist(position_at(tr, v, 123), position_at(tr, u, 123)) <= 50}
        assert neighbors_at(tr, v, 123, 50) == brute


def test_symmetric_and_monotone_in_range():
    tr = small_trace()
    sampler = PositionSampler(tr)
    for t in range(0, 2000, 97):
        p = sampler(t)
        prev = None
        for r in (30, 40, 50, 60, 70, 80):
            adj = adjacency(p, r)
            assert np.array_equal(adj, adj.T)
            if prev is not None:
                assert np.all(adj.sum(axis=1) >= prev.sum(axis=1))
            prev = adj


def test_connectivity_extremes():
    pts = [[0, 100, 100, 10, 100, 100]] * 4
    tr = trace_of(*pts)
    s = connectivity_stats(tr, 10.0, [0, 5])
    assert s.mean_degree == 3 and s.mean_largest_component == 1.0
    tr = small_trace(n=10)
    s = connectivity_stats(tr, 0.0, [0, 100])
    assert s.mean_degree == 0 and s.mean_largest_component == pytest.approx(0.1)
    with pytest.raises(ConfigError):
        connectivity_stats(tr, 10.0, [])


def test_connectivity_degree_monotone_in_range():
    tr = small_trace()
    degs = [connectivity_stats(tr, r, range(0, 2000, 50)).mean_degree for r in (30, 40, 50, 60, 70, 80)]
    assert all(b >= a for a, b in zip(degs, degs[1:]))

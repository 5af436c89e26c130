import math

import pytest
from hypothesis import given, settings, strategies as st

from thzwdc.collectives import (
    AlphaBetaCost,
    CollectiveError,
    CollectiveSpec,
    activate_ring,
    allreduce_ring_time,
    broadcast_steps,
    broadcast_tree_time,
    ring_positions,
    simulate_collective,
)
from thzwdc.fabric import Rack, Topology, build_fat_tree
from thzwdc.simcore import Engine


def ring(n, spacing=2.0, rate=400e9):
    topo = Topology(Rack(f"r{i}", x, y, 2) for i, (x, y) in enumerate(ring_positions(n, spacing)))
    nodes = topo.rack_ids()
    activate_ring(topo, nodes, rate)
    return topo, nodes


def test_closed_form_two_nodes():
    cost = AlphaBetaCost.from_rate(50.0, 400e9)
    assert allreduce_ring_time(CollectiveSpec("allreduce-ring", 2, 8e6), cost) == pytest.approx(20_100.0)


def test_closed_form_four_nodes():
    cost = AlphaBetaCost.from_rate(50.0, 400e9)
    assert allreduce_ring_time(CollectiveSpec("allreduce-ring", 4, 4e6), cost) == pytest.approx(15_300.0)


def test_small_message_limit_is_latency_only():
    cost = AlphaBetaCost.from_rate(50.0, 400e9)
    t = allreduce_ring_time(CollectiveSpec("allreduce-ring", 8, 1e-9), cost)
    assert t == pytest.approx(2 * 7 * 50.0, rel=1e-12)


@pytest.mark.parametrize("n,fanout,steps", [(2, 2, 1), (8, 2, 3), (9, 8, 1), (5, 4, 1), (4, 1, 3), (16, 3, 3)])
def test_broadcast_steps(n, fanout, steps):
    assert broadcast_steps(n, fanout) == steps


def test_broadcast_time():
    cost = AlphaBetaCost.from_rate(10.0, 1e9)
    spec = CollectiveSpec("broadcast-tree", 8, 100.0)
    assert broadcast_tree_time(spec, cost, 2) == pytest.approx(3 * (10.0 + 100.0))


def test_invalid_specs():
    with pytest.raises(ValueError):
        CollectiveSpec("allreduce-ring", 1, 1.0)
    with pytest.raises(ValueError):
        CollectiveSpec("allreduce-ring", 4, 0.0)
    with pytest.raises(ValueError):
        CollectiveSpec("gather", 4, 1.0)
    with pytest.raises(ValueError):
        AlphaBetaCost(-1.0, 1.0)
    with pytest.raises(ValueError):
        AlphaBetaCost(1.0, 0.0)
    with pytest.raises(ValueError):
        broadcast_steps(4, 0)


def test_ring_positions_spacing():
    for n in (2, 3, 8, 16):
        pts = ring_positions(n, 2.5)
        for i in range(n if n > 2 else 1):
            a, b = pts[i], pts[(i + 1) % n]
            assert math.dist(a, b) == pytest.approx(2.5, rel=1e-9)


@pytest.mark.parametrize("n", [2, 4, 8, 16])
def test_simulated_ring_matches_closed_form(n):
    topo, nodes = ring(n)
    spec = CollectiveSpec("allreduce-ring", n, 8e6)
    res = simulate_collective(spec, topo, Engine(), nodes=nodes, medium="thz")
    analytic = allreduce_ring_time(spec, AlphaBetaCost.from_link("thz", 2.0, 400e9))
    assert res.completion_ns == pytest.approx(analytic, rel=0.01)
    assert len(res.steps) == 2 * (n - 1)


def test_two_node_ring_is_two_exchanges():
    topo, nodes = ring(2)
    spec = CollectiveSpec("allreduce-ring", 2, 8e6)
    res = simulate_collective(spec, topo, Engine(), nodes=nodes, medium="thz")
    assert len(res.steps) == 2
    assert all(len(s.sends) == 2 for s in res.steps)
    one_way = res.steps[0].sends[0][2]
    assert res.completion_ns == pytest.approx(2 * one_way, abs=1.0)


def test_broadcast_simulation_matches_closed_form():
    topo, nodes = ring(3)
    spec = CollectiveSpec("broadcast-tree", 3, 1e6)
    res = simulate_collective(spec, topo, Engine(), nodes=nodes, medium="thz", fanout=2)
    cost = AlphaBetaCost.from_link("thz", 2.0, 400e9)
    assert res.completion_ns == pytest.approx(broadcast_tree_time(spec, cost, 2), rel=0.01)


def test_thz_ring_beats_switched_fat_tree():
    spec = CollectiveSpec("allreduce-ring", 8, 8e6)
    topo, nodes = ring(8)
    thz = simulate_collective(spec, topo, Engine(), nodes=nodes, medium="thz")
    ft = build_fat_tree(8, 3, 400e9)
    opt = simulate_collective(spec, ft, Engine(), nodes=ft.rack_ids(), medium="optical")
    assert thz.completion_ns < opt.completion_ns


def test_missing_ring_link_is_an_error():
    topo = Topology(Rack(f"r{i}", float(i), 0.0, 2) for i in range(3))
    with pytest.raises(CollectiveError):
        simulate_collective(CollectiveSpec("allreduce-ring", 3, 1e3), topo, Engine(), medium="thz")
    with pytest.raises(CollectiveError):
        simulate_collective(CollectiveSpec("allreduce-ring", 4, 1e3), topo, Engine(), medium="thz")


def test_bandwidth_limit_ratio():
    for n in (2, 4, 8, 16):
        cost = AlphaBetaCost.from_rate(50.0, 400e9)
        m = 1e15
        t = allreduce_ring_time(CollectiveSpec("allreduce-ring", n, m), cost)
        expect = 2 * (n - 1) / n * cost.beta_ns_per_bit
        assert t / m == pytest.approx(expect, rel=1e-3)


pos = st.floats(1.0, 1e9)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 64), pos, st.floats(0.0, 1e4), st.floats(0.001, 10.0), st.floats(1.01, 10.0))
def test_ring_time_monotone(n, m, alpha, beta, k):
    base = allreduce_ring_time(CollectiveSpec("allreduce-ring", n, m), AlphaBetaCost(alpha, beta))
    assert allreduce_ring_time(CollectiveSpec("allreduce-ring", n, m * k), AlphaBetaCost(alpha, beta)) > base
    assert allreduce_ring_time(CollectiveSpec("allreduce-ring", n, m), AlphaBetaCost(alpha + 1, beta)) > base
    assert allreduce_ring_time(CollectiveSpec("allreduce-ring", n, m), AlphaBetaCost(alpha, beta * k)) > base
    # fixed per-node share: more nodes, more steps
    grown = allreduce_ring_time(CollectiveSpec("allreduce-ring", n + 1, m / n * (n + 1)), AlphaBetaCost(alpha, beta))
    assert grown > base

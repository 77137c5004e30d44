import random

import pytest
from hypothesis import given, settings, strategies as st

from conftest import line_layout, make_scenario, node, run_layout
from wsnsim.core import Path, distance, rounded_distance
from wsnsim.engine import Simulator
from wsnsim.routing import (
    NextHop,
    NextHopKind,
    RouteCacheEntry,
    build_view,
    kmax_path,
    project_path,
    select_next_hop,
)
from wsnsim.topology import ScriptedLayout


def view_of(owner, nodes, exclude=frozenset()):
    return build_view(owner, nodes, exclude)


# --- next hop selection ---
def test_direct_when_destination_is_a_neighbour():
    nodes = [node(0, 0, 0), node(1, 100, 0), node(2, 250, 0)]
    hop = select_next_hop(nodes[0], 2, view_of(nodes[0], nodes), nodes[2].pos)
    assert hop == NextHop.direct(2)


def test_farthest_progressing_neighbour_wins():
    nodes = [node(0, 0, 0), node(1, 100, 0), node(2, 280, 0), node(3, 600, 0)]
    hop = select_next_hop(nodes[0], 3, view_of(nodes[0], nodes), nodes[3].pos)
    assert hop.kind is NextHopKind.RELAY and hop.node == 2 and hop.ties == ()


def test_farther_but_backwards_neighbour_is_ignored():
    nodes = [node(0, 0, 0), node(1, -290, 0), node(2, 50, 0), node(3, 600, 0)]
    hop = select_next_hop(nodes[0], 3, view_of(nodes[0], nodes), nodes[3].pos)
    assert hop.node == 2


def test_equal_distance_prefers_energy_then_lower_id():
    nodes = [node(0, 0, 0), node(1, 200, 50), node(2, 200, -50), node(3, 600, 0)]
    hop = select_next_hop(nodes[0], 3, view_of(nodes[0], nodes), nodes[3].pos)
    assert hop.node == 1 and hop.ties == (1, 2)
    nodes[2].energy_j = 0.9
    hop = select_next_hop(nodes[0], 3, view_of(nodes[0], nodes), nodes[3].pos)
    assert hop.node == 2 and hop.ties == (1, 2)


def test_no_progress_in_a_void():
    nodes = [node(0, 0, 0), node(1, -200, 0), node(2, 900, 0)]
    hop = select_next_hop(nodes[0], 2, view_of(nodes[0], nodes), nodes[2].pos)
    assert hop.kind is NextHopKind.NO_PROGRESS


def test_view_drops_dead_and_excluded_nodes():
    nodes = [node(0, 0, 0), node(1, 100, 0), node(2, 150, 0), node(3, 200, 0), node(4, 900, 0)]
    nodes[1].alive = False
    view = view_of(nodes[0], nodes, frozenset({2}))
    assert view.ids == (3,)


def _oracle(nodes, me, dst):
    here = rounded_distance(me.pos, nodes[dst].pos)
    best = None
    for n in nodes:
        if n.id == me.id or not n.alive or distance(me.pos, n.pos) > me.range_m:
            continue
        if n.id == dst:
            return dst
        if rounded_distance(n.pos, nodes[dst].pos) >= here:
            continue
        key = (rounded_distance(me.pos, n.pos), n.energy_j, -n.id)
        if best is None or key > best[0]:
            best = (key, n.id)
    return None if best is None else best[1]


def test_selection_matches_brute_force_on_random_topologies():
    rnd = random.Random(42)
    for _ in range(1000):
        count = 30
        nodes = [node(i, rnd.uniform(0, 600), rnd.uniform(0, 600), rnd.uniform(100, 300),
                      rnd.choice([0.1, 0.2, 0.5])) for i in range(count)]
        dst = rnd.randrange(1, count)
        hop = select_next_hop(nodes[0], dst, view_of(nodes[0], nodes), nodes[dst].pos)
        expected = _oracle(nodes, nodes[0], dst)
        if expected is None:
            assert hop.kind is NextHopKind.NO_PROGRESS
        else:
            assert hop.node == expected


@settings(max_examples=60, deadline=None)
@given(st.permutations(list(range(1, 8))), st.integers(0, 10_000))
def test_selection_ignores_neighbour_order(order, seed):
    rnd = random.Random(seed)
    nodes = [node(0, 300, 300)] + [
        node(i, rnd.uniform(0, 600), rnd.uniform(0, 600), energy=rnd.choice([0.1, 0.5]))
        for i in range(1, 8)
    ]
    nodes.append(node(8, 900, 900))
    shuffled = [nodes[0]] + [nodes[i] for i in order] + [nodes[8]]
    a = select_next_hop(nodes[0], 8, view_of(nodes[0], nodes), nodes[8].pos)
    b = select_next_hop(nodes[0], 8, view_of(nodes[0], shuffled), nodes[8].pos)
    assert a == b


# --- projection and kmax paths ---
def test_project_path_walks_a_line():
    nodes = [node(i, i * 200.0, 0, range_m=250) for i in range(5)]
    assert project_path(nodes, 0, 4) == (0, 1, 2, 3, 4)
    nodes[2].alive = False
    assert project_path(nodes, 0, 4) == (0, 1)


def test_kmax_path_prefers_cached_route_on_matching_link():
    nodes = [node(i, i * 200.0, 0, range_m=250) for i in range(4)]
    assert kmax_path(nodes, (0, 1), 2, 3, route=(0, 1, 2, 3)).nodes == (0, 1, 2, 3)
    assert kmax_path(nodes, (0,), 1, 3).nodes == (0, 1, 2, 3)
    # greedy projection stalls: the destination is still counted
    nodes[2].alive = False
    assert kmax_path(nodes, (0,), 1, 3).nodes == (0, 1, 3)


def test_route_cache_entry_must_end_at_destination():
    with pytest.raises(ValueError):
        RouteCacheEntry(3, Path.of((0, 1, 2)), 0)


# --- forwarding in the engine ---
def tx_rows(trace):
    return [(r.tick, r.actor, r.peer, r.frame_kind) for r in trace.rows_of("tx")]


def test_three_node_line_is_eight_frames():
    sim, trace = run_layout(line_layout(3, generations=[(10, 0, 2)]))
    assert [k for *_, k in tx_rows(trace)] == ["RREQUEST", "ACK1", "DATA", "ACK2"] * 2
    assert trace.payloads[1].delivered_path == (0, 1, 2)
    assert sim.protocol.cached_route(0, 2).path.nodes == (0, 1, 2)


def test_tie_group_is_polled_and_richest_reporter_wins():
    positions = [(0, 0), (200, 50), (200, -50), (400, 0)]
    layout = ScriptedLayout(positions, ranges=250.0, generations=[(10, 0, 3)])
    _, trace = run_layout(layout)
    rows = tx_rows(trace)
    assert rows[:4] == [(10, 0, 1, "RREQUEST"), (11, 1, 0, "ACK1"), (12, 2, 0, "ACK1"),
                        (13, 0, 1, "DATA")]
    assert trace.payloads[1].delivered

    richer = ScriptedLayout(positions, ranges=250.0, generations=[(10, 0, 3)],
                            energies=[0.5, 0.5, 0.6, 0.5])
    _, trace = run_layout(richer)
    # both tie members answer even though they overhear each other
    assert {r.actor for r in trace.rows_of("tx") if r.frame_kind == "ACK1"} >= {1, 2}
    assert [(r.tick, r.actor) for r in trace.rows_of("tx") if r.frame_kind == "ACK1"][:2] == [
        (11, 1), (12, 2)]
    data = [r for r in trace.rows_of("tx") if r.frame_kind == "DATA" and r.actor == 0]
    assert data[0].peer == 2
    assert trace.payloads[1].delivered_path == (0, 2, 3)


def test_void_sends_route_recover_then_gives_up():
    layout = ScriptedLayout([(0, 0), (200, 0), (600, 0)], ranges=250.0, generations=[(10, 0, 2)])
    _, trace = run_layout(layout)
    assert (18, 1, 0, "ROUTE_RECOVER") in tx_rows(trace)
    assert [r.outcome for r in trace.rows_of("reestablish")] == ["escalated"]
    rec = trace.payloads[1]
    assert rec.lost_cause.value == "unreachable" and not rec.delivered


VOID = [(0, 0), (200, 0), (600, 0)]


def test_route_recover_to_a_dead_upstream_is_exhausted():
    # node 3 is an idle second source that keeps the run going
    layout = ScriptedLayout(VOID + [(1200, 0)], ranges=250.0, sources=(0, 3),
                            generations=[(10, 0, 2)], failures=[(18, 0)])
    _, trace = run_layout(layout)
    recover = [(t, a, p) for t, a, p, k in tx_rows(trace) if k == "ROUTE_RECOVER"]
    assert recover == [(t, 1, 0) for t in (18, 37, 56, 75, 94, 113)]
    assert trace.payloads[1].lost_cause.value == "recovery_exhausted"
    assert trace.rows_of("reestablish") == []


def test_zero_recover_depth_escalates_straight_to_the_source():
    layout = ScriptedLayout(VOID, ranges=250.0, generations=[(10, 0, 2)])
    _, trace = run_layout(layout, recover_depth=0)
    rows = tx_rows(trace)
    assert "ROUTE_RECOVER" not in {k for *_, k in rows}
    assert [(t, a) for t, a, _, k in rows if k == "DATA"] == [(12, 0), (20, 0)]
    assert [r.outcome for r in trace.rows_of("reestablish")] == ["escalated"]
    assert trace.payloads[1].lost_cause.value == "unreachable"


def test_next_hop_dying_mid_route_hands_over_to_the_runner_up():
    # seen from node 1, node 2 makes the most progress and node 3 the second most
    positions = [(0, 0), (200, 0), (440, 0), (350, 0), (600, 0)]
    layout = ScriptedLayout(positions, ranges=250.0, generations=[(10, 0, 4)],
                            failures=[(18, 2)])
    sim, trace = run_layout(layout)
    asked = [p for _, a, p, k in tx_rows(trace) if a == 1 and k == "RREQUEST"]
    assert asked == [2] * 6 + [3]
    assert trace.payloads[1].delivered_path == (0, 1, 3, 4)

    me, dst = sim.nodes[1], sim.nodes[4].pos
    ahead = [n for n in sim.nodes
             if n.alive and n.id != me.id and distance(me.pos, n.pos) <= me.range_m
             and distance(n.pos, dst) < distance(me.pos, dst)]
    assert max(ahead, key=lambda n: distance(me.pos, n.pos)).id == 3


@pytest.mark.parametrize("mode,attempts", [("formula", 4), ("progressive", 6)])
def test_progressive_kmax_allows_more_retries_near_the_destination(mode, attempts):
    # node 3 grants node 2's r-request, then dies before DATA
    layout = line_layout(5, generations=[(10, 0, 4)], failures=[(28, 3)])
    _, trace = run_layout(layout, **{"kmax.mode": mode})
    data = [t for t, a, _, k in tx_rows(trace) if a == 2 and k == "DATA"]
    assert data == [28 + 18 * i for i in range(attempts)]
    assert trace.payloads[1].lost_cause.value == "kmax_drop"


@pytest.mark.parametrize("mode", ["formula", "progressive"])
def test_kmax_modes_agree_on_the_first_hop(mode):
    layout = line_layout(5, generations=[(10, 0, 4)], failures=[(12, 1)])
    _, trace = run_layout(layout, **{"kmax.mode": mode})
    data = [t for t, a, _, k in tx_rows(trace) if a == 0 and k == "DATA"]
    assert data == [12, 30, 48, 66]


def test_dead_destination_is_unreachable():
    layout = line_layout(2, generations=[(10, 0, 1)], failures=[(0, 1)])
    _, trace = run_layout(layout)
    assert trace.payloads[1].lost_cause.value == "unreachable"
    assert trace.rows_of("tx") == []


def test_interference_triggers_proactive_reestablishment():
    layout = line_layout(3, generations=[(10, 0, 2)])
    sim = Simulator(make_scenario(sim_time_ticks=500), layout=layout)
    sim.protocol.state[0].cache[2] = RouteCacheEntry(2, Path.of((0, 1, 2)), 0)
    sim.nodes[0].interference_count = 11
    trace = sim.run()
    assert [r.outcome for r in trace.rows_of("reestablish")] == ["interference"]
    assert sim.nodes[0].interference_count == 0
    assert trace.payloads[1].delivered


def test_low_energy_triggers_proactive_reestablishment():
    layout = line_layout(3, generations=[(10, 0, 2)], energies=[0.05, 0.5, 0.5])
    sim = Simulator(make_scenario(sim_time_ticks=500, initial_energy_j=0.5), layout=layout)
    sim.nodes[0].initial_energy_j = 0.5
    sim.protocol.state[0].cache[2] = RouteCacheEntry(2, Path.of((0, 1, 2)), 0)
    trace = sim.run()
    assert [r.outcome for r in trace.rows_of("reestablish")] == ["energy"]
    assert trace.payloads[1].delivered


def test_stale_cached_route_is_purged():
    layout = line_layout(3, generations=[(10, 0, 2)])
    sim = Simulator(make_scenario(sim_time_ticks=500), layout=layout)
    # node 2 cannot be reached from 0 directly
    sim.protocol.state[0].cache[2] = RouteCacheEntry(2, Path.of((0, 2)), 0)
    trace = sim.run()
    assert trace.payloads[1].delivered_path == (0, 1, 2)


def test_dead_next_hop_is_dropped_after_kmax_retries():
    # node 1 survives the r-request exchange but dies receiving DATA
    layout = line_layout(2, generations=[(10, 0, 1)], energies=[0.5, 4.164e-4])
    _, trace = run_layout(layout, sim_time_ticks=500)
    assert trace.deaths == [(17, 1)]
    data = [r for r in trace.rows_of("tx") if r.frame_kind == "DATA"]
    assert [(r.tick, r.outcome) for r in data] == [(12, ""), (30, "retry")]
    assert trace.payloads[1].lost_cause.value == "kmax_drop"


def test_delivered_paths_are_simple(small_random):
    for seed in range(1, 6):
        trace = Simulator(small_random(seed)).run()
        for rec in trace.payloads.delivered:
            path = rec.delivered_path
            assert path[0] == rec.src and path[-1] == rec.dst
            assert len(set(path)) == len(path) >= 2

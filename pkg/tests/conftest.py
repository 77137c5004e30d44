import pytest

from wsnsim.config import build_scenario
from wsnsim.core import Frame, FrameKind, NodeState, Position
from wsnsim.engine import Simulator
from wsnsim.topology import ScriptedLayout


def make_scenario(**overrides):
    """Scenario built from config keys; dotted keys may be passed as a dict.

    Idle listening and duty cycling stay off unless asked for, so hand-traced
    runs spend energy on frames only.
    """
    overrides.setdefault("idle_listening", False)
    overrides.setdefault("duty_cycle", False)
    return build_scenario(overrides)


def line_layout(count, spacing=200.0, range_m=250.0, generations=(), sources=(0,),
                energies=None, failures=()):
    return ScriptedLayout(
        positions=[(i * spacing, 0.0) for i in range(count)],
        ranges=range_m,
        sources=sources,
        generations=generations,
        energies=energies,
        failures=failures,
    )


def run_layout(layout, **overrides):
    overrides.setdefault("sim_time_ticks", 2000)
    sim = Simulator(make_scenario(**overrides), layout=layout)
    trace = sim.run()
    return sim, trace


def node(node_id, x, y, range_m=300.0, energy=0.5):
    return NodeState(id=node_id, pos=Position(x, y), energy_j=energy, range_m=range_m)


def frame(kind, hop_tx, hop_rx, payload_id=1, seq=1, **extra):
    return Frame(kind, extra.pop("src", hop_tx), extra.pop("dst", hop_rx), hop_tx, hop_rx,
                 extra.pop("size_bits", 64), payload_id, seq, **extra)


def tx_kinds(trace):
    return [(r.tick, r.actor, r.peer, r.frame_kind) for r in trace.rows_of("tx")]


@pytest.fixture
def scenario():
    return make_scenario


@pytest.fixture
def small_random():
    """A handful of small random scenarios, cheap enough to run many."""
    def _make(seed, protocol="e2xlradr", **overrides):
        values = {
            "node_count": 10,
            "area_w_m": 500,
            "area_h_m": 500,
            "source_count": 2,
            "traffic_rate_pps": 5,
            "sim_time_ticks": 3000,
            "initial_energy_j": 0.05,
            "seed": seed,
            "protocol": protocol,
        }
        values.update(overrides)
        return make_scenario(**values)
    return _make

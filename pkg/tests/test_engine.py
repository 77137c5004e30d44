import csv
from pathlib import Path as FsPath

import pytest

from conftest import line_layout, make_scenario, run_layout, tx_kinds
from wsnsim.config import ProtocolName
from wsnsim.dsr import DsrProtocol
from wsnsim.engine import EventKind, Simulator, make_protocol, run
from wsnsim.metrics import compute_metrics, consumed_energy, energy_report
from wsnsim.routing import E2xlradrProtocol

GOLDEN = FsPath(__file__).parent / "golden" / "line5_frames.csv"
PROTOCOLS = ("e2xlradr", "dsr")


def load_golden():
    with GOLDEN.open(encoding="utf-8", newline="") as fh:
        return [(int(r["tick"]), int(r["actor"]), int(r["peer"]), r["frame_kind"])
                for r in csv.DictReader(fh)]


# --- golden trace ---
def test_five_node_line_matches_golden_frames():
    _, trace = run_layout(line_layout(5, generations=[(10, 0, 4)]))
    assert tx_kinds(trace) == load_golden()
    rec = trace.payloads[1]
    assert rec.delivered_at == 41
    assert rec.delivered_at - rec.created_at == 31
    assert rec.delivered_path == (0, 1, 2, 3, 4)


def test_golden_metrics():
    _, trace = run_layout(line_layout(5, generations=[(10, 0, 4)]))
    m = compute_metrics(trace)
    assert (m.generated, m.delivered, m.delivery_ratio) == (1, 1, 1.0)
    assert m.mean_delay_ticks == 31.0
    assert m.retransmissions_total == 0
    assert m.lifetime_censored and m.lifetime_ticks == 2000


def test_bystanders_sleep_through_data():
    _, trace = run_layout(line_layout(5, generations=[(10, 0, 4)]))
    first = trace.rows_of("sleep")[0]
    assert (first.tick, first.actor, first.peer, first.outcome) == (12, 2, 0, "18")


def test_sleep_can_be_disabled():
    _, trace = run_layout(line_layout(5, generations=[(10, 0, 4)]), sleep_enabled=False)
    assert trace.rows_of("sleep") == []
    assert tx_kinds(trace) == load_golden()


def test_sleeping_bystander_hears_nothing_and_draws_nothing():
    _, trace = run_layout(line_layout(5, generations=[(10, 0, 4)]), idle_listening=True)
    assert tx_kinds(trace) == load_golden()
    naps = [(r.tick, int(r.outcome)) for r in trace.rows_of("sleep") if r.actor == 2]
    assert naps[0] == (12, 18)
    # node 1's ACK2 lands inside node 2's nap
    heard = [(r.tick, r.frame_kind, r.outcome, r.energy_debit_j)
             for r in trace.rows_of("rx") if r.actor == 2 and 12 < r.tick <= 18]
    assert heard == [(18, "ACK2", "RxBusy", 0.0)]
    assert all(r.energy_debit_j == 0.0 for r in trace.rows_of("rx") if r.outcome == "RxBusy")
    off = set()
    for start, until in naps:
        off.update(range(start, until))
    for r in trace.rows_of("tx"):
        if r.actor == 2:
            off.update(range(r.tick, r.tick + (5 if r.frame_kind == "DATA" else 1)))
    assert trace.energy.entries[(2, "rx", "LISTEN")] == pytest.approx((2000 - len(off)) * 1.25e-5)


def test_one_hop_exchange_energy():
    _, trace = run_layout(line_layout(2, generations=[(10, 0, 1)]))
    # 1216 bits sent at 250 m and received once
    assert energy_report(trace).total_j == pytest.approx(1216 * 6.35e-6, rel=1e-9)
    report = energy_report(trace)
    assert report.category("tx", "DATA") == pytest.approx(1024 * 6.3e-6, rel=1e-9)
    assert report.category("rx", "DATA") == pytest.approx(1024 * 50e-9, rel=1e-9)


# --- degenerate runs ---
def test_no_traffic_means_nothing_happens():
    trace, metrics = run(make_scenario(node_count=8, traffic_rate_pps=0, sim_time_ticks=5000))
    assert trace.rows_of("tx") == []
    assert metrics.generated == 0 and metrics.delivery_ratio == 0.0
    assert metrics.mean_delay_ticks is None
    assert metrics.lifetime_censored and metrics.lifetime_ticks == 5000
    assert trace.samples[0] == (0, 1.0) and trace.samples[-1] == (5000, 1.0)


def test_single_node_network():
    trace, metrics = run(make_scenario(node_count=1, sim_time_ticks=1000))
    assert metrics.generated == 0
    assert trace.deaths == []


def test_run_stops_when_every_source_is_dead():
    layout = line_layout(3, generations=[(500, 0, 2)], failures=[(100, 0)])
    sim, trace = run_layout(layout)
    assert trace.end_tick == 100
    assert trace.payloads.generated == 0
    assert trace.samples[-1] == (100, pytest.approx(2 / 3))


def test_idle_listening_keeps_running_after_the_sources_die():
    layout = line_layout(3, generations=[(500, 0, 2)], failures=[(100, 0)])
    _, trace = run_layout(layout, idle_listening=True)
    assert trace.end_tick == 2000
    assert trace.payloads.generated == 0
    assert trace.deaths == [(100, 0)]
    assert trace.samples[-1] == (2000, pytest.approx(2 / 3))
    listened = {n: trace.energy.entries[(n, "rx", "LISTEN")] for n in range(3)}
    assert listened == {0: pytest.approx(100 * 1.25e-5), 1: pytest.approx(2000 * 1.25e-5),
                        2: pytest.approx(2000 * 1.25e-5)}


def test_always_on_radios_die_of_listening_alone():
    sc = make_scenario(protocol="dsr", node_count=4, traffic_rate_pps=0, sim_time_ticks=5000,
                       initial_energy_j=0.01001, idle_listening=True)
    trace, metrics = run(sc)
    # 801 ticks at 12.5 mW empty 10.01 mJ
    assert trace.deaths == [(801, n) for n in range(4)]
    assert not metrics.lifetime_censored and metrics.lifetime_ticks == 801
    assert trace.end_tick == 5000


def test_duty_cycle_stretches_idle_lifetime():
    sc = make_scenario(node_count=4, traffic_rate_pps=0, sim_time_ticks=5000,
                       initial_energy_j=0.01001, idle_listening=True, duty_cycle=True,
                       duty_period_ticks=10, duty_awake_ticks=5)
    trace = Simulator(sc).run()
    assert len(trace.deaths) == 4
    assert all(1601 <= tick <= 1610 for tick, _ in trace.deaths)
    assert energy_report(trace).category("rx", "LISTEN") == pytest.approx(4 * 0.01001)


def test_dsr_radios_ignore_the_duty_cycle():
    sc = make_scenario(protocol="dsr", node_count=2, traffic_rate_pps=0, sim_time_ticks=2000,
                       idle_listening=True, duty_cycle=True)
    sim = Simulator(sc)
    assert all(sim.listening(n, t) for n in (0, 1) for t in range(100))


def test_scheduling_into_the_past_is_refused():
    sim = Simulator(make_scenario(sim_time_ticks=100), layout=line_layout(2))
    sim.now = 50
    with pytest.raises(ValueError):
        sim.schedule(10, EventKind.METRICS_SAMPLE)


def test_lifetime_curve_is_sampled_on_the_interval():
    _, trace = run_layout(line_layout(3), sim_time_ticks=3500, sample_interval_ticks=1000)
    assert [t for t, _ in trace.samples] == [0, 1000, 2000, 3000, 3500]


def test_make_protocol():
    assert isinstance(make_protocol(ProtocolName.DSR), DsrProtocol)
    assert isinstance(make_protocol(ProtocolName.E2XLRADR), E2xlradrProtocol)


# --- whole-run properties ---
@pytest.mark.parametrize("protocol", PROTOCOLS)
def test_runs_are_deterministic(small_random, protocol):
    a = Simulator(small_random(3, protocol)).run()
    b = Simulator(small_random(3, protocol)).run()
    assert a.rows == b.rows
    assert a.deaths == b.deaths


@pytest.mark.parametrize("protocol", PROTOCOLS)
def test_energy_is_conserved(small_random, protocol):
    for seed in range(1, 11):
        trace = Simulator(small_random(seed, protocol)).run()
        consumed = consumed_energy(trace)
        for node_id, used in consumed.items():
            assert trace.energy.node_total(node_id) == pytest.approx(used, rel=1e-12, abs=1e-15)
        assert energy_report(trace).total_j == pytest.approx(sum(consumed.values()), rel=1e-12)
        assert all(v >= 0 for v in trace.residual_energy.values())


@pytest.mark.parametrize("protocol", PROTOCOLS)
def test_energy_is_conserved_with_idle_listening(small_random, protocol):
    for seed in range(1, 6):
        trace = Simulator(small_random(seed, protocol, idle_listening=True, duty_cycle=True)).run()
        consumed = consumed_energy(trace)
        for node_id, used in consumed.items():
            assert trace.energy.node_total(node_id) == pytest.approx(used, rel=1e-9, abs=1e-15)
        assert energy_report(trace).category("rx", "LISTEN") > 0
        assert trace.end_tick == 3000


@pytest.mark.parametrize("listening", [False, True])
@pytest.mark.parametrize("protocol", PROTOCOLS)
def test_trace_is_causal_and_dead_nodes_stay_silent(small_random, protocol, listening):
    for seed in range(1, 6):
        trace = Simulator(small_random(seed, protocol, initial_energy_j=0.02,
                                       idle_listening=listening, duty_cycle=listening)).run()
        ticks = [r.tick for r in trace.rows]
        assert ticks == sorted(ticks)
        assert all(t <= trace.end_tick for t in ticks)
        died = {node: tick for tick, node in trace.deaths}
        assert len(died) == len(trace.deaths)
        for row in trace.rows_of("tx"):
            if row.actor in died:
                assert row.tick <= died[row.actor]


@pytest.mark.parametrize("protocol", PROTOCOLS)
def test_every_payload_has_one_fate(small_random, protocol):
    for seed in range(1, 6):
        trace = Simulator(small_random(seed, protocol, initial_energy_j=0.02)).run()
        for rec in trace.payloads.records.values():
            assert not (rec.delivered and rec.lost)
            assert rec.delivered or rec.lost or rec.copies > 0
        losses = trace.rows_of("loss")
        assert len(losses) == len(trace.payloads.lost)
        assert len(trace.rows_of("deliver")) == len(trace.payloads.delivered)

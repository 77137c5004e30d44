import itertools

import pytest
from hypothesis import given, strategies as st

from wsnsim.core import FrameKind, Position
from wsnsim.radio import (
    DutyCycle,
    EnergyModel,
    ReceptionOutcome,
    Transmission,
    airtime_ticks,
    debit,
    in_range,
    resolve_reception,
    rx_energy,
    tx_energy,
    tx_power_w,
)

from conftest import frame, node

MODEL = EnergyModel()


def on_air(tx_node, seq, start, end, kind=FrameKind.DATA):
    return Transmission(frame(kind, tx_node.id, 99, seq=seq), start, end, tx_node.pos, tx_node.range_m)


def test_default_airtimes():
    assert airtime_ticks(64, 250_000, 0.001) == 1
    assert airtime_ticks(1024, 250_000, 0.001) == 5
    assert airtime_ticks(250, 250_000, 0.001) == 1


def test_in_range_boundary_inclusive():
    a = node(0, 0, 0, range_m=250)
    assert in_range(a, node(1, 250, 0))
    assert not in_range(a, node(2, 250.001, 0))


def test_in_range_is_asymmetric():
    a = node(0, 0, 0, range_m=300)
    b = node(1, 280, 0, range_m=250)
    assert in_range(a, b) and not in_range(b, a)


def test_energy_formulas():
    assert tx_energy(MODEL, 1024, 250) == pytest.approx(0.0064512)
    assert rx_energy(MODEL, 1024) == pytest.approx(5.12e-5)
    assert tx_power_w(MODEL, 250_000, 350) == pytest.approx(3.075)


def test_energy_model_rejects_non_positive():
    with pytest.raises(ValueError):
        EnergyModel(0.0, 1e-10)


def test_transmission_needs_a_tick():
    a = node(0, 0, 0)
    with pytest.raises(ValueError):
        on_air(a, 1, 5, 5)


def test_half_open_intervals():
    a = node(0, 0, 0)
    t = on_air(a, 1, 0, 5)
    assert t.overlaps(4, 6)
    assert not t.overlaps(5, 9)
    assert not t.overlaps(-3, 0)


# Three nodes: A and B both reach R. Every pair of intervals inside a small
# window is checked against the plain overlap rule.
A = node(0, -100, 0)
B = node(1, 100, 0)
R = node(2, 0, 0)


@pytest.mark.parametrize("a_start,a_len,b_start,b_len",
                         list(itertools.product(range(6), (1, 2, 3), range(6), (1, 2, 3))))
def test_exhaustive_three_node_interleavings(a_start, a_len, b_start, b_len):
    ta = on_air(A, 1, a_start, a_start + a_len)
    tb = on_air(B, 2, b_start, b_start + b_len)
    window = (min(a_start, b_start), max(ta.end, tb.end))
    outcomes = resolve_reception(R, [ta, tb], window)
    clash = a_start < tb.end and b_start < ta.end
    expected = ReceptionOutcome.COLLIDED if clash else ReceptionOutcome.DELIVERED
    assert outcomes == {1: expected, 2: expected}


@pytest.mark.parametrize("r_start,r_len", list(itertools.product(range(8), (1, 2, 5))))
def test_transmitting_node_never_receives(r_start, r_len):
    ta = on_air(A, 1, 2, 4)
    busy = [(r_start, r_start + r_len)]
    outcome = resolve_reception(R, [ta], (2, 4), busy)[1]
    if r_start < 4 and 2 < r_start + r_len:
        assert outcome is ReceptionOutcome.RX_BUSY
    else:
        assert outcome is ReceptionOutcome.DELIVERED


def test_one_tick_partial_overlap_collides():
    ta = on_air(A, 1, 0, 5)
    tb = on_air(B, 2, 4, 5)
    out = resolve_reception(R, [ta, tb], (0, 5))
    assert out[1] is out[2] is ReceptionOutcome.COLLIDED


def test_inaudible_transmission_does_not_interfere():
    far = node(3, 5000, 0, range_m=250)
    ta = on_air(A, 1, 0, 5)
    tf = on_air(far, 2, 0, 5)
    out = resolve_reception(R, [ta, tf], (0, 5))
    assert out == {1: ReceptionOutcome.DELIVERED, 2: ReceptionOutcome.OUT_OF_RANGE}


def test_own_frames_are_ignored():
    t_own = on_air(R, 7, 0, 5)
    assert resolve_reception(R, [t_own], (0, 5)) == {}


@given(st.lists(st.tuples(st.integers(0, 20), st.integers(1, 6)), min_size=1, max_size=5),
       st.randoms(use_true_random=False))
def test_outcomes_do_not_depend_on_enumeration_order(intervals, rnd):
    senders = [node(10 + i, 50 * (i + 1), 0, range_m=400) for i in range(len(intervals))]
    active = [on_air(s, i + 1, start, start + length)
              for i, (s, (start, length)) in enumerate(zip(senders, intervals))]
    window = (min(t.start for t in active), max(t.end for t in active))
    first = resolve_reception(R, active, window)
    shuffled = list(active)
    rnd.shuffle(shuffled)
    assert resolve_reception(R, shuffled, window) == first


def test_debit_clamps_and_kills():
    n = node(0, 0, 0, energy=1e-3)
    _, died, taken = debit(n, 4e-4)
    assert not died and taken == 4e-4
    _, died, taken = debit(n, 1.0)
    assert died and taken == pytest.approx(6e-4)
    assert n.energy_j == 0.0 and not n.alive
    assert debit(n, 1.0)[1:] == (False, 0.0)


def test_debit_rejects_negative():
    with pytest.raises(ValueError):
        debit(node(0, 0, 0), -1.0)


@given(st.lists(st.floats(min_value=0, max_value=0.2), max_size=20))
def test_debit_is_monotone(amounts):
    n = node(0, 0, 0, energy=0.5)
    last = n.energy_j
    for j in amounts:
        debit(n, j)
        assert 0.0 <= n.energy_j <= last
        last = n.energy_j


# --- listen schedule ---
def test_duty_cycle_awake_ticks():
    duty = DutyCycle(period=10, awake=4, offset=3)
    assert [t for t in range(21) if duty.awake_at(t)] == [0, 7, 8, 9, 10, 17, 18, 19, 20]
    assert duty.awake_ticks(0, 20) == 8
    assert duty.awake_ticks(5, 5) == 0
    assert duty.nth_awake_end(0, 1) == 1
    assert duty.nth_awake_end(0, 2) == 8
    assert duty.nth_awake_end(2, 5) == 18


def test_duty_cycle_rejects_bad_windows():
    with pytest.raises(ValueError):
        DutyCycle(period=10, awake=11)
    with pytest.raises(ValueError):
        DutyCycle(period=10, awake=0)


@given(st.integers(1, 30), st.data())
def test_duty_cycle_counts_match_brute_force(period, data):
    awake = data.draw(st.integers(1, period))
    offset = data.draw(st.integers(0, period - 1))
    a = data.draw(st.integers(0, 200))
    k = data.draw(st.integers(1, 60))
    duty = DutyCycle(period, awake, offset)
    t = duty.nth_awake_end(a, k)
    assert sum(duty.awake_at(u) for u in range(a, t)) == k
    assert duty.awake_at(t - 1)
    assert duty.awake_ticks(a, t) == k

import numpy as np
import pytest

from dipsync.clock import NodeClocks
from dipsync.errors import ProtocolViolation
from dipsync.protocol import (
    ProtocolKind,
    SyncMessage,
    baf_apply_reversal,
    baf_on_receive,
    baf_reversal_due,
    flood_on_boundary,
    make_node_state,
    neighborhood_average,
    sync_baseline_step,
    tsau_on_receive,
    tsau_on_slot,
    uaf_gateway_cycle,
    uaf_on_receive,
)


def node(node_id=1, t0=0.5, delta=0.001):
    return make_node_state(node_id, NodeClocks(tau0=t0, t_c=t0), delta)


def tsau_msg(t, sender=2):
    return SyncMessage(ProtocolKind.TSAU, sender, t)


def uaf_msg(t, s, sender=2):
    return SyncMessage(ProtocolKind.UAF, sender, t, s=s)


def baf_msg(t, s, c, sender=2):
    return SyncMessage(ProtocolKind.BAF, sender, t, s=s, c=c)


# --- neighborhood averaging -------------------------------------------------

def test_average_idempotent_on_constant():
    assert neighborhood_average([0.5, 0.5, 0.5]) == 0.5


def test_average_two_values():
    assert neighborhood_average([0.0, 1.0]) == 0.5


def test_average_hand_sum():
    # 0.2 + 0.4 + 0.9 = 1.5; 1.5 / 3 = 0.5
    assert neighborhood_average([0.2, 0.4, 0.9]) == pytest.approx(0.5)


def test_average_rejects_empty():
    with pytest.raises(ValueError):
        neighborhood_average([])


def test_average_convexity():
    rng = np.random.default_rng(5)
    for _ in range(200):
        vals = rng.random(rng.integers(1, 9)).tolist()
        av = neighborhood_average(vals)
        assert min(vals) <= av <= max(vals)


# --- TSAU -------------------------------------------------------------------

def test_tsau_receive_accumulates():
    st = tsau_on_receive(node(), tsau_msg(0.4))
    assert st.clock_sum == pytest.approx(0.4)
    assert st.total_received == 1
    assert st.t_av() == pytest.approx(0.4)


def test_tsau_receive_running_mean():
    st = tsau_on_receive(node(), tsau_msg(0.4))
    st = tsau_on_receive(st, tsau_msg(0.6))
    assert st.t_av() == pytest.approx(0.5)


def test_tsau_three_receives_hand_mean():
    st = node()
    for t in (0.1, 0.2, 0.6):
        st = tsau_on_receive(st, tsau_msg(t))
    assert st.t_av() == pytest.approx(0.3)


def test_tsau_receive_rejects_wrong_kind():
    with pytest.raises(ProtocolViolation):
        tsau_on_receive(node(), uaf_msg(0.1, 0))


def test_tsau_first_slot_at_id_times_delta():
    st = node(node_id=3)
    assert st.update_time == pytest.approx(3 * 0.001)
    st2, msg = tsau_on_slot(st, 2, 0.001, 16)
    assert msg is None and st2.update_time == st.update_time
    st3, msg = tsau_on_slot(st, 3, 0.001, 16)
    assert msg is not None


def test_tsau_slot_advances_by_n_minus_1():
    st = node(node_id=3)
    st, _ = tsau_on_slot(st, 3, 0.001, 16)
    # next update 15 ticks later
    assert st.update_time == pytest.approx(18 * 0.001)


def test_tsau_single_value_does_not_update_but_broadcasts():
    st = tsau_on_receive(node(t0=0.9), tsau_msg(0.1))
    st2, msg = tsau_on_slot(st, 1, 0.001, 16)
    assert st2.estimate == pytest.approx(0.9)  # unchanged: needs more than one
    assert msg is not None and msg.time == pytest.approx(0.9)
    assert st2.total_received == 0  # accumulators reset


def test_tsau_two_values_update_at_slot():
    st = node(t0=0.9)
    st = tsau_on_receive(st, tsau_msg(0.2))
    st = tsau_on_receive(st, tsau_msg(0.4))
    st2, msg = tsau_on_slot(st, 1, 0.001, 16)
    assert st2.estimate == pytest.approx(0.3)
    assert msg.time == pytest.approx(0.3)


# --- UAF ----------------------------------------------------------------------

def test_uaf_opposite_status_updates_and_flips():
    st = uaf_on_receive(node(), uaf_msg(0.7, 1))
    assert st.s == 1
    assert st.t_av() == pytest.approx(0.7)


def test_uaf_same_status_is_inert():
    st = node()
    st = uaf_on_receive(st, uaf_msg(0.7, 1))
    before = (st.clock_sum, st.total_received, st.estimate)
    st2 = uaf_on_receive(st, uaf_msg(0.9, 0))  # anchor is still 0 -> this is same-wave? no:
    # message with s=0 equals the anchor, so it must be ignored
    assert (st2.clock_sum, st2.total_received, st2.estimate) == before
    assert st2.t_av() == st2.estimate or st2.total_received > 0


def test_uaf_two_messages_same_tick_both_accumulate():
    # batch gating: the flip does not block same-wave siblings
    st = node()
    st = uaf_on_receive(st, uaf_msg(0.2, 1))
    st = uaf_on_receive(st, uaf_msg(0.6, 1))
    assert st.t_av() == pytest.approx(0.4)
    assert st.s == 1


def test_uaf_boundary_commits_and_reanchors():
    st = node(t0=0.9)
    st = uaf_on_receive(st, uaf_msg(0.3, 1))
    st2, msg = flood_on_boundary(st, ProtocolKind.UAF)
    assert st2.estimate == pytest.approx(0.3)
    assert st2.anchor_s == 1
    assert msg is not None and msg.s == 1
    # quiet tick: no broadcast, estimate unchanged
    st3, msg2 = flood_on_boundary(st2, ProtocolKind.UAF)
    assert msg2 is None and st3.estimate == pytest.approx(0.3)


def test_uaf_gateway_cycle_strict_inequality():
    assert uaf_gateway_cycle(0.0045, 4, 0.001) is True
    assert uaf_gateway_cycle(0.0040, 4, 0.001) is False


def test_uaf_gateway_cycle_rejects_bad_layer():
    with pytest.raises(ValueError):
        uaf_gateway_cycle(0.001, 0, 0.001)


# --- BAF ----------------------------------------------------------------------

def test_baf_trigger_takes_counter_plus_one():
    st = baf_on_receive(node(), baf_msg(0.7, 1, 2))
    assert st.s == 1
    assert st.c == 3


def test_baf_line_end_reversal_from_hand_trace():
    # 4-node line trace, forward wave reaching the end node: it was triggered
    # with counter 2 (so c_i = 3) and afterwards hears only same-status
    # counters equal to 2 -> the furthest-node rule fires.
    st = node(node_id=3)
    st = baf_on_receive(st, baf_msg(0.1, 1, 2))
    assert st.c == 3
    st, _ = flood_on_boundary(st, ProtocolKind.BAF)
    st = baf_on_receive(st, baf_msg(0.1, 1, 2))
    assert baf_reversal_due(st)
    st = baf_apply_reversal(st)
    assert st.c == 0
    assert st.s == 0


def test_baf_no_reversal_when_larger_counter_heard():
    st = node()
    st = baf_on_receive(st, baf_msg(0.5, 1, 2))  # c becomes 3
    st, _ = flood_on_boundary(st, ProtocolKind.BAF)
    st = baf_on_receive(st, baf_msg(0.5, 1, 5))  # heard same-status c=5 > 3
    assert not baf_reversal_due(st)
    with pytest.raises(ProtocolViolation):
        baf_apply_reversal(st)


def test_baf_same_status_no_update():
    st = node()
    st = baf_on_receive(st, baf_msg(0.5, 1, 2))
    st, _ = flood_on_boundary(st, ProtocolKind.BAF)
    est = st.estimate
    st2 = baf_on_receive(st, baf_msg(0.9, 1, 5))
    assert st2.estimate == est
    assert st2.total_received == 0
    assert st2.c == st.c


def test_baf_zero_same_status_heard_never_fires():
    st = node()
    assert not baf_reversal_due(st)


# --- synchronous baseline -----------------------------------------------------

def test_baseline_two_node_tracks_gateway():
    neighbors = [(1,), (0,)]
    est = [0.0, 0.77]
    est = sync_baseline_step(est, 1, 0.001, neighbors)
    assert est[1] == pytest.approx(0.001)
    est = sync_baseline_step(est, 2, 0.001, neighbors)
    assert est[1] == pytest.approx(0.002)


def test_baseline_fixed_point_when_all_equal_gateway():
    # all nodes already at the (static) gateway value stay there
    neighbors = [(1, 2), (0, 2), (0, 1)]
    est = [0.0, 0.0, 0.0]
    out = sync_baseline_step(est, 0, 0.001, neighbors)
    assert out == [0.0, 0.0, 0.0]


def test_baseline_three_node_line_hand_iteration():
    # line 0-1-2; independent hand recurrence:
    #   t1(k) = (delta*k + t2(k-1)) / 2 ; t2(k) = t1(k-1)
    neighbors = [(1,), (0, 2), (1,)]
    delta = 0.001
    t1, t2 = 0.4, 0.8
    est = [0.0, t1, t2]
    for k in range(1, 4):
        t1, t2 = (delta * k + t2) / 2.0, t1
        est = sync_baseline_step(est, k, delta, neighbors)
        assert est[1] == pytest.approx(t1, abs=1e-15)
        assert est[2] == pytest.approx(t2, abs=1e-15)

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynmis.engine import (
    BitBudgetViolation,
    DuplicateSend,
    Engine,
    Kind,
    LocalityBreach,
    Message,
    Multicast,
    NonNeighborSend,
    NonTermination,
    locality_audit,
    log_budget,
)
from dynmis.graph import DynamicGraph
from dynmis.restart import approximate_m, build_bfs_tree


def star(k: int) -> DynamicGraph:
    return DynamicGraph.from_edges(k + 1, [(0, i) for i in range(1, k + 1)])


def fresh(graph: DynamicGraph, endpoints=(0,), **kw) -> Engine:
    eng = Engine(graph, record_trace=True, **kw)
    eng.begin_update(endpoints, 1, "+")
    return eng


def test_fanout_counts_one_message_per_neighbor():
    eng = fresh(star(3))
    assert eng.deliver_round([Multicast(0, [1, 2, 3], Kind.MIS_ENTER, (1,))]) == 3
    stats = eng.end_update()
    assert (stats.rounds, stats.messages_total, stats.messages_const_bits) == (1, 3, 3)


def test_two_messages_to_same_neighbor_rejected():
    eng = fresh(star(2))
    with pytest.raises(DuplicateSend):
        eng.deliver_round([Message(0, 1, Kind.MIS_ENTER), Message(0, 1, Kind.MIS_LEAVE)])


def test_multicast_repeating_destination_rejected():
    eng = fresh(star(2))
    with pytest.raises(DuplicateSend):
        eng.deliver_round([Multicast(0, [1, 1], Kind.MIS_ENTER)])


def test_send_over_non_edge_rejected():
    g = DynamicGraph.from_edges(3, [(0, 1)])
    eng = fresh(g)
    with pytest.raises(NonNeighborSend):
        eng.deliver_round([Message(0, 2, Kind.MIS_ENTER)])


def test_sleeping_vertex_cannot_send():
    eng = fresh(star(2))
    with pytest.raises(LocalityBreach):
        eng.deliver_round([Message(1, 0, Kind.WANT_ENTER)])


def test_woken_vertex_acts_next_round():
    eng = fresh(star(2))
    eng.deliver_round([Message(0, 1, Kind.PARENT_OFFER, (1,))])
    assert eng.is_awake(1)
    eng.deliver_round([Message(1, 0, Kind.HAVE_PARENT)])
    assert locality_audit(eng.trace) == "OK"
    assert [e.round_no for e in eng.trace.entries] == [1, 2]
    assert eng.trace.entries[1].src_awake_since == 1


def test_const_kind_payload_limited_to_eight_bits():
    eng = fresh(star(1))
    eng.deliver_round([Message(0, 1, Kind.WANT_ENTER, (255,))])
    with pytest.raises(BitBudgetViolation):
        eng.deliver_round([Message(0, 1, Kind.WANT_ENTER, (256,))])


def test_log_kind_payload_limited_to_budget():
    g = star(3)
    eng = fresh(g)
    assert eng.budget == log_budget(4) == 5
    eng.deliver_round([Message(0, 1, Kind.DEGREE_SUM, (31,))])
    with pytest.raises(BitBudgetViolation):
        eng.deliver_round([Message(0, 2, Kind.DEGREE_SUM, (32,))])


def test_wide_payload_split_into_budget_chunks():
    eng = fresh(star(1))
    payload = (2**40 + 5, -7)
    rounds = eng.deliver_wide([Message(0, 1, Kind.COND_EXP_PARTIAL, payload)])
    assert rounds == len(eng._split(payload)) >= 2
    assert eng.stats.rounds == rounds
    assert eng.stats.messages_log_bits == rounds


def test_round_cap_raises():
    eng = fresh(star(1), round_cap=3)
    eng.idle_rounds(3)
    with pytest.raises(NonTermination):
        eng.deliver_round([Message(0, 1, Kind.MIS_ENTER)])


def test_global_read_inside_protocol_scope_is_a_breach():
    g = star(2)
    eng = fresh(g)
    with eng.protocol_scope():
        _ = g.m_current
    with pytest.raises(LocalityBreach):
        locality_audit(eng.trace)


def test_global_read_outside_scope_is_not_recorded():
    g = star(2)
    eng = fresh(g)
    _ = g.m_current
    assert locality_audit(eng.trace) == "OK"


def test_restart_broadcast_trace_passes_audit():
    g = star(3)
    eng = fresh(g)
    with eng.protocol_scope():
        tree, _ = build_bfs_tree(eng, 0, lambda u, r: [(w, 1) for w in g.neighbors(u)] if u == 0 else [])
        assert approximate_m(eng, tree, g.degree) == 6
    assert locality_audit(eng.trace) == "OK"


def test_wakeups_counted_at_end_of_update():
    eng = fresh(star(3))
    eng.deliver_round([Multicast(0, [1, 2], Kind.MIS_ENTER)])
    assert eng.end_update().wakeups == 3


def test_begin_update_twice_is_an_error():
    eng = fresh(star(1))
    with pytest.raises(RuntimeError):
        eng.begin_update((0,))


@given(st.integers(1, 10**6))
def test_log_budget_is_exact_ceiling(n):
    b = log_budget(n)
    # smallest b with 2**b >= (n + 1)**2, i.e. ceil(2 log2(n + 1))
    assert 2**b >= (n + 1) ** 2 > 2 ** (b - 1)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 5), st.sampled_from([Kind.MIS_ENTER, Kind.DEGREE_SUM])), max_size=20))
def test_message_classes_partition_total(sends):
    g = star(5)
    eng = fresh(g)
    for dst, kind in sends:
        eng.deliver_round([Message(0, dst, kind, (1,))])
    s = eng.end_update()
    assert s.messages_total == s.messages_log_bits + s.messages_const_bits == len(sends)
    assert s.rounds == len(sends)

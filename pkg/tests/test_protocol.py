import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynmis.engine import Kind, locality_audit
from dynmis.graph import DynamicGraph, Op, UpdateEvent
from dynmis.protocol import (
    HIGH,
    LOW,
    Mode,
    Protocol,
    Situation,
    Trigger,
    UnmatchedTrigger,
    Verdict,
    VertexState,
    classify,
)
from dynmis.restart import RepairContext
from dynmis.verify import check_invariants, check_mis
from dynmis.workloads import WorkloadSpec, generate


def ins(u, v, t):
    return UpdateEvent(Op.INSERT, u, v, t)


def dele(u, v, t):
    return UpdateEvent(Op.DELETE, u, v, t)


def fresh(n, mode="m_max", solver="greedy"):
    g = DynamicGraph(n)
    return Protocol(g, mode=mode, solver=solver)


def crafted(n, edges, high=(), mis=(), mode="m_max", solver="greedy", d_prime=None, check=True):
    """A protocol whose states are set by hand, consistent with ``edges``.

    Isolated vertices are always members. With ``check`` the result must be
    a valid MIS satisfying the invariants; tests of repair steps pass False
    to start mid-repair.
    """
    p = fresh(n, mode, solver)
    for u, v in edges:
        p.graph.add_edge(u, v)
    high = set(high)
    mis = set(mis) | {v for v in range(n) if not p.graph.degree(v)}
    for v in range(n):
        s = p.states[v]
        s.d = p.graph.degree(v)
        s.cls = HIGH if v in high else LOW
        s.in_mis = v in mis
        s.d_prime = (d_prime or {}).get(v, max(2, s.d))
        s.S, s.t = s.d, 0
    for v in range(n):
        for u in p.graph.neighbors(v):
            p.states[v].see(u, p.states[u].cls, p.states[u].in_mis)
    if check:
        assert check_mis(p.graph, p.mis()).ok
        assert check_invariants(p.graph, p.states, mode, m_i=p.graph._m).ok
    return p


def run(p, events):
    out = []
    for e in events:
        out.append(p.apply(e))
        assert check_mis(p.graph, p.mis()).ok, e
    return out


def in_update(p, endpoints):
    p.engine.begin_update(endpoints, 1, "+")


# --- classify ---------------------------------------------------------------


def test_classify_degree_above_threshold():
    s = VertexState(0, d=3, d_prime=2)
    assert classify(s, Mode.MMAX, 1) is Verdict.GO_HIGH


def test_classify_below_threshold_m_max():
    s = VertexState(0, d=1, d_prime=2)
    assert classify(s, Mode.MMAX, 1) is Verdict.STAY_LOW


def test_classify_timestamp_rule():
    s = VertexState(0, d=1, d_prime=2, S=8, t=10)
    # 4 * (13 - 10) = 12 >= 8
    assert classify(s, Mode.MAVG, 13) is Verdict.GO_HIGH
    assert classify(s, Mode.MAVG, 11) is Verdict.STAY_LOW
    assert classify(s, Mode.MAVG, 13, action_pending=False) is Verdict.STAY_LOW


def test_classify_high_stays_high():
    s = VertexState(0, d=0, d_prime=2, cls=HIGH)
    assert classify(s, Mode.MAVG, 99) is Verdict.STAY_HIGH


# --- low-low updates ----------------------------------------------------------


def test_first_insert_larger_id_leaves():
    p = fresh(4)
    (s,) = run(p, [ins(1, 2, 1)])
    assert p.in_mis(1) and not p.in_mis(2)
    assert p.states[2].c == 1
    assert s.rounds >= 1 and s.mis_leaves == 1 and s.low_mis_leaves == 1


def test_delete_lets_dominated_vertex_enter():
    p = fresh(4)
    run(p, [ins(1, 2, 1)])
    run(p, [dele(1, 2, 2)])
    assert p.in_mis(2)
    assert p.states[2].c == 0


def test_insert_with_one_member_only_adjusts_counters():
    p = fresh(4)
    run(p, [ins(1, 2, 1)])
    (s,) = run(p, [ins(2, 3, 2)])
    assert p.mis() == {0, 1, 3}
    assert p.states[2].c == 2
    assert s.rounds == 1 and s.mis_enters == s.mis_leaves == 0


def test_delete_between_non_members_sends_nothing():
    p = fresh(6)
    run(p, [ins(0, 2, 1), ins(1, 3, 2), ins(2, 3, 3)])
    (s,) = run(p, [dele(2, 3, 4)])
    assert s.messages_total == 0 and s.rounds == 0


def test_counter_decrement_without_entry():
    p = fresh(4)
    run(p, [ins(0, 2, 1), ins(1, 2, 2)])
    assert p.states[2].c == 2
    (s,) = run(p, [dele(1, 2, 3)])
    assert p.states[2].c == 1 and not p.in_mis(2)
    assert s.messages_total == 0


def test_threshold_crossing_makes_center_high():
    p = fresh(4)
    run(p, [ins(0, 1, 1), ins(0, 2, 2)])
    stats = run(p, [ins(0, 3, 3)])
    assert p.states[0].cls == HIGH
    assert p.mis() == {1, 2, 3}
    assert p.transitions["L->H"] == 1
    assert stats[0].low_mis_leaves == 1


# --- turn-ordered entry of Low MIS neighbors ---------------------------------


def test_star_leaves_all_enter():
    # 0 just became High and left; its three leaves reached c = 0
    p = crafted(4, [(0, 1), (0, 2), (0, 3)], high={0}, check=False)
    in_update(p, (0,))
    assert p.low_neighbors_enter(0, [1, 2, 3]) == [1, 2, 3]


def test_triangle_first_in_turn_enters():
    # 0 has just left: 1 and 2 both reached c = 0 and are adjacent
    p = crafted(3, [(0, 1), (0, 2), (1, 2)], mis={0})
    s = p.states
    s[0].in_mis = False
    for x in (1, 2):
        s[x].see(0, LOW, False)
    in_update(p, (0,))
    assert p.low_neighbors_enter(0, [1, 2]) == [1]
    assert p.in_mis(1) and not p.in_mis(2)


def test_empty_requester_list_is_silent():
    p = crafted(2, [(0, 1)], mis={0})
    in_update(p, (0,))
    assert p.low_neighbors_enter(0, []) == []
    assert p.engine.stats.rounds == 0


# --- dispatch ---------------------------------------------------------------


def situation_one():
    """1 (Low, MIS, isolated) is about to meet 0 (High, MIS).

    0's High neighbors: 5 is dominated by Low members 10..39, 6 only by 0.
    """
    edges = [(0, 5), (0, 6)] + [(5, x) for x in range(10, 40)] + [(6, x) for x in range(40, 50)]
    edges += [(50, x) for x in range(40, 50)]
    high = {0, 5, 6, 50} | set(range(40, 50))
    mis = {0, 1, 50} | set(range(10, 40))
    return crafted(60, edges, high=high, mis=mis)


def test_dispatch_low_meets_high_member():
    p = situation_one()
    p.apply(ins(0, 1, 1))
    d = p.last_dispatch
    assert d.situation is Situation.LOW_JOINS_HIGH_MIS
    assert d.leader == 1 and d.U_prime == [0] and d.L == []
    assert d.U == [6]
    assert p.in_mis(1) and p.in_mis(6) and not p.in_mis(0)
    assert check_mis(p.graph, p.mis()).ok


def test_dispatch_mover_next_to_high_members():
    # 0 turned Low and entered; 1 and 3 are its High MIS neighbors
    p = crafted(6, [(0, 1), (0, 3), (1, 2), (3, 4)], high={0, 1, 2, 3, 4}, mis={1, 3})
    s = p.states
    s[0].cls, s[0].in_mis = LOW, True
    for x in (1, 3):
        s[x].see(0, LOW, True)
    in_update(p, (0,))
    p._announce([(0, [1, 3], Kind.MIS_ENTER)])
    trig = Trigger(Situation.MOVER_ENTERS, 0, entered=True)
    d = p.dispatch_situation(trig, [], [0], RepairContext(leader=0))
    assert d.leader == 0 and d.U_prime == [1, 3] and d.L == []
    assert d.U == [2, 4]


def test_dispatch_low_entrant_after_delete():
    # 0 lost its only Low MIS neighbor and entered next to High member 1
    p = crafted(4, [(0, 1), (1, 2)], high={1, 2}, mis={0, 1}, check=False)
    in_update(p, (0,))
    p._announce([(0, [1], Kind.MIS_ENTER)])
    trig = Trigger(Situation.LOW_ENTERS, 0, entered=True)
    d = p.dispatch_situation(trig, [], [0], RepairContext(leader=0))
    assert d.leader == 0 and d.U_prime == [1] and d.L == []
    assert d.U == [2]


def test_dispatch_departed_leader_is_a_candidate():
    # High 0 left the MIS, none of its Low neighbors could enter
    p = crafted(4, [(0, 1), (1, 2)], high={0}, mis={0, 2})
    p.states[0].in_mis = False
    in_update(p, (0,))
    trig = Trigger(Situation.LOW_BECAME_HIGH, 0, left=True)
    d = p.dispatch_situation(trig, [], [], RepairContext(leader=0))
    assert d.U == [0]


def test_dispatch_rejects_unknown_situation():
    p = crafted(2, [])
    in_update(p, (0,))
    with pytest.raises(UnmatchedTrigger):
        p.dispatch_situation(Trigger("bogus", 0), [], [], RepairContext(leader=0))


# --- High updates -----------------------------------------------------------


def test_high_high_insert_larger_id_leaves():
    p = crafted(4, [(0, 2), (1, 3)], high={0, 1, 2, 3}, mis={0, 1})
    run(p, [ins(0, 1, 1)])
    assert p.in_mis(0) and not p.in_mis(1)


def test_low_high_insert_without_member_is_counters_only():
    p = crafted(3, [(0, 1)], high={1}, mis={0})
    (s,) = run(p, [ins(1, 2, 1)])
    assert p.mis() == {0, 2}
    assert s.rounds == 1 and s.restarts_light + s.restarts_heavy == 0


def test_high_vertex_enters_after_losing_last_member():
    # 2 is High and dominated only by Low 0; 3 is its High neighbor
    p = crafted(5, [(0, 2), (2, 3), (3, 4)], high={2, 3}, mis={0, 4}, mode="m_avg")
    run(p, [dele(0, 2, 1)])
    assert p.in_mis(2)
    (ep,) = p.episodes_this_update
    assert ep.situation == "HIGH_ENTERS"
    assert ep.leader == 2


def test_high_high_delete_non_members_is_silent():
    p = crafted(4, [(0, 1), (0, 2), (1, 3)], high={0, 1}, mis={2, 3}, mode="m_avg")
    (s,) = run(p, [dele(0, 1, 1)])
    assert s.messages_total == 0


def test_m_max_demotion_enters_and_repairs():
    # 0 falls back to its threshold with only High MIS neighbor 1
    edges = [(0, 1), (0, 2), (0, 3), (1, 2)]
    p = crafted(4, edges, high={0, 1, 2}, mis={1, 3}, d_prime={0: 2})
    run(p, [dele(0, 3, 1)])
    assert p.states[0].cls == LOW
    assert p.in_mis(0)
    assert p.transitions["H->L"] >= 1


# --- restart movers ---------------------------------------------------------


@pytest.mark.parametrize("mode", ["m_max", "m_avg"])
def test_movers_get_doubled_threshold(mode):
    p = fresh(30, mode=mode)
    moves = []
    inner = p._move_to_low

    def spy(w, ctx, chained):
        inner(w, ctx, chained)
        s = p.states[w]
        moves.append((s.d, s.d_prime, s.S, ctx.S))

    p._move_to_low = spy
    run(p, generate(WorkloadSpec("ThresholdOscillation", 30, 1500, seed=2)))
    assert moves
    for d, dp, S, ctxS in moves:
        assert dp == max(2, 2 * d)
        if mode == "m_avg":
            assert S == ctxS


def test_deletion_keeps_edge_estimate():
    p = fresh(8, mode="m_avg")
    run(p, [ins(0, i, i) for i in range(1, 6)])
    assert p.states[0].S == 5
    run(p, [dele(0, 5, 6)])
    assert p.states[0].d == 4 and p.states[0].S == 5


def test_insert_refreshes_estimate_and_timestamp():
    p = fresh(4, mode="m_avg")
    run(p, [ins(0, 1, 1)])
    assert (p.states[0].S, p.states[0].t) == (1, 1)


# --- departures ------------------------------------------------------------


def test_both_endpoints_going_high_leave_twice():
    # two Low MIS centers with two Low leaves each, both at their threshold
    p = crafted(6, [(0, 2), (0, 3), (1, 4), (1, 5)], mis={0, 1}, d_prime={0: 2, 1: 2})
    (s,) = run(p, [ins(0, 1, 1)])
    assert p.states[0].cls == p.states[1].cls == HIGH
    assert s.low_mis_leaves == 2


# --- random streams --------------------------------------------------------


@settings(max_examples=40, deadline=None)
@given(
    st.sampled_from(["m_max", "m_avg"]),
    st.sampled_from(["greedy", "ggr20-sim", "derand-ghaffari"]),
    st.lists(st.tuples(st.integers(0, 9), st.integers(0, 9)), max_size=120),
)
def test_random_streams_keep_mis_and_invariants(mode, solver, pairs):
    g = DynamicGraph(10)
    p = Protocol(g, mode=mode, solver=solver)
    p.engine.record_trace = True
    live = set()
    for t, (u, v) in enumerate(pairs, start=1):
        if u == v:
            continue
        e = (min(u, v), max(u, v))
        ev = dele(*e, t) if e in live else ins(*e, t)
        live ^= {e}
        s = p.apply(ev)
        assert check_mis(g, p.mis()).ok
        assert check_invariants(g, p.states, mode, m_i=max(1, g._m), touched=e).ok
        assert locality_audit(p.engine.trace) == "OK"
        assert s.low_mis_leaves <= 2


def test_protocol_requires_empty_start():
    g = DynamicGraph.from_edges(2, [(0, 1)])
    with pytest.raises(ValueError):
        Protocol(g)

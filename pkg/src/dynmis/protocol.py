"""Per-vertex MIS maintenance: degree classes, counters and repairs.

The protocol is driven one update at a time. Every decision a vertex takes
reads only its own :class:`VertexState` (including ``view``, what its
neighbors last announced) and its own adjacency list; everything else
travels as engine messages.

What each vertex knows about its neighbors:

* every class change is announced to all neighbors;
* a Low vertex announces MIS changes to all neighbors;
* a High vertex announces MIS changes to its High neighbors only.

So High vertices see the MIS status of every neighbor, while a Low
vertex's view of a High neighbor's MIS flag may be stale. Low vertices only
act on ``c`` (their count of Low MIS neighbors), which is always exact.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

from .engine import Engine, Kind, Message, Multicast, UpdateStats
from .graph import DynamicGraph, Op, UpdateEvent, VertexId, elapsed, TIMESTAMP_WRAP
from .restart import (
    ROLE_B,
    ROLE_L,
    ROLE_LEADER,
    ROLE_W,
    RepairContext,
    approximate_m,
    build_bfs_tree,
    clean_vertices,
    refresh_on_insert,
)
from .static_mis import Disconnected, StaticMisRequest, solve

LOW, HIGH = 0, 1


class Mode(enum.Enum):
    MMAX = "m_max"
    MAVG = "m_avg"


class Verdict(enum.Enum):
    STAY_LOW = "StayLow"
    STAY_HIGH = "StayHigh"
    GO_HIGH = "GoHigh"


class Situation(enum.Enum):
    LOW_JOINS_HIGH_MIS = 1  # insert between a Low and a High MIS vertex
    MOVER_ENTERS = 2  # a restart mover entered the MIS next to High MIS vertices
    LOW_LEAVES = 3  # a Low vertex left the MIS
    LOW_BECAME_HIGH = 4  # a Low MIS vertex became High and left
    LOW_ENTERS = 5  # a Low vertex entered after a deletion
    HIGH_LEAVES = 6  # High-High insert, the loser left
    HIGH_ENTERS = 7  # a High vertex lost all MIS neighbors after a deletion


class UnmatchedTrigger(RuntimeError):
    pass


@dataclass(slots=True)
class VertexState:
    id: VertexId
    d: int = 0
    d_prime: int = 2
    cls: int = LOW
    in_mis: bool = True
    c: int = 0
    S: int = 0
    t: int = 0
    view: dict[VertexId, tuple[int, bool]] = field(default_factory=dict)

    def see(self, nbr: VertexId, cls: int, in_mis: bool) -> None:
        old = self.view.get(nbr)
        if old is not None and old[0] == LOW and old[1]:
            self.c -= 1
        self.view[nbr] = (cls, in_mis)
        if cls == LOW and in_mis:
            self.c += 1

    def forget(self, nbr: VertexId) -> None:
        old = self.view.pop(nbr, None)
        if old is not None and old[0] == LOW and old[1]:
            self.c -= 1

    def high_nbrs(self) -> list[VertexId]:
        return sorted(x for x, (cls, _) in self.view.items() if cls == HIGH)

    def has_mis_nbr(self) -> bool:
        return any(m for _, m in self.view.values())

    def high_mis_nbrs(self) -> list[VertexId]:
        return sorted(x for x, (cls, m) in self.view.items() if cls == HIGH and m)


def classify(st: VertexState, mode: Mode, t_trigger: int, action_pending: bool = True,
             wrap: int = TIMESTAMP_WRAP) -> Verdict:
    """Class of ``st`` before it acts.

    High never reverts here: a High vertex only returns to Low through a
    restart (or, in m_max mode, when its degree falls back to ``d_prime``,
    which the deletion handler does explicitly).
    """
    if st.cls == HIGH:
        return Verdict.STAY_HIGH
    if st.d > st.d_prime:
        return Verdict.GO_HIGH
    if mode is Mode.MAVG and action_pending and 4 * elapsed(t_trigger, st.t, wrap) >= st.S:
        return Verdict.GO_HIGH
    return Verdict.STAY_LOW


@dataclass
class Trigger:
    situation: Situation
    leader: VertexId
    left: bool = False
    entered: bool = False
    A: list[VertexId] = field(default_factory=list)
    depth: int = 1


@dataclass
class SituationDispatch:
    situation: Situation
    leader: VertexId
    U: list[VertexId]
    U_prime: list[VertexId]
    L: list[VertexId]
    departed: list[VertexId] = field(default_factory=list)


@dataclass
class EpisodeRecord:
    """One restart, as the protocol saw it (analysis fields are added by the harness)."""

    update_index: int
    situation: str
    leader: VertexId
    depth: int
    size: int
    S: int
    Y: int
    buckets: int
    remaining: int
    remaining_high: int
    movers: list[tuple[VertexId, int]]
    induced_edges: int = 0
    solver_height: int | None = None
    relay_extended: bool = False
    extra: dict = field(default_factory=dict)


class Protocol:
    """All vertex state machines of one simulation, sharing one engine."""

    def __init__(
        self,
        graph: DynamicGraph,
        engine: Engine | None = None,
        mode: Mode | str = Mode.MAVG,
        solver: str = "derand-ghaffari",
        wrap: int = TIMESTAMP_WRAP,
    ):
        self.graph = graph
        self.engine = engine if engine is not None else Engine(graph)
        self.mode = Mode(mode) if not isinstance(mode, Mode) else mode
        self.solver = solver
        self.wrap = wrap
        self.states = [VertexState(v) for v in range(graph.n)]
        for v in range(graph.n):
            if graph.degree(v):
                raise ValueError("the protocol starts from the empty graph")
        self.ts = 0
        self.index = 0
        # harness hooks
        self.on_restart: Callable[[EpisodeRecord, RepairContext], str | None] | None = None
        self.on_solver: Callable[[dict], None] | None = None
        self.episodes_this_update: list[EpisodeRecord] = []
        self._cls_at_start: dict[VertexId, int] = {}
        self._seat_cls: dict[VertexId, int] = {}
        self._chain_depth = 0
        self.transitions = {"L->H": 0, "H->L": 0}

    # ------------------------------------------------------------------
    # update entry point
    # ------------------------------------------------------------------

    def apply(self, e: UpdateEvent) -> UpdateStats:
        eng = self.engine
        self.index += 1
        self.graph.apply_update(e)
        eng.begin_update((e.u, e.v), self.index, e.op.value)
        self.ts = e.t % self.wrap
        self._cls_at_start = {}
        self._seat_cls = {}
        self._chain_depth = 0
        self.episodes_this_update = []
        try:
            with eng.protocol_scope():
                if e.op is Op.INSERT:
                    self.on_insert(e.u, e.v)
                else:
                    self.on_delete(e.u, e.v)
        finally:
            stats = eng.end_update()
        stats.restart_chain_depth = self._chain_depth
        return stats

    # ------------------------------------------------------------------
    # small primitives
    # ------------------------------------------------------------------

    @property
    def stats(self) -> UpdateStats:
        return self.engine.stats

    def in_mis(self, v: VertexId) -> bool:
        return self.states[v].in_mis

    def mis(self) -> set[VertexId]:
        return {s.id for s in self.states if s.in_mis}

    def _set_cls(self, v: VertexId, cls: int) -> None:
        st = self.states[v]
        self._cls_at_start.setdefault(v, st.cls)
        if st.cls != cls:
            self.transitions["H->L" if cls == LOW else "L->H"] += 1
        st.cls = cls

    def _set_mis(self, v: VertexId, flag: bool) -> None:
        st = self.states[v]
        if st.in_mis == flag:
            return
        st.in_mis = flag
        if flag:
            self.stats.mis_enters += 1
            self._seat_cls[v] = st.cls
        else:
            self.stats.mis_leaves += 1
            # a leave is Low when the seat was held as Low: the class at
            # entry if the vertex entered during this update, else at its start
            seat = self._seat_cls.pop(v, None)
            if seat is None:
                seat = self._cls_at_start.get(v, st.cls)
            if seat == LOW:
                self.stats.low_mis_leaves += 1

    def _announce(self, items: list[tuple[VertexId, list[VertexId], Kind]]) -> None:
        """One round: each ``v`` sends its current (class, MIS flag) to ``targets``."""
        batch = []
        for v, targets, kind in items:
            if targets:
                st = self.states[v]
                batch.append(Multicast(v, targets, kind, (st.cls, int(st.in_mis))))
        if not batch:
            return
        self.engine.deliver_round(batch)
        states = self.states
        for v, targets, _ in items:
            st = states[v]
            for x in targets:
                states[x].see(v, st.cls, st.in_mis)

    def _all_nbrs(self, v: VertexId) -> list[VertexId]:
        return list(self.graph.neighbors(v))

    def _ts_fires(self, v: VertexId) -> bool:
        st = self.states[v]
        return self.mode is Mode.MAVG and st.cls == LOW and 4 * elapsed(self.ts, st.t, self.wrap) >= st.S

    def _go_high(self, vs: list[VertexId], extra: list[Message] | None = None) -> None:
        """Low vertices ``vs`` become High: announce to everyone, High neighbors reply.

        ``extra`` messages share the announcement round.
        """
        for v in vs:
            self._set_cls(v, HIGH)
        batch: list = list(extra or [])
        for v in vs:
            st = self.states[v]
            nb = self._all_nbrs(v)
            if nb:
                batch.append(Multicast(v, nb, Kind.BECAME_HIGH, (HIGH, int(st.in_mis))))
        if batch:
            self.engine.deliver_round(batch)
        for v in vs:
            st = self.states[v]
            for x in self.graph.neighbors(v):
                self.states[x].see(v, HIGH, st.in_mis)
        # High neighbors tell the newcomer their MIS flag (its view of them may be stale)
        vset = set(vs)
        replies = []
        for v in vs:
            for y in self.states[v].high_nbrs():
                if y not in vset:
                    replies.append(Message(y, v, Kind.STATUS_REPLY, (HIGH, int(self.states[y].in_mis))))
        if replies:
            self.engine.deliver_round(replies)
            for m in replies:
                self.states[m.dst].see(m.src, HIGH, self.states[m.src].in_mis)

    def _want_enter(self, v: VertexId, include_high: bool) -> tuple[list[VertexId], bool]:
        """Neighbors of ``v`` (which just left or stopped counting) ask to enter.

        Low neighbors with ``c == 0`` want to enter (in m_avg mode they first
        check the timestamp rule and may go High instead); with
        ``include_high``, High neighbors left without MIS neighbors also
        report. One round, plus the reply round of any promotions.
        Returns the Low requesters and whether any High neighbor reported.
        """
        A, promote, highs = [], [], []
        for w in self.graph.neighbors(v):
            sw = self.states[w]
            if sw.in_mis:
                continue
            if sw.cls == LOW and sw.c == 0:
                (promote if self._ts_fires(w) else A).append(w)
            elif include_high and sw.cls == HIGH and not sw.has_mis_nbr():
                highs.append(w)
        msgs = [Message(w, v, Kind.WANT_ENTER, (1,)) for w in A + highs]
        if promote:
            self._go_high(promote, msgs)
        elif msgs:
            self.engine.deliver_round(msgs)
        for w in promote:
            if not self.states[w].has_mis_nbr():
                highs.append(w)
        return A, bool(highs)

    # ------------------------------------------------------------------
    # insertions
    # ------------------------------------------------------------------

    def on_insert(self, u: VertexId, v: VertexId) -> None:
        su, sv = self.states[u], self.states[v]
        if su.cls == HIGH and sv.cls == HIGH:
            self.on_insert_high_high(u, v)
        elif su.cls == HIGH or sv.cls == HIGH:
            low, high = (u, v) if su.cls == LOW else (v, u)
            self.on_insert_low_high(low, high)
        else:
            self.on_insert_low_low(u, v)

    def on_insert_low_low(self, u: VertexId, v: VertexId) -> None:
        self._insert_common(u, v)

    def on_insert_low_high(self, u: VertexId, v: VertexId) -> None:
        self._insert_common(u, v)

    def on_insert_high_high(self, u: VertexId, v: VertexId) -> None:
        self._insert_common(u, v)

    def _insert_common(self, u: VertexId, v: VertexId) -> None:
        su, sv = self.states[u], self.states[v]
        su.d += 1
        sv.d += 1
        if self.mode is Mode.MAVG:
            refresh_on_insert(su, self.ts)
            refresh_on_insert(sv, self.ts)
        # status exchange over the new edge
        self.engine.deliver_round([
            Message(u, v, Kind.STATUS_ON_INSERT, (su.cls, int(su.in_mis))),
            Message(v, u, Kind.STATUS_ON_INSERT, (sv.cls, int(sv.in_mis))),
        ])
        sv.see(u, su.cls, su.in_mis)
        su.see(v, sv.cls, sv.in_mis)
        for x in sorted((u, v)):
            sx = self.states[x]
            if sx.cls == LOW and sx.d > sx.d_prime:
                self._low_becomes_high(x)
        self._resolve_conflict(u, v)

    def _low_becomes_high(self, x: VertexId) -> None:
        """A Low vertex crossed its threshold; if it was in the MIS, run the
        low-neighbor entry procedure and leave when some neighbor must enter."""
        was_mis = self.states[x].in_mis
        self._go_high([x])
        if not was_mis:
            return
        A, _ = self._want_enter(x, include_high=False)
        if A:
            self._set_mis(x, False)
            self._announce([(x, self.states[x].high_nbrs(), Kind.MIS_LEAVE)])
            self._run_chain(Trigger(Situation.LOW_BECAME_HIGH, x, left=True, A=A))

    def _resolve_conflict(self, u: VertexId, v: VertexId) -> None:
        states = self.states
        while states[u].in_mis and states[v].in_mis:
            cu, cv = states[u].cls, states[v].cls
            if cu == LOW and cv == LOW:
                loser = max(u, v)
                if self._ts_fires(loser):
                    self._low_becomes_high(loser)
                    continue
                self._low_leaves(loser)
            elif cu != cv:
                low = u if cu == LOW else v
                if self._ts_fires(low):
                    self._low_becomes_high(low)
                    continue
                self._run_chain(Trigger(Situation.LOW_JOINS_HIGH_MIS, low, entered=True))
            else:
                self._high_leaves(max(u, v))

    def _low_leaves(self, x: VertexId) -> None:
        self._set_mis(x, False)
        self._announce([(x, self._all_nbrs(x), Kind.MIS_LEAVE)])
        A, high_wants = self._want_enter(x, include_high=True)
        if A or high_wants:
            self._run_chain(Trigger(Situation.LOW_LEAVES, x, left=True, A=A))

    def _high_leaves(self, x: VertexId) -> None:
        self._set_mis(x, False)
        self._announce([(x, self.states[x].high_nbrs(), Kind.MIS_LEAVE)])
        _, high_wants = self._want_enter(x, include_high=True)
        if high_wants:
            self._run_chain(Trigger(Situation.HIGH_LEAVES, x, left=True))

    # ------------------------------------------------------------------
    # deletions
    # ------------------------------------------------------------------

    def on_delete(self, u: VertexId, v: VertexId) -> None:
        su, sv = self.states[u], self.states[v]
        if su.cls == HIGH and sv.cls == HIGH:
            self.on_delete_high_high(u, v)
        elif su.cls == HIGH or sv.cls == HIGH:
            low, high = (u, v) if su.cls == LOW else (v, u)
            self.on_delete_low_high(low, high)
        else:
            self.on_delete_low_low(u, v)

    def on_delete_low_low(self, u: VertexId, v: VertexId) -> None:
        self._delete_common(u, v)

    def on_delete_low_high(self, u: VertexId, v: VertexId) -> None:
        self._delete_common(u, v)

    def on_delete_high_high(self, u: VertexId, v: VertexId) -> None:
        self._delete_common(u, v)

    def _delete_common(self, u: VertexId, v: VertexId) -> None:
        su, sv = self.states[u], self.states[v]
        su.d -= 1
        sv.d -= 1
        su.forget(v)
        sv.forget(u)
        if self.mode is Mode.MMAX:
            for x in sorted((u, v)):
                sx = self.states[x]
                if sx.cls == HIGH and sx.d <= sx.d_prime:
                    self._high_falls_low(x)
        for x in sorted((u, v)):
            sx = self.states[x]
            if sx.in_mis:
                continue
            if sx.cls == LOW and sx.c == 0:
                if self._ts_fires(x):
                    self._go_high([x])
                else:
                    self._low_enters(x)
                    continue
            if sx.cls == HIGH and not sx.has_mis_nbr():
                self._high_enters(x)

    def _high_falls_low(self, x: VertexId) -> None:
        """m_max mode: degree fell back to the threshold; the vertex turns Low
        keeping its threshold and joins the MIS if no Low neighbor is in it."""
        sx = self.states[x]
        self._set_cls(x, LOW)
        entered = not sx.in_mis and sx.c == 0
        if sx.in_mis and sx.c > 0:  # pragma: no cover - a High MIS vertex has no MIS neighbors
            self._set_mis(x, False)
        if entered:
            self._set_mis(x, True)
        self._announce([(x, self._all_nbrs(x), Kind.BECAME_LOW)])
        if entered and sx.high_mis_nbrs():
            self._run_chain(Trigger(Situation.MOVER_ENTERS, x, entered=True))

    def _low_enters(self, x: VertexId) -> None:
        self._set_mis(x, True)
        self._announce([(x, self._all_nbrs(x), Kind.MIS_ENTER)])
        if self._high_mis_reply([x]):
            self._run_chain(Trigger(Situation.LOW_ENTERS, x, entered=True))

    def _high_mis_reply(self, entrants: list[VertexId]) -> list[VertexId]:
        """High MIS neighbors of fresh Low entrants tell them they conflict.

        One round (skipped when silent). Returns the conflicting High vertices.
        """
        msgs = []
        for e in entrants:
            for h in self.graph.neighbors(e):
                sh = self.states[h]
                if sh.cls == HIGH and sh.in_mis:
                    msgs.append(Message(h, e, Kind.STATUS_REPLY, (HIGH, 1)))
        if not msgs:
            return []
        self.engine.deliver_round(msgs)
        for m in msgs:
            self.states[m.dst].see(m.src, HIGH, True)
        return sorted({m.src for m in msgs})

    def _high_enters(self, x: VertexId) -> None:
        """A High vertex lost its last MIS neighbor: it enters, tells its High
        neighbors, then a restart runs on its closed High neighborhood."""
        self._set_mis(x, True)
        self._announce([(x, self.states[x].high_nbrs(), Kind.MIS_ENTER)])
        self._run_chain(Trigger(Situation.HIGH_ENTERS, x, entered=True))

    # ------------------------------------------------------------------
    # repair episodes
    # ------------------------------------------------------------------

    def _run_chain(self, trig: Trigger) -> None:
        """Run one episode, then the episodes its restart movers triggered,
        depth first in id order."""
        self._chain_depth = max(self._chain_depth, trig.depth)
        for w in self._episode(trig):
            sw = self.states[w]
            if sw.cls == LOW and sw.in_mis and self._high_mis_reply([w]):
                self._run_chain(Trigger(Situation.MOVER_ENTERS, w, entered=True, depth=trig.depth + 1))

    def _episode(self, trig: Trigger) -> list[VertexId]:
        states = self.states
        eng = self.engine
        v = trig.leader
        A = sorted(trig.A)
        closed_nbhd_only = trig.situation is Situation.HIGH_ENTERS

        def offers(u: VertexId, role: int):
            hn = states[u].high_nbrs()
            if role == ROLE_LEADER:
                return [(w, ROLE_B) for w in hn] + [(a, ROLE_L) for a in A]
            if role == ROLE_L:
                return [(w, ROLE_B) for w in hn]
            if role == ROLE_B and not closed_nbhd_only:
                return [(w, ROLE_W) for w in hn]
            return []

        ctx = RepairContext(leader=v)
        ctx.tree, ctx.roles = build_bfs_tree(eng, v, offers)
        deg = lambda x: states[x].d  # noqa: E731
        ctx.S = approximate_m(eng, ctx.tree, deg)
        chained: list[VertexId] = []
        clean_vertices(
            eng, ctx, deg,
            is_high=lambda x: states[x].cls == HIGH,
            move=lambda w, c: self._move_to_low(w, c, chained),
            bucket_cap=self.graph.n.bit_length(),
        )
        rec = EpisodeRecord(
            update_index=self.index, situation=trig.situation.name, leader=v, depth=trig.depth,
            size=ctx.size, S=ctx.S, Y=ctx.Y, buckets=ctx.buckets_used, remaining=ctx.remaining,
            remaining_high=ctx.remaining_high, movers=list(ctx.movers),
        )
        self.episodes_this_update.append(rec)
        tag = self.on_restart(rec, ctx) if self.on_restart is not None else None
        if tag == "heavy":
            self.stats.restarts_heavy += 1
        else:
            self.stats.restarts_light += 1
        if closed_nbhd_only:
            return chained

        L = self.low_neighbors_enter(v, [a for a in A if states[a].cls == LOW and not states[a].in_mis])
        entrants = list(L)
        if trig.entered and states[v].cls == LOW and states[v].in_mis:
            entrants.append(v)
        disp = self.dispatch_situation(trig, L, entrants, ctx)
        self.last_dispatch = disp
        self.high_repair(disp, ctx, rec)
        return chained

    def _move_to_low(self, w: VertexId, ctx: RepairContext, chained: list[VertexId]) -> None:
        sw = self.states[w]
        was = sw.in_mis
        self._set_cls(w, LOW)
        sw.d_prime = max(2, 2 * sw.d)
        if self.mode is Mode.MAVG:
            sw.S = ctx.S
            sw.t = self.ts
        now = sw.c == 0
        self._set_mis(w, now)
        ctx.movers.append((w, sw.d))
        self._announce([(w, self._all_nbrs(w), Kind.BECAME_LOW)])
        if was and not now:
            ctx.movers_left.append(w)
        if now and not was and sw.high_mis_nbrs():
            chained.append(w)

    def low_neighbors_enter(self, v: VertexId, A: list[VertexId]) -> list[VertexId]:
        """Turn-ordered entry of Low requesters; returns those that entered.

        ``v`` hands out turn numbers; in its turn a requester enters iff no
        Low neighbor is in the MIS, else it reports to ``v`` and ``v``
        renumbers the later turns.
        """
        if not A:
            return []
        eng = self.engine
        eng.deliver_round(Message(v, a, Kind.TURN_ASSIGN, (k,)) for k, a in enumerate(A))
        entered = []
        for idx, a in enumerate(A):
            sa = self.states[a]
            if sa.cls == LOW and not sa.in_mis and sa.c == 0:
                self._set_mis(a, True)
                self._announce([(a, self._all_nbrs(a), Kind.MIS_ENTER)])
                entered.append(a)
            else:
                eng.deliver_round([Message(a, v, Kind.WANT_ENTER, (0,))])
                later = A[idx + 1:]
                if later:
                    eng.deliver_round(Message(v, b, Kind.TURN_RENUMBER, (j,)) for j, b in enumerate(later))
        return entered

    def dispatch_situation(self, trig: Trigger, L: list[VertexId], entrants: list[VertexId],
                           ctx: RepairContext) -> SituationDispatch:
        """Assemble (leader, U, U', L) after the restart.

        U' is the High MIS vertices next to fresh Low entrants (they reply to
        the entrants in one round); U is the High non-MIS vertices that just
        left the MIS or neighbor one that did, and have no MIS neighbor once
        U' is gone.
        """
        if not isinstance(trig.situation, Situation):
            raise UnmatchedTrigger(trig.situation)
        states = self.states
        u_prime = self._high_mis_reply(entrants)
        departed = set(u_prime) | set(ctx.movers_left)
        if trig.left:
            departed.add(trig.leader)
        up = set(u_prime)
        cand: set[VertexId] = set()
        for x in departed:
            # a departed vertex whose would-be entrants were all dominated is itself uncovered
            if states[x].cls == HIGH and not states[x].in_mis and x not in up:
                cand.add(x)
            for y in states[x].high_nbrs():
                sy = states[y]
                if sy.cls == HIGH and not sy.in_mis and y not in up:
                    cand.add(y)
        U = sorted(
            y for y in cand
            if not any(m and x not in up for x, (_, m) in states[y].view.items())
        )
        return SituationDispatch(trig.situation, trig.leader, U, u_prime, L, sorted(departed))

    def high_repair(self, disp: SituationDispatch, ctx: RepairContext, rec: EpisodeRecord | None = None) -> None:
        states = self.states
        eng = self.engine
        for h in disp.U_prime:
            self._set_mis(h, False)
        self._announce([(h, states[h].high_nbrs(), Kind.MIS_LEAVE) for h in disp.U_prime])
        U = [y for y in disp.U if not states[y].in_mis and not states[y].has_mis_nbr()]
        if not U:
            return
        Uset = set(U)
        eng.deliver_round(Multicast(x, states[x].high_nbrs(), Kind.IN_VH, ()) for x in U if states[x].high_nbrs())
        graph = self.graph
        if self.solver == "derand-ghaffari":
            v = disp.leader
            core = {v} | set(disp.U_prime) | Uset | set(disp.L) | set(ctx.movers_left)
            self._relay_to_leader(disp, Uset)
            s_in = frozenset(x for x in {v} | set(disp.L) if states[x].in_mis)
            members = core
            extended = False
            while True:
                adj = {x: graph.neighbor_set(x) & members for x in members}
                req = StaticMisRequest(adj, leader=v, s_in=s_in, candidates=frozenset(U), distance_bound=4)
                try:
                    res = solve(req, "derand-ghaffari", eng)
                    break
                except Disconnected:
                    if extended:
                        raise
                    extended = True
                    members = core | set(ctx.roles)
            if rec is not None:
                rec.solver_height = res.tree_height
                rec.relay_extended = extended
                if res.tree_height > 4:
                    rec.extra["distance_violation"] = res.tree_height
            if self.on_solver is not None:
                self.on_solver({"size": len(members), "height": res.tree_height,
                                "rounds": res.rounds, "phases": res.phases})
        else:
            adj = {x: graph.neighbor_set(x) & Uset for x in U}
            res = solve(StaticMisRequest(adj), self.solver, eng)
        joined = sorted(res.mis & Uset)
        for x in joined:
            self._set_mis(x, True)
        self._announce([(x, states[x].high_nbrs(), Kind.MIS_ENTER) for x in joined])

    def _relay_to_leader(self, disp: SituationDispatch, Uset: set[VertexId]) -> None:
        """U' members that heard from U tell one Low MIS neighbor in L or the
        leader; L members that heard pass it on to the leader."""
        states = self.states
        eng = self.engine
        v = disp.leader
        targets = set(disp.L) | {v}
        first = []
        for h in disp.U_prime:
            if not any(y in Uset for y in self.graph.neighbors(h)):
                continue
            opts = [g for g in self.graph.neighbors(h) if g in targets and states[g].cls == LOW]
            if opts:
                first.append(Message(h, min(opts), Kind.VH_EXISTS))
        if not first:
            return
        eng.deliver_round(first)
        second = sorted({m.dst for m in first if m.dst != v and self.graph.has_edge(m.dst, v)})
        if second:
            eng.deliver_round(Message(g, v, Kind.VH_EXISTS) for g in second)

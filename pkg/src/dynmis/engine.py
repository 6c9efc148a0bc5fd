"""Synchronous CONGEST rounds under local-wakeup semantics.

Every call to :meth:`Engine.deliver_round` is one round: all messages of the
batch are sent before any of them is visible, so a vertex can only react to
what it received in an earlier round. The engine enforces

* one message per ordered vertex pair per round,
* messages only along current edges,
* only awake vertices send (endpoints of the update, or earlier recipients),
* the payload bit budget.

The kind tag travels outside the payload (fixed ``KIND_TAG_BITS``) and is
not budget-checked; neither is the update timestamp header used in m_avg
mode (``TIMESTAMP_HEADER_BITS``).
"""

from __future__ import annotations

import contextlib
import enum
from dataclasses import dataclass, field, fields
from typing import Iterable, Sequence

from .graph import DynamicGraph, VertexId

KIND_TAG_BITS = 8
CONST_PAYLOAD_BITS = 8
TIMESTAMP_HEADER_BITS = 48


class ProtocolError(RuntimeError):
    """A model violation; always a bug in vertex logic."""


class BitBudgetViolation(ProtocolError):
    pass


class NonNeighborSend(ProtocolError):
    pass


class DuplicateSend(ProtocolError):
    pass


class LocalityBreach(ProtocolError):
    def __init__(self, vertex, round_no, what):
        super().__init__(f"vertex {vertex} in round {round_no}: {what}")
        self.vertex = vertex
        self.round_no = round_no


class NonTermination(ProtocolError):
    pass


class BitClass(enum.Enum):
    CONST = "const"
    LOG = "log"


_C, _L = BitClass.CONST, BitClass.LOG


class Kind(enum.Enum):
    # value: (wire name, bit class)
    MIS_ENTER = ("MisEnter", _C)
    MIS_LEAVE = ("MisLeave", _C)
    BECAME_HIGH = ("BecameHigh", _C)
    BECAME_LOW = ("BecameLow", _C)
    COUNTER_DEC = ("CounterDec", _C)
    WANT_ENTER = ("WantEnter", _C)
    TURN_ASSIGN = ("TurnAssign", _L)
    TURN_RENUMBER = ("TurnRenumber", _L)
    PARENT_OFFER = ("ParentOffer", _C)
    HAVE_PARENT = ("HaveParent", _C)
    DEGREE_QUERY = ("DegreeQuery", _C)
    DEGREE_SUM = ("DegreeSum", _L)
    BUCKET_QUERY = ("BucketQuery", _L)
    BUCKET_COUNT = ("BucketCount", _L)
    MOVE_TO_LOW = ("MoveToLow", _C)
    IN_VH = ("InVH'", _C)
    VH_EXISTS = ("VH'Exists", _C)
    SEED_BIT = ("SeedBit", _C)
    COND_EXP_PARTIAL = ("CondExpPartial", _L)
    TIMESTAMP = ("Timestamp", _L)
    STATUS_ON_INSERT = ("StatusOnInsert", _C)
    STATUS_REPLY = ("StatusReply", _C)
    SOLVER_STATE = ("SolverState", _L)
    SOLVER_JOIN = ("SolverJoin", _C)
    SOLVER_RETIRE = ("SolverRetire", _C)

    @property
    def wire(self) -> str:
        return self.value[0]

    @property
    def bit_class(self) -> BitClass:
        return self.value[1]


def log_budget(n: int) -> int:
    """``ceil(2 * log2(n + 1))`` computed exactly."""
    return ((n + 1) ** 2 - 1).bit_length()


def int_width(x: int) -> int:
    return max(1, abs(x).bit_length()) + (1 if x < 0 else 0)


def payload_width(payload: Sequence[int]) -> int:
    return sum(int_width(x) for x in payload)


@dataclass(slots=True)
class Message:
    src: VertexId
    dst: VertexId
    kind: Kind
    payload: tuple = ()


@dataclass(slots=True)
class Multicast:
    """The same unicast message to several neighbors (one message each)."""

    src: VertexId
    dsts: Sequence[VertexId]
    kind: Kind
    payload: tuple = ()


@dataclass
class UpdateStats:
    update_index: int = 0
    op: str = ""
    rounds: int = 0
    messages_total: int = 0
    messages_log_bits: int = 0
    messages_const_bits: int = 0
    wakeups: int = 0
    restarts_light: int = 0
    restarts_heavy: int = 0
    restart_chain_depth: int = 0
    mis_enters: int = 0
    mis_leaves: int = 0
    low_mis_leaves: int = 0
    m_current: int = 0

    CSV_HEADER = (
        "update_index,op,rounds,msgs_total,msgs_log,msgs_const,wakeups,"
        "restarts_light,restarts_heavy,chain_depth,mis_enters,mis_leaves,m_current"
    )

    def csv_row(self) -> str:
        return ",".join(
            str(x)
            for x in (
                self.update_index, self.op, self.rounds, self.messages_total,
                self.messages_log_bits, self.messages_const_bits, self.wakeups,
                self.restarts_light, self.restarts_heavy, self.restart_chain_depth,
                self.mis_enters, self.mis_leaves, self.m_current,
            )
        )

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class TraceEntry:
    round_no: int
    src: VertexId
    kind: str
    dsts: tuple
    src_awake_since: int


@dataclass
class Trace:
    entries: list[TraceEntry] = field(default_factory=list)
    global_reads: list[tuple[int, object, str]] = field(default_factory=list)


class Engine:
    """Round driver and message accountant for one simulation.

    ``wake_all`` models the static setting (every vertex awake from round 0),
    used when a solver runs standalone.
    """

    def __init__(
        self,
        graph: DynamicGraph,
        *,
        round_cap: int = 10**6,
        wake_all: bool = False,
        record_trace: bool = False,
    ):
        self.graph = graph
        self.n = graph.n
        self.budget = log_budget(graph.n)
        self.round_cap = round_cap
        self.wake_all = wake_all
        self.record_trace = record_trace
        self.stats = UpdateStats()
        self.trace = Trace()
        self.round_no = 0
        self._awake: dict[VertexId, int] = {}
        self.actor: VertexId | None = None
        self._in_update = False

    # -- update lifecycle --
    def begin_update(self, endpoints: Iterable[VertexId], index: int = 0, op: str = "") -> None:
        if self._in_update:
            raise ProtocolError("begin_update while an update is in flight")
        self._in_update = True
        self.stats = UpdateStats(update_index=index, op=op)
        self.trace = Trace()
        self.round_no = 0
        self._awake = {v: 0 for v in endpoints}

    def end_update(self) -> UpdateStats:
        self._in_update = False
        self.stats.wakeups = len(self._awake)
        self.stats.m_current = self.graph._m
        return self.stats

    @contextlib.contextmanager
    def protocol_scope(self):
        """Log every read of a global graph quantity made inside the scope."""
        prev = self.graph.global_read_hook
        self.graph.global_read_hook = self._on_global_read
        try:
            yield
        finally:
            self.graph.global_read_hook = prev

    def _on_global_read(self, what: str) -> None:
        self.trace.global_reads.append((self.round_no, self.actor, what))

    def is_awake(self, v: VertexId) -> bool:
        return self.wake_all or v in self._awake

    @property
    def awake(self) -> set[VertexId]:
        return set(self._awake)

    # -- rounds --
    def _check_payload(self, kind: Kind, payload: tuple) -> None:
        w = payload_width(payload)
        limit = CONST_PAYLOAD_BITS if kind.bit_class is BitClass.CONST else self.budget
        if w > limit:
            raise BitBudgetViolation(f"{kind.wire} payload {payload} is {w} bits > {limit}")

    def deliver_round(self, batch: Iterable[Message | Multicast]) -> int:
        """Run one synchronous round; return the number of messages delivered."""
        self.round_no += 1
        self.stats.rounds += 1
        if self.stats.rounds > self.round_cap:
            raise NonTermination(f"update exceeded {self.round_cap} rounds")
        sent: dict[VertexId, set[VertexId]] = {}
        recipients: list[Iterable[VertexId]] = []
        count = 0
        n_log = 0
        graph = self.graph
        for msg in batch:
            src = msg.src
            if not self.is_awake(src):
                raise LocalityBreach(src, self.round_no, "sleeping vertex sent a message")
            self._check_payload(msg.kind, msg.payload)
            if isinstance(msg, Multicast):
                dsts = msg.dsts
                dset = set(dsts)
                if len(dset) != len(dsts):
                    raise DuplicateSend(f"{src} multicast repeats a destination")
                if not dset <= graph.neighbor_set(src):
                    bad = min(dset - graph.neighbor_set(src))
                    raise NonNeighborSend(f"{src} -> {bad} ({msg.kind.wire}) is not an edge")
            else:
                dsts = (msg.dst,)
                dset = {msg.dst}
                if msg.dst not in graph.neighbor_set(src):
                    raise NonNeighborSend(f"{src} -> {msg.dst} ({msg.kind.wire}) is not an edge")
            prev = sent.get(src)
            if prev is None:
                sent[src] = dset
            else:
                if not prev.isdisjoint(dset):
                    raise DuplicateSend(f"{src} sent twice to {min(prev & dset)} in round {self.round_no}")
                prev |= dset
            k = len(dset)
            count += k
            if msg.kind.bit_class is BitClass.LOG:
                n_log += k
            recipients.append(dsts)
            if self.record_trace:
                self.trace.entries.append(
                    TraceEntry(self.round_no, src, msg.kind.wire, tuple(dsts),
                               -1 if self.wake_all else self._awake[src])
                )
        awake = self._awake
        r = self.round_no
        for dsts in recipients:
            for d in dsts:
                if d not in awake:
                    awake[d] = r
        self.stats.messages_total += count
        self.stats.messages_log_bits += n_log
        self.stats.messages_const_bits += count - n_log
        return count

    def idle_rounds(self, k: int) -> None:
        """Charge ``k`` rounds with no traffic (cost-model rounds)."""
        if k <= 0:
            return
        self.round_no += k
        self.stats.rounds += k
        if self.stats.rounds > self.round_cap:
            raise NonTermination(f"update exceeded {self.round_cap} rounds")

    def chunks(self, payload: Sequence[int]) -> int:
        """Rounds needed to ship a payload of arbitrary width in budget-sized pieces."""
        return max(1, -(-payload_width(payload) // self.budget))

    def deliver_wide(self, batch: Sequence[Message]) -> int:
        """Deliver messages whose payload may exceed one word.

        Each payload is split into ``budget``-bit chunks sent in consecutive
        rounds; returns the number of rounds used.
        """
        if not batch:
            return 0
        plan = [(m, self._split(m.payload)) for m in batch]
        rounds = max(len(parts) for _, parts in plan)
        for j in range(rounds):
            self.deliver_round(
                Message(m.src, m.dst, m.kind, parts[j]) for m, parts in plan if j < len(parts)
            )
        return rounds

    def _split(self, payload: Sequence[int]) -> list[tuple[int]]:
        # encode as one non-negative integer (sign-magnitude per field), then chunk
        bits = 0
        acc = 0
        for x in payload:
            w = int_width(x)
            enc = (abs(x) << 1 | 1) if x < 0 else abs(x) << 1
            acc |= enc << bits
            bits += w + 1
        size = max(1, self.budget - 1)
        parts = []
        while True:
            parts.append((acc & ((1 << size) - 1),))
            acc >>= size
            bits -= size
            if bits <= 0:
                break
        return parts


def locality_audit(trace: Trace) -> str:
    """Check a recorded update trace for locality violations.

    Every sender must have been awake before it sent (an update endpoint,
    or a recipient of an earlier round) and no vertex action may read a
    global quantity. Raises :class:`LocalityBreach`; returns ``"OK"``.
    """
    for rnd, actor, what in trace.global_reads:
        raise LocalityBreach(actor, rnd, f"read global quantity {what}")
    for e in trace.entries:
        if e.src_awake_since >= e.round_no:
            raise LocalityBreach(e.src, e.round_no, "sent in the round it was woken")
    return "OK"

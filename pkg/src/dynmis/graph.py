"""Ground-truth dynamic graph and update streams.

Only the engine and the verifier look at the global picture held here.
Vertex logic reads its own adjacency list through ``neighbors``/``degree``.
"""

from __future__ import annotations

import enum
import io
import os
from bisect import insort
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, TextIO

VertexId = int

#: Wraparound constant for update timestamps.
TIMESTAMP_WRAP = 2**48


class IllegalUpdate(ValueError):
    pass


class ParseError(ValueError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


class Op(enum.Enum):
    INSERT = "+"
    DELETE = "-"


@dataclass(frozen=True)
class UpdateEvent:
    op: Op
    u: VertexId
    v: VertexId
    t: int

    def __post_init__(self):
        if self.u == self.v:
            raise IllegalUpdate(f"self-loop on {self.u}")

    def key(self) -> tuple[int, int]:
        return (self.u, self.v) if self.u < self.v else (self.v, self.u)


def elapsed(t_now: int, t_then: int, wrap: int = TIMESTAMP_WRAP) -> int:
    """Updates elapsed between two wrapped timestamps.

    A timestamp that is smaller than the stored one means the counter wrapped,
    so ``wrap`` is added until the difference is non-negative.
    """
    d = t_now - t_then
    while d < 0:
        d += wrap
    return d


class DynamicGraph:
    """Undirected simple graph on the fixed vertex set ``0..n-1``.

    Adjacency lists are kept sorted so every iteration order downstream is
    reproducible.
    """

    def __init__(self, n: int):
        if n < 1:
            raise ValueError("n must be positive")
        self.n = n
        self._adj: list[list[VertexId]] = [[] for _ in range(n)]
        self._sets: list[set[VertexId]] = [set() for _ in range(n)]
        self._m = 0
        self._m_max = 0
        # called with the attribute name whenever a global quantity is read
        self.global_read_hook: Callable[[str], None] | None = None

    # -- local knowledge (a vertex may read its own incident edges) --
    def neighbors(self, v: VertexId) -> list[VertexId]:
        return self._adj[v]

    def neighbor_set(self, v: VertexId) -> set[VertexId]:
        return self._sets[v]

    def degree(self, v: VertexId) -> int:
        return len(self._adj[v])

    def has_edge(self, u: VertexId, v: VertexId) -> bool:
        return v in self._sets[u]

    # -- global quantities --
    @property
    def m_current(self) -> int:
        if self.global_read_hook is not None:
            self.global_read_hook("m_current")
        return self._m

    @property
    def m_max(self) -> int:
        if self.global_read_hook is not None:
            self.global_read_hook("m_max")
        return self._m_max

    def edges(self) -> Iterator[tuple[VertexId, VertexId]]:
        for u in range(self.n):
            for v in self._adj[u]:
                if u < v:
                    yield u, v

    def _check_vertex(self, v: VertexId) -> None:
        if not 0 <= v < self.n:
            raise IllegalUpdate(f"vertex {v} outside 0..{self.n - 1}")

    def add_edge(self, u: VertexId, v: VertexId) -> None:
        self._check_vertex(u)
        self._check_vertex(v)
        if u == v:
            raise IllegalUpdate(f"self-loop on {u}")
        if v in self._sets[u]:
            raise IllegalUpdate(f"duplicate insert of ({u}, {v})")
        self._sets[u].add(v)
        self._sets[v].add(u)
        insort(self._adj[u], v)
        insort(self._adj[v], u)
        self._m += 1
        if self._m > self._m_max:
            self._m_max = self._m

    def remove_edge(self, u: VertexId, v: VertexId) -> None:
        self._check_vertex(u)
        self._check_vertex(v)
        if v not in self._sets[u]:
            raise IllegalUpdate(f"delete of missing edge ({u}, {v})")
        self._sets[u].discard(v)
        self._sets[v].discard(u)
        self._adj[u].remove(v)
        self._adj[v].remove(u)
        self._m -= 1

    def apply_update(self, e: UpdateEvent) -> tuple[VertexId, VertexId]:
        """Apply ``e`` and return the two endpoints, which wake up."""
        if e.op is Op.INSERT:
            self.add_edge(e.u, e.v)
        else:
            self.remove_edge(e.u, e.v)
        return (e.u, e.v)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "DynamicGraph":
        g = cls(n)
        for u, v in edges:
            g.add_edge(u, v)
        return g

    def copy(self) -> "DynamicGraph":
        g = DynamicGraph(self.n)
        g._adj = [list(a) for a in self._adj]
        g._sets = [set(s) for s in self._sets]
        g._m = self._m
        g._m_max = self._m_max
        return g


# ---------------------------------------------------------------------------
# update-stream text format
# ---------------------------------------------------------------------------


def parse_stream(text: str | TextIO) -> list[UpdateEvent]:
    """Parse ``+ u v`` / ``- u v`` lines; ``#`` starts a comment line.

    Timestamps are assigned 1..k in file order. Legality against a graph
    (duplicate insert, missing delete) is checked on replay, not here.
    """
    fh = io.StringIO(text) if isinstance(text, str) else text
    events: list[UpdateEvent] = []
    for lineno, raw in enumerate(fh, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3 or parts[0] not in ("+", "-"):
            raise ParseError(lineno, f"expected '+ u v' or '- u v', got {line!r}")
        try:
            u, v = int(parts[1]), int(parts[2])
        except ValueError:
            raise ParseError(lineno, f"non-integer vertex id in {line!r}") from None
        if u < 0 or v < 0:
            raise ParseError(lineno, "vertex ids must be non-negative")
        if u == v:
            raise ParseError(lineno, f"self-loop on {u}")
        events.append(UpdateEvent(Op(parts[0]), u, v, len(events) + 1))
    return events


def load_stream(source: str | os.PathLike | TextIO) -> list[UpdateEvent]:
    """Load an update stream from a path or an open text handle."""
    if hasattr(source, "read"):
        return parse_stream(source)  # type: ignore[arg-type]
    with open(source, encoding="utf-8") as fh:
        return parse_stream(fh)


def format_stream(events: Iterable[UpdateEvent], header: str | None = None) -> str:
    lines = []
    if header:
        lines.extend(f"# {h}" for h in header.splitlines())
    lines.extend(f"{e.op.value} {e.u} {e.v}" for e in events)
    return "\n".join(lines) + "\n"


def dump_stream(events: Iterable[UpdateEvent], path: str | os.PathLike, header: str | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_stream(events, header))


def replay(n: int, events: Iterable[UpdateEvent]) -> DynamicGraph:
    """Replay a stream on an empty graph, raising IllegalUpdate on bad ops."""
    g = DynamicGraph(n)
    for e in events:
        g.apply_update(e)
    return g

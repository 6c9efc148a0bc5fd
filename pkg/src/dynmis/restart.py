"""Restart: BFS tree, degree-sum aggregation and cleaning of V_H.

The three steps run inside engine rounds on the repair subgraph
``{leader} | L | B | W``. Fractional thresholds are compared with exact
integer arithmetic: ``k > S**(1/3)`` is ``k**3 > S``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

from .engine import Engine, Kind, Message, Multicast
from .graph import VertexId

ROLE_LEADER, ROLE_L, ROLE_B, ROLE_W = 0, 1, 2, 3


@dataclass
class Tree:
    root: VertexId
    parent: dict[VertexId, VertexId] = field(default_factory=dict)
    children: dict[VertexId, list[VertexId]] = field(default_factory=dict)
    depth: dict[VertexId, int] = field(default_factory=dict)

    @property
    def vertices(self) -> list[VertexId]:
        return sorted(self.depth)

    @property
    def height(self) -> int:
        return max(self.depth.values(), default=0)

    def levels(self) -> list[list[VertexId]]:
        out: list[list[VertexId]] = [[] for _ in range(self.height + 1)]
        for v in sorted(self.depth):
            out[self.depth[v]].append(v)
        return out


@dataclass
class RepairContext:
    leader: VertexId
    roles: dict[VertexId, int] = field(default_factory=dict)
    tree: Tree | None = None
    S: int = 0
    size: int = 0
    Y: int = 0
    buckets_used: int = 0
    marked: list[VertexId] = field(default_factory=list)
    movers: list[tuple[VertexId, int]] = field(default_factory=list)  # (vertex, degree at move)
    movers_left: list[VertexId] = field(default_factory=list)
    remaining: int = 0
    remaining_high: int = 0
    unreached: list[VertexId] = field(default_factory=list)

    @property
    def V_prime(self) -> list[VertexId]:
        return sorted(self.roles)

    @property
    def V_low_moved(self) -> list[VertexId]:
        return [v for v, _ in self.movers]


# ---------------------------------------------------------------------------
# tree primitives
# ---------------------------------------------------------------------------


def broadcast(engine: Engine, tree: Tree, kind: Kind, payload: tuple = ()) -> None:
    """Push one message from the root down every tree edge, level by level."""
    for level in tree.levels()[:-1]:
        batch = [Multicast(u, tree.children[u], kind, payload) for u in level if tree.children.get(u)]
        if batch:
            engine.deliver_round(batch)


def convergecast(engine: Engine, tree: Tree, values: dict[VertexId, int], kind: Kind) -> int:
    """Sum ``values`` up the tree; returns the total the root ends with."""
    partial = {v: values.get(v, 0) for v in tree.depth}
    for level in reversed(tree.levels()[1:]):
        engine.deliver_round(Message(u, tree.parent[u], kind, (partial[u],)) for u in level)
        for u in level:
            partial[tree.parent[u]] += partial[u]
    return partial[tree.root]


def convergecast_wide(engine: Engine, tree: Tree, values: dict[VertexId, tuple[int, ...]], kind: Kind) -> tuple[int, ...]:
    """Component-wise sum of integer tuples, chunking payloads wider than a word."""
    width = len(next(iter(values.values()))) if values else 1
    zero = (0,) * width
    partial = {v: values.get(v, zero) for v in tree.depth}
    for level in reversed(tree.levels()[1:]):
        engine.deliver_wide([Message(u, tree.parent[u], kind, partial[u]) for u in level])
        for u in level:
            p = tree.parent[u]
            partial[p] = tuple(a + b for a, b in zip(partial[p], partial[u]))
    return partial[tree.root]


def preorder_ranks(engine: Engine, tree: Tree) -> dict[VertexId, int]:
    """Number the tree vertices ``0..size-1`` in preorder.

    Subtree sizes travel up (one round per level), then every parent hands
    each child the first rank of its subtree (one round per level).
    """
    size = {v: 1 for v in tree.depth}
    levels = tree.levels()
    for level in reversed(levels[1:]):
        engine.deliver_round(Message(u, tree.parent[u], Kind.BUCKET_COUNT, (size[u],)) for u in level)
        for u in level:
            size[tree.parent[u]] += size[u]
    rank = {tree.root: 0}
    for level in levels[:-1]:
        batch = []
        for u in level:
            nxt = rank[u] + 1
            for c in tree.children.get(u, ()):
                rank[c] = nxt
                batch.append(Message(u, c, Kind.TURN_ASSIGN, (nxt,)))
                nxt += size[c]
        if batch:
            engine.deliver_round(batch)
    return rank


# ---------------------------------------------------------------------------
# Algorithm: create BFS tree
# ---------------------------------------------------------------------------


def build_bfs_tree(
    engine: Engine,
    leader: VertexId,
    offers: Callable[[VertexId, int], Iterable[tuple[VertexId, int]]],
) -> tuple[Tree, dict[VertexId, int]]:
    """Grow a tree from ``leader`` by parent offers.

    ``offers(u, role)`` lists ``(w, role_of_w)`` pairs that ``u`` (holding
    ``role``) invites; it only names neighbors ``u`` knows to belong to the
    repair subgraph. An unparented vertex accepts the offer with the lowest
    role, ties to the smallest sender id, and tells that parent in the next
    round. Returns the tree and the role of every member.
    """
    tree = Tree(leader, children={leader: []}, depth={leader: 0})
    roles = {leader: ROLE_LEADER}
    frontier = [leader]
    pending_ack: list[tuple[VertexId, VertexId]] = []
    heard: dict[VertexId, set[VertexId]] = {}
    while frontier or pending_ack:
        batch: list[Message | Multicast] = [Message(c, p, Kind.HAVE_PARENT) for c, p in pending_ack]
        got: dict[VertexId, list[tuple[int, VertexId]]] = {}
        for u in frontier:
            skip = heard.get(u, set())
            skip.add(tree.parent.get(u, -1))
            targets = [(w, r) for w, r in offers(u, roles[u]) if w not in skip and w != leader]
            by_role: dict[int, list[VertexId]] = {}
            for w, r in targets:
                by_role.setdefault(r, []).append(w)
            # one message per neighbor per round: a vertex offered two roles gets the lower
            seen: set[VertexId] = set()
            for r in sorted(by_role):
                ws = [w for w in by_role[r] if w not in seen]
                seen.update(ws)
                if ws:
                    batch.append(Multicast(u, ws, Kind.PARENT_OFFER, (r,)))
                for w in ws:
                    got.setdefault(w, []).append((r, u))
        if not batch:
            break
        engine.deliver_round(batch)
        pending_ack = []
        new_frontier = []
        for w in sorted(got):
            heard.setdefault(w, set()).update(u for _, u in got[w])
            if w in tree.depth:
                continue
            r, p = min(got[w])
            tree.parent[w] = p
            tree.depth[w] = tree.depth[p] + 1
            tree.children.setdefault(p, []).append(w)
            tree.children.setdefault(w, [])
            roles[w] = r
            pending_ack.append((w, p))
            new_frontier.append(w)
        frontier = new_frontier
    for kids in tree.children.values():
        kids.sort()
    return tree, roles


# ---------------------------------------------------------------------------
# Algorithm: approximate m
# ---------------------------------------------------------------------------


def approximate_m(engine: Engine, tree: Tree, degree: Callable[[VertexId], int]) -> int:
    """Convergecast global degrees to the root and broadcast the sum back."""
    broadcast(engine, tree, Kind.DEGREE_QUERY)
    s = convergecast(engine, tree, {v: degree(v) for v in tree.depth}, Kind.DEGREE_SUM)
    broadcast(engine, tree, Kind.DEGREE_SUM, (s,))
    return s


def icbrt_exceeds(k: int, s: int) -> bool:
    """``k > s ** (1/3)`` exactly."""
    return k > 0 and k**3 > s


def bucket_of(d: int) -> int:
    """Index ``i`` with ``d`` in ``[2**i, 2**(i+1))``; degree 0 goes to bucket 0."""
    return max(0, d.bit_length() - 1)


# ---------------------------------------------------------------------------
# Algorithm: restart (clean vertices)
# ---------------------------------------------------------------------------


def clean_vertices(
    engine: Engine,
    ctx: RepairContext,
    degree: Callable[[VertexId], int],
    is_high: Callable[[VertexId], bool],
    move: Callable[[VertexId, RepairContext], None],
    bucket_cap: int,
) -> None:
    """Mark vertices bucket by bucket until at most ``S**(1/3)`` stay unmarked.

    Marked High vertices are handed to ``move`` one per round in id order
    (the moves must be sequential: each may enter the MIS and later movers
    must see it).
    """
    tree = ctx.tree
    assert tree is not None
    ctx.size = convergecast(engine, tree, {v: 1 for v in tree.depth}, Kind.BUCKET_COUNT)
    S = ctx.S
    marked: set[VertexId] = set()
    i = 0
    if icbrt_exceeds(ctx.size, S):
        while icbrt_exceeds(ctx.size - ctx.Y, S) and i <= bucket_cap:
            broadcast(engine, tree, Kind.BUCKET_QUERY, (i,))
            now = {v for v in tree.depth if v not in marked and bucket_of(degree(v)) == i}
            marked |= now
            y_i = convergecast(engine, tree, {v: 1 for v in now}, Kind.BUCKET_COUNT)
            ctx.Y += y_i
            i += 1
        ctx.buckets_used = i
        if marked:
            broadcast(engine, tree, Kind.MOVE_TO_LOW)
    ctx.marked = sorted(marked)
    ctx.remaining = ctx.size - ctx.Y
    for w in ctx.marked:
        if is_high(w):
            move(w, ctx)
    ctx.remaining_high = sum(1 for v in tree.depth if v not in marked and is_high(v))


def refresh_on_insert(state, t: int) -> bool:
    """Raise the local edge estimate to the degree after an incident insertion.

    Returns True when the estimate changed (and ``t`` was recorded).
    Deletions never call this.
    """
    if state.d > state.S:
        state.S = state.d
        state.t = t
        return True
    return False

"""Input-respecting static MIS solvers.

Each solver extends a fixed independent set ``s_in`` to an MIS of a
subgraph, charging its rounds and messages to an :class:`Engine`. Vertices
outside ``candidates`` (when given) are relays: they forward aggregation
traffic but never join.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterable

from .engine import Engine, Kind, Message, Multicast, log_budget
from .graph import DynamicGraph, VertexId
from .restart import broadcast, build_bfs_tree, convergecast, convergecast_wide, preorder_ranks


class InvalidInput(ValueError):
    pass


class Disconnected(RuntimeError):
    pass


class SolverFailure(RuntimeError):
    """The phase cap ran out with undecided vertices left."""


@dataclass
class StaticMisRequest:
    adj: dict[VertexId, set[VertexId]]
    leader: VertexId | None = None
    s_in: frozenset[VertexId] = frozenset()
    candidates: frozenset[VertexId] | None = None
    distance_bound: int | None = None

    @classmethod
    def from_edges(cls, vertices: Iterable[VertexId], edges: Iterable[tuple[VertexId, VertexId]], **kw) -> "StaticMisRequest":
        adj: dict[VertexId, set[VertexId]] = {v: set() for v in vertices}
        for u, v in edges:
            adj[u].add(v)
            adj[v].add(u)
        return cls(adj, **kw)

    @property
    def vertices(self) -> list[VertexId]:
        return sorted(self.adj)

    def allowed(self) -> set[VertexId]:
        return set(self.adj) if self.candidates is None else set(self.candidates) & set(self.adj)

    def validate(self) -> None:
        for v in self.s_in:
            if v not in self.adj:
                raise InvalidInput(f"S_in vertex {v} is outside the subgraph")
            if self.adj[v] & self.s_in:
                raise InvalidInput(f"S_in is not independent at {v}")
        for v, nb in self.adj.items():
            for u in nb:
                if v not in self.adj.get(u, ()):
                    raise InvalidInput(f"adjacency is not symmetric at ({v}, {u})")


@dataclass
class SolveResult:
    mis: frozenset[VertexId]
    rounds: int = 0
    messages: int = 0
    phases: int = 0
    tree_height: int = 0
    undecided_trace: list[int] = field(default_factory=list)


def standalone_engine(req: StaticMisRequest) -> Engine:
    """A fresh engine over just the request's subgraph, every vertex awake."""
    n = max(req.adj, default=0) + 1
    g = DynamicGraph(n)
    for v, nb in req.adj.items():
        for u in nb:
            if v < u:
                g.add_edge(v, u)
    eng = Engine(g, wake_all=True)
    eng.begin_update(())
    return eng


def _run(solver: Callable[[StaticMisRequest, Engine], SolveResult], req: StaticMisRequest, engine: Engine | None) -> SolveResult:
    req.validate()
    eng = engine if engine is not None else standalone_engine(req)
    r0, m0 = eng.stats.rounds, eng.stats.messages_total
    res = solver(req, eng)
    res.rounds = eng.stats.rounds - r0
    res.messages = eng.stats.messages_total - m0
    return res


# ---------------------------------------------------------------------------
# reference: local-minimum greedy
# ---------------------------------------------------------------------------


def _retire_round(engine: Engine, req: StaticMisRequest, retired: Iterable[VertexId], undecided: set[VertexId]) -> None:
    batch = []
    for w in sorted(retired):
        dsts = sorted(req.adj[w] & undecided)
        if dsts:
            batch.append(Multicast(w, dsts, Kind.SOLVER_RETIRE))
    if batch:
        engine.deliver_round(batch)


def _join_round(engine: Engine, req: StaticMisRequest, joiners: Iterable[VertexId], undecided: set[VertexId]) -> set[VertexId]:
    """Joiners tell undecided neighbors; returns the newly dominated vertices."""
    batch = []
    hit: set[VertexId] = set()
    for v in sorted(joiners):
        dsts = sorted(req.adj[v] & undecided)
        if dsts:
            batch.append(Multicast(v, dsts, Kind.SOLVER_JOIN))
            hit.update(dsts)
    if batch:
        engine.deliver_round(batch)
    return hit


def _greedy(req: StaticMisRequest, engine: Engine) -> SolveResult:
    mis = set(req.s_in)
    undecided = req.allowed() - mis
    dominated = _join_round(engine, req, mis, undecided)
    undecided -= dominated
    _retire_round(engine, req, dominated, undecided)
    phases = 0
    trace = [len(undecided)]
    while undecided:
        phases += 1
        joiners = {v for v in undecided if all(v < u for u in req.adj[v] & undecided)}
        mis |= joiners
        undecided -= joiners
        dominated = _join_round(engine, req, joiners, undecided)
        undecided -= dominated
        _retire_round(engine, req, dominated, undecided)
        trace.append(len(undecided))
    return SolveResult(frozenset(mis), phases=phases, undecided_trace=trace)


def greedy_by_id(req: StaticMisRequest, engine: Engine | None = None) -> SolveResult:
    """S_in first, then every undecided local id-minimum joins each iteration.

    The result equals the sequential greedy over increasing ids.
    """
    return _run(_greedy, req, engine)


def ggr20_round_charge(n: int) -> int:
    """``ceil(log2(n) ** 5)``, the charged round cost of the stand-in solver."""
    if n <= 1:
        return 0
    if n & (n - 1) == 0:
        return (n.bit_length() - 1) ** 5
    return math.ceil(math.log2(n) ** 5)


def simulated_ggr20(req: StaticMisRequest, engine: Engine | None = None) -> SolveResult:
    """Greedy result and messages, rounds charged at the polylog cost model."""

    def solve(r: StaticMisRequest, eng: Engine) -> SolveResult:
        r0 = eng.stats.rounds
        res = _greedy(r, eng)
        eng.idle_rounds(ggr20_round_charge(eng.n) - (eng.stats.rounds - r0))
        return res

    return _run(solve, req, engine)


# ---------------------------------------------------------------------------
# GF(2^k) affine hashing with exact conditional probabilities
# ---------------------------------------------------------------------------


def _pmod(a: int, f: int) -> int:
    df = f.bit_length()
    while a.bit_length() >= df:
        a ^= f << (a.bit_length() - df)
    return a


def _pmulmod(a: int, b: int, f: int) -> int:
    r = 0
    while b:
        if b & 1:
            r ^= a
        b >>= 1
        a <<= 1
        if a.bit_length() == f.bit_length():
            a ^= f
    return r


def _pgcd(a: int, b: int) -> int:
    while b:
        a, b = b, _pmod(a, b)
    return a


def _is_irreducible(f: int) -> bool:
    k = f.bit_length() - 1
    x = 0b10
    # x^(2^i) mod f for i = 1..k
    powers = [x]
    for _ in range(k):
        powers.append(_pmulmod(powers[-1], powers[-1], f))
    if powers[k] != _pmod(x, f):
        return False
    primes = [q for q in range(2, k + 1) if k % q == 0 and all(q % r for r in range(2, q))]
    return all(_pgcd(f, powers[k // q] ^ x) == 1 for q in primes)


@lru_cache(maxsize=None)
def irreducible_poly(k: int) -> int:
    """Smallest irreducible polynomial of degree ``k`` over GF(2), as a bitmask."""
    for low in range(1, 1 << k, 2):
        f = (1 << k) | low
        if _is_irreducible(f):
            return f
    raise ValueError(f"no irreducible polynomial of degree {k}")  # pragma: no cover


class AffineHash:
    """``h(x) = a*x + b`` over GF(2^k); the seed is ``a`` (bits 0..k-1) then ``b``.

    Every output bit is a GF(2)-linear form in the seed bits, so the
    probability that a set of output bits is zero, with a seed prefix fixed
    and the rest uniform, is 0 or an exact power of two.
    """

    def __init__(self, k: int):
        self.k = k
        self.gamma = 2 * k
        self.poly = irreducible_poly(k)
        self._forms: dict[VertexId, list[int]] = {}

    def forms(self, x: VertexId) -> list[int]:
        """Seed masks of output bits ``k-1, k-2, ..., 0`` for input ``x``."""
        got = self._forms.get(x)
        if got is None:
            k = self.k
            cols = [_pmulmod(1 << l, x, self.poly) for l in range(k)]
            got = []
            for j in range(k - 1, -1, -1):
                mask = 1 << (k + j)
                for l in range(k):
                    if cols[l] >> j & 1:
                        mask |= 1 << l
                got.append(mask)
            self._forms[x] = got
        return got

    def value(self, x: VertexId, seed: int) -> int:
        out = 0
        for mask in self.forms(x):
            out = out << 1 | (bin(mask & seed).count("1") & 1)
        return out


def zero_rank(forms: Iterable[int], fixed_mask: int, fixed_val: int) -> int | None:
    """Rank of the system ``form(seed) = 0`` after fixing seed bits.

    Returns None when the system is inconsistent (probability zero);
    otherwise the probability is ``2 ** -rank``.
    """
    basis: dict[int, tuple[int, int]] = {}
    rank = 0
    for f in forms:
        rhs = bin(f & fixed_mask & fixed_val).count("1") & 1
        free = f & ~fixed_mask
        while free:
            top = free.bit_length() - 1
            row = basis.get(top)
            if row is None:
                basis[top] = (free, rhs)
                rank += 1
                break
            free ^= row[0]
            rhs ^= row[1]
        else:
            if rhs:
                return None
    return rank


# ---------------------------------------------------------------------------
# derandomized Ghaffari
# ---------------------------------------------------------------------------

_LIGHT = Fraction(2)
_W_LOW, _W_HIGH = Fraction(1, 40), Fraction(1, 4)


def select_w(light_probs: Iterable[tuple[Fraction, VertexId]]) -> list[VertexId] | None:
    """Pick light neighbors whose probabilities sum into ``[1/40, 1/4]``.

    Probabilities are powers of two at most 1/2. A single neighbor in range
    is taken alone (the smallest such); otherwise neighbors below 1/40 are
    accumulated in ascending order, which never overshoots 1/4.
    """
    items = sorted((p, u) for p, u in light_probs if p <= _W_HIGH)
    for p, u in items:
        if p >= _W_LOW:
            return [u]
    total = Fraction(0)
    chosen = []
    for p, u in items:
        chosen.append(u)
        total += p
        if total >= _W_LOW:
            return chosen
    return None


def phase_cap(n: int) -> int:
    return 64 * (n.bit_length() + 1)


class _Ghaffari:
    """Hashing for one derandomized run over preorder ranks. The marking
    probability of ``v`` is ``p_v / 4 = 2 ** -(e_v + 2)``: ``v`` is marked
    iff the top ``e_v + 2`` bits of ``h(rank(v))`` are zero.
    """

    def __init__(self, rank: dict[VertexId, int]):
        self.rank = rank
        self.hash = AffineHash(max(3, log_budget(len(rank))))
        self.e_cap = self.hash.k - 2
        self.scale_bits = self.hash.gamma

    def mark_forms(self, v: VertexId, e: int) -> list[int]:
        return self.hash.forms(self.rank[v])[: e + 2]

    def marked(self, v: VertexId, e: int, seed: int) -> bool:
        return self.hash.value(self.rank[v], seed) >> (self.hash.k - e - 2) == 0

    def prob(self, forms: list[int], fmask: int, fval: int) -> int:
        """Scaled probability ``2**gamma * Pr[all forms zero]``."""
        r = zero_rank(forms, fmask, fval)
        return 0 if r is None else 1 << (self.scale_bits - r)


def _derand(req: StaticMisRequest, engine: Engine) -> SolveResult:
    adj = req.adj
    if req.leader is None or req.leader not in adj:
        raise InvalidInput("derand_ghaffari needs a leader inside the subgraph")
    tree, _ = build_bfs_tree(engine, req.leader, lambda u, _r: ((w, 1) for w in sorted(adj[u])))
    # ids local to the subgraph keep the seed length at O(log |V'|)
    st = _Ghaffari(preorder_ranks(engine, tree))
    gamma = st.hash.gamma
    mis = set(req.s_in)
    undecided = req.allowed() - mis
    dominated = _join_round(engine, req, mis, undecided)
    undecided -= dominated
    _retire_round(engine, req, dominated, undecided)
    missing = sorted(undecided - set(tree.depth))
    if missing:
        raise Disconnected(f"leader {req.leader} cannot reach {missing[:5]}")

    e = {v: 1 for v in undecided}
    trace = [len(undecided)]
    phases = 0
    cap = phase_cap(engine.n)
    while True:
        left = convergecast(engine, tree, {v: 1 for v in undecided}, Kind.BUCKET_COUNT)
        broadcast(engine, tree, Kind.SEED_BIT, (1 if left else 0,))
        if not left:
            break
        if phases >= cap:
            raise SolverFailure(f"{left} undecided after {cap} phases")
        phases += 1
        und_nb = {v: sorted(adj[v] & undecided) for v in undecided}

        # exchange probabilities, then light flags
        engine.deliver_round(Multicast(v, und_nb[v], Kind.SOLVER_STATE, (e[v],)) for v in sorted(undecided) if und_nb[v])
        p = {v: Fraction(1, 1 << e[v]) for v in undecided}
        d = {v: sum((p[u] for u in und_nb[v]), Fraction(0)) for v in undecided}
        light = {v: d[v] < _LIGHT for v in undecided}
        engine.deliver_round(Multicast(v, und_nb[v], Kind.SOLVER_STATE, (int(light[v]),)) for v in sorted(undecided) if und_nb[v])

        golden1 = sorted(v for v in undecided if e[v] == 1 and light[v])
        g1set = set(golden1)
        wsel: dict[VertexId, list[VertexId]] = {}
        for v in sorted(undecided - g1set):
            w = select_w((p[u], u) for u in und_nb[v] if light[u])
            if w:
                wsel[v] = w
        # selectors tell their W members
        engine.deliver_round(Multicast(v, w, Kind.SOLVER_STATE, (2,)) for v, w in wsel.items())
        selectors: dict[VertexId, list[VertexId]] = {}
        for v, w in wsel.items():
            for u in w:
                selectors.setdefault(u, []).append(v)

        forms = {v: st.mark_forms(v, e[v]) for v in undecided}
        fmask = fval = 0
        for i in range(gamma):
            bit = 1 << i
            m0, m1 = fmask | bit, fmask | bit
            v0, v1 = fval, fval | bit

            def solo(v):
                return st.prob(forms[v], m0, v0), st.prob(forms[v], m1, v1)

            def pair(a, b):
                fs = forms[a] + forms[b]
                return st.prob(fs, m0, v0), st.prob(fs, m1, v1)

            def own_term(v):
                a0, a1 = solo(v)
                for u in und_nb[v]:
                    b0, b1 = pair(v, u)
                    a0 -= b0
                    a1 -= b1
                return a0, a1

            # W members ship their own term to each selector
            part = {u: own_term(u) for u in selectors}
            engine.deliver_wide([Message(u, v, Kind.COND_EXP_PARTIAL, part[u]) for u in sorted(selectors) for v in selectors[u]])
            values: dict[VertexId, tuple[int, int]] = {}
            for v in golden1:
                values[v] = own_term(v)
            for v, w in wsel.items():
                t0 = t1 = 0
                for u in w:
                    t0 += part[u][0]
                    t1 += part[u][1]
                    for x in w:
                        if x != u:
                            b0, b1 = pair(u, x)
                            t0 -= b0
                            t1 -= b1
                a0, a1 = values.get(v, (0, 0))
                values[v] = (a0 + t0, a1 + t1)
            values.setdefault(tree.root, (0, 0))
            tot0, tot1 = convergecast_wide(engine, tree, values, Kind.COND_EXP_PARTIAL)
            y = 0 if tot0 >= tot1 else 1
            broadcast(engine, tree, Kind.SEED_BIT, (y,))
            fmask |= bit
            if y:
                fval |= bit

        marked = {v for v in undecided if st.marked(v, e[v], fval)}
        engine.deliver_round(
            Multicast(v, und_nb[v], Kind.SOLVER_STATE, (1,)) for v in sorted(marked) if und_nb[v]
        )
        joiners = {v for v in marked if not (adj[v] & marked & undecided)}
        mis |= joiners
        undecided -= joiners
        dominated = _join_round(engine, req, joiners, undecided)
        undecided -= dominated
        _retire_round(engine, req, dominated, undecided)
        for v in undecided:
            e[v] = min(st.e_cap, e[v] + 1) if d[v] >= _LIGHT else max(1, e[v] - 1)
        trace.append(len(undecided))
    return SolveResult(frozenset(mis), phases=phases, tree_height=tree.height, undecided_trace=trace)


def derand_ghaffari(req: StaticMisRequest, engine: Engine | None = None) -> SolveResult:
    """Ghaffari's dynamics with each phase's seed fixed bit by bit.

    Per phase: vertices share ``p_t`` and lightness; golden vertices of the
    first kind contribute ``Pr[m_v] - sum Pr[m_v m_u]``, those of the second
    kind a union-bound term over their selected set W; the leader sums the
    two conditional expectations over a BFS tree and keeps the larger bit.
    Marked vertices without marked neighbors join.
    """
    return _run(_derand, req, engine)


SOLVERS: dict[str, Callable[[StaticMisRequest, Engine | None], SolveResult]] = {
    "greedy": greedy_by_id,
    "ggr20-sim": simulated_ggr20,
    "derand-ghaffari": derand_ghaffari,
}


def solve(req: StaticMisRequest, solver: str = "greedy", engine: Engine | None = None) -> SolveResult:
    try:
        fn = SOLVERS[solver]
    except KeyError:
        raise ValueError(f"unknown solver {solver!r}; choose from {sorted(SOLVERS)}") from None
    if solver == "derand-ghaffari" and req.leader is None:
        req.leader = min(req.adj)
    return fn(req, engine)

"""Brute-force oracles and executable invariant checks.

Nothing here reuses protocol code paths: every check recounts from the
ground-truth graph and the raw vertex records. Fractional powers are
compared exactly by raising both sides to integer powers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .graph import DynamicGraph, VertexId


class InsufficientData(ValueError):
    pass


@dataclass
class Check:
    name: str
    ok: bool = True
    witness: object = None

    def fail(self, witness) -> "Check":
        if self.ok:
            self.ok = False
            self.witness = witness
        return self


@dataclass
class Report:
    checks: dict[str, Check] = field(default_factory=dict)

    def add(self, c: Check) -> Check:
        self.checks[c.name] = c
        return c

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks.values())

    def failures(self) -> list[Check]:
        return [c for c in self.checks.values() if not c.ok]

    def as_dict(self) -> dict:
        return {k: {"ok": c.ok, "witness": repr(c.witness) if c.witness is not None else None}
                for k, c in self.checks.items()}


# ---------------------------------------------------------------------------
# exact power helpers
# ---------------------------------------------------------------------------


def floor_pow23(m: int) -> int:
    """Largest ``L`` with ``L**3 <= m**2``, i.e. ``floor(m ** (2/3))``."""
    if m <= 0:
        return 0
    target = m * m
    lo = int(round(target ** (1 / 3)))
    while lo**3 > target:
        lo -= 1
    while (lo + 1) ** 3 <= target:
        lo += 1
    return lo


def phase_length(m_i: int) -> int:
    return max(1, floor_pow23(m_i))


def is_heavy(S: int, m_i: int) -> bool:
    """``S > 4 * m_i ** (2/3)``, as ``S**3 > 64 * m_i**2``."""
    return S**3 > 64 * m_i * m_i


# ---------------------------------------------------------------------------
# MIS and state invariants
# ---------------------------------------------------------------------------


def check_mis(graph: DynamicGraph, M: Iterable[VertexId]) -> Check:
    """Independence and maximality, recounted edge by edge."""
    members = set(M)
    c = Check("mis")
    for u, v in graph.edges():
        if u in members and v in members:
            return c.fail(("edge inside M", (u, v)))
    for v in range(graph.n):
        if v not in members and not any(u in members for u in graph._adj[v]):
            return c.fail(("undominated", v))
    return c


def _low_mis(states, u) -> bool:
    s = states[u]
    return s.cls == 0 and s.in_mis


def check_invariants(
    graph: DynamicGraph,
    states: Sequence,
    mode: str,
    *,
    m_i: int | None = None,
    touched: Iterable[VertexId] = (),
    check_views: bool = True,
) -> Report:
    """Counter recount, the Low membership rule, Invariants 1 and 2 (m_max)
    or 3 (m_avg, on the update's endpoints), and neighbor-view consistency.

    Views are compared against the announcing vertex's state, except the MIS
    flag a Low vertex holds for a High neighbor (High vertices announce MIS
    changes to High neighbors only).
    """
    rep = Report()
    cnt = rep.add(Check("counters"))
    low_rule = rep.add(Check("low_in_mis_iff_c0"))
    inv1 = rep.add(Check("invariant1"))
    views = rep.add(Check("neighbor_view"))
    adj = graph._adj
    for v in range(graph.n):
        s = states[v]
        true_c = sum(1 for u in adj[v] if _low_mis(states, u))
        if s.c != true_c:
            cnt.fail((v, s.c, true_c))
        if s.d != len(adj[v]):
            cnt.fail((v, "degree", s.d, len(adj[v])))
        if s.cls == 0 and s.in_mis != (true_c == 0):
            low_rule.fail((v, s.in_mis, true_c))
        if s.cls == 1 and s.in_mis:
            for w in adj[v]:
                sw = states[w]
                if sw.cls == 0 and sum(1 for u in adj[w] if _low_mis(states, u)) == 0:
                    inv1.fail((v, w))
        if check_views:
            if set(s.view) != set(adj[v]):
                views.fail((v, "keys"))
            for u in adj[v]:
                su = states[u]
                got = s.view.get(u)
                if got is None:
                    continue
                if got[0] != su.cls:
                    views.fail((v, u, "class"))
                elif got[1] != su.in_mis and not (s.cls == 0 and su.cls == 1):
                    views.fail((v, u, "mis"))
    if mode == "m_max":
        inv2 = rep.add(Check("invariant2"))
        m = graph._m_max
        if m >= 1:
            bound = 512 * m * m
            for v in range(graph.n):
                if states[v].d_prime ** 3 >= bound:
                    inv2.fail((v, states[v].d_prime, m))
    else:
        inv3 = rep.add(Check("invariant3"))
        mi = max(1, m_i or 0)
        for v in touched:
            s = states[v]
            if s.cls == 0 and s.d**3 > 512 * mi * mi:
                inv3.fail((v, s.d, mi))
    return rep


def check_restart_bounds(episodes: Iterable[dict], mode: str) -> Report:
    """Per episode: at most ``S**(1/3)`` vertices remain; movers respect the
    mover degree bound (``d < 4 m**(2/3)`` against the live edge count in
    m_max mode, ``d <= 6 m_i**(2/3)`` in m_avg mode); in m_avg mode the High
    vertices left in V' number at most ``2 m_i**(1/3)``."""
    rep = Report()
    card = rep.add(Check("remaining_cube_le_S"))
    movers = rep.add(Check("mover_degree"))
    inv4 = rep.add(Check("invariant4")) if mode == "m_avg" else None
    for ep in episodes:
        if ep["remaining"] ** 3 > ep["S"]:
            card.fail((ep["update_index"], ep["remaining"], ep["S"]))
        if mode == "m_max":
            m = ep["m_current"]
            for w, d in ep["movers"]:
                if d**3 >= 64 * m * m:
                    movers.fail((ep["update_index"], w, d, m))
        else:
            mi = max(1, ep["m_i"])
            for w, d in ep["movers"]:
                if d**3 > 216 * mi * mi:
                    movers.fail((ep["update_index"], w, d, mi))
            if ep["remaining_high"] ** 3 > 8 * mi:
                inv4.fail((ep["update_index"], ep["remaining_high"], mi))
    return rep


def check_departure_bound(rows: Iterable) -> Check:
    """Every update has at most two Low vertices leaving the MIS."""
    c = Check("departure_bound")
    for r in rows:
        if r.low_mis_leaves > 2:
            return c.fail((r.update_index, r.low_mis_leaves))
    return c


@dataclass
class EnterAlarm:
    """Running average of MIS entries per update; soft alarm above 4."""

    threshold: float = 4.0
    total: int = 0
    count: int = 0

    def add(self, enters: int) -> None:
        self.total += enters
        self.count += 1

    @property
    def average(self) -> float:
        return self.total / self.count if self.count else 0.0

    @property
    def alarm(self) -> bool:
        return self.average > self.threshold


# ---------------------------------------------------------------------------
# phases
# ---------------------------------------------------------------------------


@dataclass
class Phase:
    index: int
    start_update: int
    m_i: int
    length: int
    updates: int = 0
    messages: int = 0
    rounds: int = 0
    restarts_heavy: int = 0
    restarts_light: int = 0


class PhaseTracker:
    """Partitions the stream into phases of ``max(1, floor(m_i**(2/3)))`` updates.

    ``begin(m)`` is called before each update with the edge count the
    update starts from; the phase of that update is returned.
    """

    def __init__(self):
        self.phases: list[Phase] = []
        self._next = 1

    @property
    def current(self) -> Phase | None:
        return self.phases[-1] if self.phases else None

    def begin(self, m_before: int) -> Phase:
        ph = self.current
        if ph is None or ph.updates >= ph.length:
            ph = Phase(len(self.phases), self._next, m_before, phase_length(m_before))
            self.phases.append(ph)
        ph.updates += 1
        self._next += 1
        return ph

    def classify(self, S: int) -> str:
        ph = self.current
        heavy = is_heavy(S, ph.m_i if ph else 0)
        if ph is not None:
            if heavy:
                ph.restarts_heavy += 1
            else:
                ph.restarts_light += 1
        return "heavy" if heavy else "light"

    def table(self) -> list[dict]:
        return [vars(p).copy() for p in self.phases]


def holder_check(phases: Sequence[Phase]) -> dict:
    """``sum (c_j m_j)**(2/3) <= (sum c_j m_j)**(2/3) * t**(1/3)`` on the table.

    ``c_j`` is the phase length and ``m_j`` its starting edge count.
    """
    terms = [p.length * p.m_i for p in phases]
    t = len(terms)
    lhs = sum(x ** (2 / 3) for x in terms)
    rhs = (sum(terms) ** (2 / 3)) * (t ** (1 / 3)) if t else 0.0
    return {"lhs": lhs, "rhs": rhs, "t": t, "ok": lhs <= rhs * (1 + 1e-12) + 1e-9}


# ---------------------------------------------------------------------------
# scaling fits
# ---------------------------------------------------------------------------


@dataclass
class Fit:
    slope: float
    intercept: float
    points: int

    @property
    def constant(self) -> float:
        return math.exp(self.intercept)


def fit_loglog(xs: Sequence[float], ys: Sequence[float], min_points: int = 5) -> Fit:
    """Least-squares line through ``(log x, log y)``."""
    pts = [(math.log(x), math.log(y)) for x, y in zip(xs, ys) if x > 0 and y > 0]
    if len(pts) < min_points:
        raise InsufficientData(f"need {min_points} points, got {len(pts)}")
    n = len(pts)
    mx = sum(p[0] for p in pts) / n
    my = sum(p[1] for p in pts) / n
    sxx = sum((p[0] - mx) ** 2 for p in pts)
    if sxx == 0:
        return Fit(0.0, my, n)
    sxy = sum((p[0] - mx) * (p[1] - my) for p in pts)
    slope = sxy / sxx
    return Fit(slope, my - slope * mx, n)


def fit_scaling(runs: Sequence[dict], x: str = "m", y: str = "amortized_messages") -> Fit:
    """Slope of ``log y`` against ``log x`` over at least five runs."""
    return fit_loglog([r[x] for r in runs], [r[y] for r in runs])


def fit_bound_constant(samples: Iterable[tuple[int, int, int]]) -> float:
    """Smallest ``C`` with ``rounds <= C * D * log2(size)**2`` over all samples.

    Samples are ``(rounds, D, size)``; ``D`` and ``log2(size)`` are floored at 1.
    """
    best = 0.0
    for rounds, D, size in samples:
        denom = max(1, D) * max(1.0, math.log2(max(2, size))) ** 2
        best = max(best, rounds / denom)
    return best

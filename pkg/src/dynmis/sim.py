"""Run orchestration: replay a stream through the protocol and verify it.

The harness owns everything analysis-side: ground-truth checks, the phase
table, heavy/light tagging of restarts and the episode log.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Iterable

from .engine import Engine, ProtocolError, UpdateStats, locality_audit
from .graph import DynamicGraph, UpdateEvent
from .protocol import Mode, Protocol
from .verify import (
    EnterAlarm,
    InsufficientData,
    PhaseTracker,
    check_invariants,
    check_mis,
    check_restart_bounds,
    fit_loglog,
    holder_check,
)

SOLVER_NAMES = ("greedy", "ggr20-sim", "derand-ghaffari")

# every check a run can fail, by the name recorded in Failure.check
CHECK_NAMES = (
    "mis", "counters", "low_in_mis_iff_c0", "invariant1", "neighbor_view", "invariant2",
    "invariant3", "remaining_cube_le_S", "mover_degree", "invariant4", "departure_bound",
    "locality", "solver_distance",
)


@dataclass
class RunConfig:
    n: int = 20
    mode: str = "m_avg"
    solver: str = "derand-ghaffari"
    family: str = "RandomMix"
    updates: int = 200
    seed: int = 0
    p_delete: float = 0.5
    targets: tuple[int, ...] = ()
    burst: int = 0
    stream: str | None = None
    verify_every: int | None = None
    trace: bool = True
    out: str | None = None

    def __post_init__(self):
        Mode(self.mode)
        if self.solver not in SOLVER_NAMES:
            raise ValueError(f"unknown solver {self.solver!r}")

    @property
    def cadence(self) -> int:
        if self.verify_every is not None:
            return max(1, self.verify_every)
        return 1 if self.n <= 200 else 100


@dataclass
class Failure:
    update_index: int
    check: str
    witness: str


@dataclass
class RunResult:
    config: RunConfig
    rows: list[UpdateStats] = field(default_factory=list)
    episodes: list[dict] = field(default_factory=list)
    solver_calls: list[dict] = field(default_factory=list)
    failures: list[Failure] = field(default_factory=list)
    phases: PhaseTracker = field(default_factory=PhaseTracker)
    enters: EnterAlarm = field(default_factory=EnterAlarm)
    checks_run: int = 0
    final_m: int = 0
    final_m_max: int = 0

    @property
    def ok(self) -> bool:
        return not self.failures

    def stats_csv(self) -> str:
        return "\n".join([UpdateStats.CSV_HEADER] + [r.csv_row() for r in self.rows]) + "\n"

    def amortized(self, attr: str) -> float:
        return sum(getattr(r, attr) for r in self.rows) / len(self.rows) if self.rows else 0.0

    def summary(self) -> dict:
        return {
            "config": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self.config).items()},
            "updates": len(self.rows),
            "final_m": self.final_m,
            "m_max": self.final_m_max,
            "amortized_rounds": self.amortized("rounds"),
            "amortized_messages": self.amortized("messages_total"),
            "restarts": len(self.episodes),
            "restarts_heavy": sum(r.restarts_heavy for r in self.rows),
            "max_chain_depth": max((r.restart_chain_depth for r in self.rows), default=0),
            "max_low_mis_leaves": max((r.low_mis_leaves for r in self.rows), default=0),
            "enter_average": self.enters.average,
            "enter_alarm": self.enters.alarm,
            "checks_run": self.checks_run,
            "failures": [asdict(f) for f in self.failures],
            "verdicts": self.verdicts(),
            "fit": self.phase_fit(),
            "holder": holder_check(self.phases.phases),
            "phases": self.phases.table(),
            "ok": self.ok,
        }

    def verdicts(self) -> dict[str, str]:
        failed = {f.check for f in self.failures}
        names = [c for c in CHECK_NAMES if not (
            (c == "invariant2" and self.config.mode != "m_max")
            or (c in ("invariant3", "invariant4") and self.config.mode != "m_avg"))]
        out = {c: "fail" if c in failed else "pass" for c in names}
        for c in sorted(failed - set(out)):  # engine errors such as BitBudgetViolation
            out[c] = "fail"
        return out

    def phase_fit(self) -> dict | None:
        """Log-log slope of per-phase amortized messages against the phase's
        starting edge count; None with fewer than five usable phases."""
        pts = [(p.m_i, p.messages / p.updates) for p in self.phases.phases if p.updates and p.m_i > 0]
        try:
            fit = fit_loglog([x for x, _ in pts], [y for _, y in pts])
        except InsufficientData:
            return None
        return {"slope": fit.slope, "constant": fit.constant, "points": fit.points}

    def episode_log(self) -> str:
        return "".join(json.dumps(ep, sort_keys=True) + "\n" for ep in self.episodes)


class Simulation:
    def __init__(self, config: RunConfig):
        self.config = config
        self.graph = DynamicGraph(config.n)
        self.engine = Engine(self.graph, record_trace=config.trace)
        self.protocol = Protocol(self.graph, self.engine, mode=config.mode, solver=config.solver)
        self.result = RunResult(config)
        self.protocol.on_restart = self._on_restart
        self.protocol.on_solver = self.result.solver_calls.append

    def _on_restart(self, rec, ctx) -> str:
        res = self.result
        tag = res.phases.classify(rec.S)
        ep = asdict(rec)
        ep["movers"] = [list(x) for x in rec.movers]
        ep["m_current"] = self.graph._m
        ep["m_max"] = self.graph._m_max
        ep["m_i"] = res.phases.current.m_i
        ep["tag"] = tag
        ep["induced_edges"] = sum(
            1 for v in ctx.roles for u in self.graph._adj[v] if u in ctx.roles and v < u
        )
        ep["V_prime"] = ctx.V_prime
        res.episodes.append(ep)
        return tag

    def _fail(self, idx: int, name: str, witness) -> None:
        self.result.failures.append(Failure(idx, name, repr(witness)))

    def step(self, e: UpdateEvent) -> UpdateStats:
        res = self.result
        ph = res.phases.begin(self.graph._m)
        first_ep = len(res.episodes)
        stats = self.protocol.apply(e)
        res.rows.append(stats)
        ph.messages += stats.messages_total
        ph.rounds += stats.rounds
        res.enters.add(stats.mis_enters)
        idx = stats.update_index
        if stats.low_mis_leaves > 2:
            self._fail(idx, "departure_bound", stats.low_mis_leaves)
        if self.config.trace:
            try:
                locality_audit(self.engine.trace)
            except ProtocolError as exc:
                self._fail(idx, "locality", exc)
        lem = check_restart_bounds(res.episodes[first_ep:], self.config.mode)
        for c in lem.failures():
            self._fail(idx, c.name, c.witness)
        for ep in res.episodes[first_ep:]:
            if "distance_violation" in ep.get("extra", {}):
                self._fail(idx, "solver_distance", ep["extra"]["distance_violation"])
        if idx % self.config.cadence == 0:
            self.verify(idx, touched=(e.u, e.v))
        return stats

    def verify(self, idx: int, touched=()) -> None:
        res = self.result
        res.checks_run += 1
        c = check_mis(self.graph, self.protocol.mis())
        if not c.ok:
            self._fail(idx, c.name, c.witness)
        ph = res.phases.current
        rep = check_invariants(
            self.graph, self.protocol.states, self.config.mode,
            m_i=ph.m_i if ph else 0, touched=touched,
        )
        for f in rep.failures():
            self._fail(idx, f.name, f.witness)

    def run(self, events: Iterable[UpdateEvent], stop_on_failure: bool = False) -> RunResult:
        res = self.result
        for e in events:
            try:
                self.step(e)
            except ProtocolError as exc:
                self._fail(self.protocol.index, type(exc).__name__, exc)
                break
            if stop_on_failure and res.failures:
                break
        if res.rows and res.rows[-1].update_index % self.config.cadence:
            self.verify(res.rows[-1].update_index)
        res.final_m = self.graph._m
        res.final_m_max = self.graph._m_max
        return res


def run_events(config: RunConfig, events: Iterable[UpdateEvent], **kw) -> RunResult:
    return Simulation(config).run(events, **kw)

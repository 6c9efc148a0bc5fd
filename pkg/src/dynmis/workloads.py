"""Seeded update-stream generators.

Every generator tracks the live edge set so streams are legal by
construction: no duplicate inserts, no deletes of absent edges.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field

from .graph import Op, UpdateEvent, VertexId, load_stream


class SpecError(ValueError):
    pass


class Family(enum.Enum):
    INSERT_RAMP = "InsertRamp"
    RANDOM_MIX = "RandomMix"
    DENSITY_SWEEP = "DensitySweep"
    THRESHOLD_OSCILLATION = "ThresholdOscillation"
    REPLAY = "Replay"


@dataclass
class WorkloadSpec:
    family: Family | str
    n: int
    updates: int = 0
    seed: int = 0
    p_delete: float = 0.5
    targets: tuple[int, ...] = ()
    burst: int = 0  # DensitySweep: mixed updates after reaching each target
    path: str | None = None  # Replay

    def __post_init__(self):
        try:
            self.family = Family(self.family)
        except ValueError:
            raise SpecError(f"unknown family {self.family!r}") from None
        if self.n < 2 and self.family is not Family.REPLAY:
            raise SpecError("need at least two vertices")
        if self.updates < 0:
            raise SpecError("updates must be non-negative")
        if not 0.0 <= self.p_delete <= 1.0:
            raise SpecError("p_delete must be in [0, 1]")
        cap = self.n * (self.n - 1) // 2
        if self.family is Family.DENSITY_SWEEP:
            if not self.targets:
                raise SpecError("DensitySweep needs targets")
            if max(self.targets) > cap:
                raise SpecError(f"target {max(self.targets)} exceeds {cap} possible edges")
        if self.family is Family.INSERT_RAMP and self.updates > cap:
            raise SpecError(f"{self.updates} inserts exceed {cap} possible edges")
        if self.family is Family.REPLAY and not self.path:
            raise SpecError("Replay needs a path")


@dataclass
class _Live:
    """Live edge set with O(1) uniform sampling."""

    n: int
    rng: random.Random
    edges: list[tuple[VertexId, VertexId]] = field(default_factory=list)
    pos: dict[tuple[VertexId, VertexId], int] = field(default_factory=dict)
    out: list[UpdateEvent] = field(default_factory=list)

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def full(self) -> bool:
        return self.m >= self.n * (self.n - 1) // 2

    def has(self, u: VertexId, v: VertexId) -> bool:
        return ((u, v) if u < v else (v, u)) in self.pos

    def insert(self, u: VertexId, v: VertexId) -> None:
        e = (u, v) if u < v else (v, u)
        self.pos[e] = len(self.edges)
        self.edges.append(e)
        self.out.append(UpdateEvent(Op.INSERT, e[0], e[1], len(self.out) + 1))

    def delete(self, u: VertexId, v: VertexId) -> None:
        e = (u, v) if u < v else (v, u)
        i = self.pos.pop(e)
        last = self.edges.pop()
        if i < len(self.edges):
            self.edges[i] = last
            self.pos[last] = i
        self.out.append(UpdateEvent(Op.DELETE, e[0], e[1], len(self.out) + 1))

    def insert_random(self) -> None:
        if self.full:
            raise SpecError("graph is complete")
        while True:
            u, v = self.rng.sample(range(self.n), 2)
            if not self.has(u, v):
                self.insert(u, v)
                return

    def delete_random(self) -> None:
        self.delete(*self.edges[self.rng.randrange(self.m)])

    def mixed(self, p_delete: float) -> None:
        if self.m and (self.full or self.rng.random() < p_delete):
            self.delete_random()
        else:
            self.insert_random()


def _insert_ramp(spec: WorkloadSpec, live: _Live) -> None:
    for _ in range(spec.updates):
        live.insert_random()


def _random_mix(spec: WorkloadSpec, live: _Live) -> None:
    for _ in range(spec.updates):
        live.mixed(spec.p_delete)


def _density_sweep(spec: WorkloadSpec, live: _Live) -> None:
    """Ramp (insert or delete) to each target edge count, then a mixed burst."""
    for target in spec.targets:
        while live.m < target:
            live.insert_random()
        while live.m > target:
            live.delete_random()
        for _ in range(spec.burst):
            live.mixed(0.5)


def _threshold_oscillation(spec: WorkloadSpec, live: _Live) -> None:
    """Hubs repeatedly gain and lose edges with growing amplitude.

    Each cycle pushes one hub's degree from near zero up past its current
    movement bound and back down, interleaved with random background
    updates, so vertices cross the High/Low boundary in both directions.
    """
    rng = live.rng
    hubs = rng.sample(range(spec.n), min(4, spec.n))
    amp = 3
    total = spec.updates
    while len(live.out) < total:
        hub = rng.choice(hubs)
        others = [w for w in range(spec.n) if w != hub and not live.has(hub, w)]
        rng.shuffle(others)
        added = []
        for w in others[:amp]:
            if len(live.out) >= total:
                return
            if live.has(hub, w):
                continue
            live.insert(hub, w)
            added.append(w)
            if rng.random() < 0.25 and len(live.out) < total:
                live.mixed(0.5)
        for w in added:
            if len(live.out) >= total:
                return
            if live.has(hub, w):
                live.delete(hub, w)
        amp = amp * 2 if amp * 2 < spec.n else 3


def generate(spec: WorkloadSpec) -> list[UpdateEvent]:
    """The update stream described by ``spec``; deterministic per seed."""
    if spec.family is Family.REPLAY:
        return load_stream(spec.path)
    live = _Live(spec.n, random.Random(spec.seed))
    {
        Family.INSERT_RAMP: _insert_ramp,
        Family.RANDOM_MIX: _random_mix,
        Family.DENSITY_SWEEP: _density_sweep,
        Family.THRESHOLD_OSCILLATION: _threshold_oscillation,
    }[spec.family](spec, live)
    return live.out


def insertion_heavy(n: int, m: int, churn: int, seed: int) -> list[UpdateEvent]:
    """Insert ``m`` random edges, then ``churn`` delete/insert pairs at density ``m``."""
    live = _Live(n, random.Random(seed))
    for _ in range(m):
        live.insert_random()
    for _ in range(churn):
        live.delete_random()
        live.insert_random()
    return live.out

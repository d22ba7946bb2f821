"""Exact event-driven resolution of ballistic annihilation on a window.

Alive particles are kept in a position-ordered doubly linked list.  Each
adjacent pair that approaches contributes a candidate collision event; a
priority queue ordered by (time, position, smaller participant index)
drives the resolution.  Events whose participants died or drifted apart
are discarded lazily.

With speeds in {-1, 0, +1} and distinct initial positions, at most one
right mover, one blockade and one left mover can occupy the same
space-time point, so the only compound event is a right mover and a left
mover reaching a blockade simultaneously: all three are removed.  Such
triples are detected by grouping valid events with identical (time,
position), which is sound because exact mode compares exact rationals and
unit spacings give dyadic floats whose halves are exact in binary.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .model import Configuration, Particle, Velocity


@dataclass(frozen=True)
class CollisionRecord:
    """One collision: pair (i, j) or triple (i, m, j), listed left to right."""

    time: object
    position: object
    kind: str  # "pair" | "triple"
    indices: tuple

    def __post_init__(self):
        if self.kind not in ("pair", "triple"):
            raise ValueError(f"bad collision kind {self.kind!r}")
        want = 2 if self.kind == "pair" else 3
        if len(self.indices) != want:
            raise ValueError(f"{self.kind} needs {want} indices")


@dataclass(frozen=True)
class Fate:
    """Either annihilated in a recorded collision or survives the window."""

    record: Optional[CollisionRecord]

    @property
    def survives(self) -> bool:
        return self.record is None


@dataclass(frozen=True)
class ZStats:
    """Blockade count minus left/right mover count among survivors."""

    z_left: int
    z_right: int


@dataclass
class WindowOutcome:
    """Full resolution of one window."""

    window: tuple  # (first index, last index)
    config: Configuration
    fates: dict  # index -> Fate
    collisions: list  # [CollisionRecord]
    survivors: list  # surviving indices, in position order
    counts: tuple  # (blockades, lefts, rights) among survivors
    first_left_visitor: Optional[tuple] = None  # (index, time) for windows at 1..
    first_right_visitor: Optional[tuple] = None  # (index, time) for windows at ..-1
    anomalies: dict = field(default_factory=dict)


def _event(xi, vi, xj, vj):
    """Candidate (time, position) for an adjacent pair, i left of j.

    They approach only when the left particle's velocity strictly exceeds
    the right particle's.
    """
    if vi <= vj:
        return None
    gap = xj - xi
    if vi == 1 and vj == -1:
        t = gap / 2
        return t, xi + t
    if vi == 1 and vj == 0:
        return gap, xj
    # blockade then left mover
    return gap, xi


def resolve(config: Configuration) -> WindowOutcome:
    """Resolve a window exactly; deterministic for any valid configuration."""
    n = len(config)
    if n == 0:
        raise ValueError("empty configuration")
    pos = list(config.positions)
    if any(b <= a for a, b in zip(pos, pos[1:])):
        raise ValueError("positions must be strictly increasing")
    vel = [v.speed for v in config.velocities]
    idx = list(config.indices)

    nxt = list(range(1, n)) + [-1]
    prv = [-1] + list(range(n - 1))
    alive = [True] * n
    heap: list = []
    tick = 0  # heap tiebreak; never affects which events are simultaneous

    def push(i, j):
        nonlocal tick
        ev = _event(pos[i], vel[i], pos[j], vel[j])
        if ev is not None:
            t, x = ev
            heapq.heappush(heap, (t, x, min(idx[i], idx[j]), tick, i, j))
            tick += 1

    for i in range(n - 1):
        push(i, i + 1)

    def valid(i, j):
        return alive[i] and alive[j] and nxt[i] == j

    collisions: list = []
    records = [None] * n

    while heap:
        t, x, _, _, i, j = heapq.heappop(heap)
        if not valid(i, j):
            continue
        group = [(i, j)]
        while heap and heap[0][0] == t and heap[0][1] == x:
            _, _, _, _, a, b = heapq.heappop(heap)
            if valid(a, b):
                group.append((a, b))

        if len(group) == 1:
            left, right = group[0]
            rec = CollisionRecord(t, x, "pair", (idx[left], idx[right]))
            members = (left, right)
        elif len(group) == 2:
            members_set = set(group[0]) | set(group[1])
            if len(members_set) != 3:
                raise RuntimeError("simultaneous events with impossible overlap")
            members = tuple(sorted(members_set, key=lambda k: pos[k]))
            a, m, b = members
            if not (vel[a] == 1 and vel[m] == 0 and vel[b] == -1):
                raise RuntimeError("simultaneous events without a shared blockade")
            rec = CollisionRecord(t, x, "triple", (idx[a], idx[m], idx[b]))
        else:
            raise RuntimeError("more than two events at one space-time point")

        collisions.append(rec)
        lo, hi = members[0], members[-1]
        for k in members:
            alive[k] = False
            records[k] = rec
        a, b = prv[lo], nxt[hi]
        if a != -1:
            nxt[a] = b
        if b != -1:
            prv[b] = a
        if a != -1 and b != -1:
            push(a, b)

    fates = {idx[i]: Fate(records[i]) for i in range(n)}
    survivors = [idx[i] for i in range(n) if alive[i]]
    n_dot = sum(1 for i in range(n) if alive[i] and vel[i] == 0)
    n_left = sum(1 for i in range(n) if alive[i] and vel[i] == -1)
    n_right = sum(1 for i in range(n) if alive[i] and vel[i] == 1)

    outcome = WindowOutcome(
        window=(idx[0], idx[-1]),
        config=config,
        fates=fates,
        collisions=collisions,
        survivors=survivors,
        counts=(n_dot, n_left, n_right),
    )
    outcome.first_left_visitor = first_left_visitor(outcome)
    outcome.first_right_visitor = first_right_visitor(outcome)
    if config.mode == "float" and any(c.kind == "triple" for c in collisions):
        outcome.anomalies["float_triples"] = sum(
            1 for c in collisions if c.kind == "triple"
        )
    return outcome


def survivor_counts(outcome: WindowOutcome) -> tuple:
    """(blockades, left movers, right movers) surviving the window."""
    return outcome.counts


def z_stats(outcome: WindowOutcome) -> ZStats:
    n_dot, n_left, n_right = outcome.counts
    return ZStats(z_left=n_dot - n_left, z_right=n_dot - n_right)


def first_left_visitor(outcome: WindowOutcome) -> Optional[tuple]:
    """Smallest surviving left mover of a window starting at index 1.

    A left mover's fate is settled by lower-indexed particles only (anyone
    who could stop it starts to its left, and later particles can never
    overtake it), so the window's surviving left movers are exactly the
    particles that reach the origin, the first of them at time equal to
    its starting position.
    """
    if outcome.window[0] != 1:
        return None
    by_index = {p.index: p for p in outcome.config.particles}
    lefts = [
        i for i in outcome.survivors if by_index[i].velocity is Velocity.LEFT
    ]
    if not lefts:
        return None
    sigma = min(lefts)
    return sigma, by_index[sigma].position


def first_right_visitor(outcome: WindowOutcome) -> Optional[tuple]:
    """Mirror of :func:`first_left_visitor` for windows ending at index -1."""
    if outcome.window[1] != -1:
        return None
    by_index = {p.index: p for p in outcome.config.particles}
    rights = [
        i for i in outcome.survivors if by_index[i].velocity is Velocity.RIGHT
    ]
    if not rights:
        return None
    sigma = max(rights)  # closest to the origin
    return sigma, -by_index[sigma].position


_SWAP = {
    Velocity.LEFT: Velocity.RIGHT,
    Velocity.RIGHT: Velocity.LEFT,
    Velocity.BLOCKADE: Velocity.BLOCKADE,
}


def mirror(config: Configuration) -> Configuration:
    """Reflect through the origin: negate positions and indices, swap L/R."""
    particles = tuple(
        Particle(-p.index, -p.position, _SWAP[p.velocity])
        for p in reversed(config.particles)
    )
    return Configuration(particles, config.mode, dict(config.provenance))


def collision_log(outcome: WindowOutcome) -> str:
    """One record per line: "time position kind indices"."""
    lines = []
    for c in outcome.collisions:
        if outcome.config.mode == "exact":
            t, x = str(Fraction(c.time)), str(Fraction(c.position))
        else:
            t, x = repr(float(c.time)), repr(float(c.position))
        ids = " ".join(str(i) for i in c.indices)
        lines.append(f"{t} {x} {c.kind} {ids}")
    return "\n".join(lines) + ("\n" if lines else "")

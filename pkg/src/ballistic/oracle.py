"""Independent reference implementations for differential testing.

Two tools live here:

* :func:`naive_resolve` -- a quadratic-time resolver that repeatedly scans
  *all* alive approaching pairs (not just adjacent ones) for the minimum
  unobstructed meeting time.  Because trajectories are straight lines until
  a collision, the global minimum over alive pairs is always the next true
  collision, so this gives the same outcome as the event-driven engine by
  an entirely different route.

* :func:`enumerate_exact` -- exhaustive enumeration over all 3^n velocity
  assignments at unit spacing, accumulating exact rational probabilities
  and expectations.  Unit-spacing collision coordinates are half-integers,
  which binary floats represent exactly, so integer positions with float
  division stay exact throughout the enumeration.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .engine import (
    CollisionRecord,
    Fate,
    WindowOutcome,
    first_left_visitor,
    first_right_visitor,
)
from .model import Configuration

ENUMERATION_CAP = 14  # 3^14 ~ 4.8M assignments; keep desk runs bounded


def _naive_core(pos, vel):
    """Resolve by global scan; returns (alive flags, raw collision tuples).

    Raw tuples are (time, position, kind, members) with members as list
    offsets, left to right.  Works on any exactly comparable numeric type.
    """
    n = len(pos)
    alive = [True] * n
    events_out = []
    last_t = None
    while True:
        best = None
        hits = []
        live = [i for i in range(n) if alive[i]]
        for a in range(len(live)):
            i = live[a]
            for b in range(a + 1, len(live)):
                j = live[b]
                if vel[i] <= vel[j]:
                    continue
                gap = pos[j] - pos[i]
                if vel[i] == 1 and vel[j] == -1:
                    t = gap / 2
                    x = pos[i] + t
                elif vel[i] == 1:
                    t, x = gap, pos[j]
                else:
                    t, x = gap, pos[i]
                if best is None or t < best:
                    best, hits = t, [(x, i, j)]
                elif t == best:
                    hits.append((x, i, j))
        if best is None:
            break
        if last_t is not None and best < last_t:
            raise RuntimeError("collision times went backwards")
        last_t = best
        groups: dict = {}
        for x, i, j in hits:
            groups.setdefault(x, set()).update((i, j))
        for x in sorted(groups):
            members = sorted(groups[x], key=lambda k: pos[k])
            if len(members) == 2:
                kind = "pair"
            elif len(members) == 3:
                va, vm, vb = (vel[k] for k in members)
                if (va, vm, vb) != (1, 0, -1):
                    raise RuntimeError("three-way meeting without a blockade core")
                kind = "triple"
            else:
                raise RuntimeError("more than three particles at one point")
            for k in members:
                alive[k] = False
            events_out.append((best, x, kind, members))
    return alive, events_out


def naive_resolve(config: Configuration) -> WindowOutcome:
    """Same contract as :func:`ballistic.engine.resolve`, different algorithm."""
    n = len(config)
    if n == 0:
        raise ValueError("empty configuration")
    pos = list(config.positions)
    if any(b <= a for a, b in zip(pos, pos[1:])):
        raise ValueError("positions must be strictly increasing")
    vel = [v.speed for v in config.velocities]
    idx = list(config.indices)

    alive, raw = _naive_core(pos, vel)
    records = [None] * n
    collisions = []
    for t, x, kind, members in raw:
        rec = CollisionRecord(t, x, kind, tuple(idx[k] for k in members))
        collisions.append(rec)
        for k in members:
            records[k] = rec

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
    return outcome


@dataclass
class ExactDistributionTable:
    """Exact law of one window statistic at rational (p, lambda).

    ``probabilities`` maps statistic values to exact rational masses that
    sum to 1.  ``expectation`` is filled for numeric statistics.  The
    optional ``polynomial`` form gives, per value, integer coefficients
    keyed by exponent tuples (i, r, s, t) for p^i lam^r (1-p)^s (1-lam)^t.
    """

    n: int
    statistic: str
    p: Fraction
    lam: Fraction
    probabilities: dict
    expectation: Optional[Fraction] = None
    polynomial: Optional[dict] = None

    def total_mass(self) -> Fraction:
        return sum(self.probabilities.values(), Fraction(0))

    def to_jsonable(self) -> dict:
        out = {
            "n": self.n,
            "statistic": self.statistic,
            "p": str(self.p),
            "lambda": str(self.lam),
            "probabilities": {
                str(k): str(v) for k, v in sorted(self.probabilities.items(), key=str)
            },
        }
        if self.expectation is not None:
            out["expectation"] = str(self.expectation)
        if self.polynomial is not None:
            out["polynomial"] = {
                str(value): {
                    "p^%d lam^%d (1-p)^%d (1-lam)^%d" % expo: coef
                    for expo, coef in sorted(coeffs.items())
                }
                for value, coeffs in sorted(self.polynomial.items(), key=str)
            }
        return out


_STATISTICS = ("sigma", "zleft", "zright", "nleft", "counts")
_COUNT_CACHE: dict = {}


def _stat_value(statistic, codes, alive):
    if statistic == "sigma":
        for i, (c, a) in enumerate(zip(codes, alive)):
            if a and c == -1:
                return i + 1
        return "absent"
    n_dot = n_left = n_right = 0
    for c, a in zip(codes, alive):
        if not a:
            continue
        if c == 0:
            n_dot += 1
        elif c == -1:
            n_left += 1
        else:
            n_right += 1
    if statistic == "zleft":
        return n_dot - n_left
    if statistic == "zright":
        return n_dot - n_right
    if statistic == "nleft":
        return n_left
    if statistic == "counts":
        return (n_dot, n_left, n_right)
    raise ValueError(f"unknown statistic {statistic!r}")


def _enumerate_counts(n: int, statistic: str) -> dict:
    """value -> {(blockades, rights, lefts): multiplicity} over 3^n assignments."""
    key = (n, statistic)
    if key in _COUNT_CACHE:
        return _COUNT_CACHE[key]
    positions = list(range(1, n + 1))
    counts: dict = {}
    for codes in itertools.product((0, 1, -1), repeat=n):
        alive, _ = _naive_core(positions, codes)
        value = _stat_value(statistic, codes, alive)
        i = codes.count(0)
        r = codes.count(1)
        l = n - i - r
        bucket = counts.setdefault(value, {})
        bucket[(i, r, l)] = bucket.get((i, r, l), 0) + 1
    _COUNT_CACHE[key] = counts
    return counts


def enumerate_exact(
    n: int,
    p,
    lam,
    statistic: str = "sigma",
    include_polynomial: bool = False,
) -> ExactDistributionTable:
    """Exact unit-spacing window law by exhausting all 3^n assignments.

    Each assignment is resolved with the naive reference resolver and
    weighted p^i (lam(1-p))^r ((1-lam)(1-p))^l in exact rational
    arithmetic, where (i, r, l) counts blockades, right and left movers.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > ENUMERATION_CAP:
        raise ValueError(
            f"enumeration budget exceeded: n={n} > {ENUMERATION_CAP}"
        )
    if statistic not in _STATISTICS:
        raise ValueError(f"unknown statistic {statistic!r}; pick from {_STATISTICS}")
    p = Fraction(p)
    lam = Fraction(lam)
    if not (0 < p < 1 and 0 < lam < 1):
        raise ValueError("p and lambda must lie in (0,1)")

    counts = _enumerate_counts(n, statistic)
    wb, wr, wl = p, lam * (1 - p), (1 - lam) * (1 - p)
    probabilities = {}
    polynomial: Optional[dict] = {} if include_polynomial else None
    for value, bucket in counts.items():
        mass = Fraction(0)
        for (i, r, l), mult in bucket.items():
            mass += mult * wb**i * wr**r * wl**l
        probabilities[value] = mass
        if include_polynomial:
            polynomial[value] = {
                (i, r, r + l, l): mult for (i, r, l), mult in bucket.items()
            }

    expectation = None
    if statistic in ("zleft", "zright", "nleft"):
        expectation = sum(
            (Fraction(v) * mass for v, mass in probabilities.items()),
            Fraction(0),
        )
    return ExactDistributionTable(
        n=n,
        statistic=statistic,
        p=p,
        lam=lam,
        probabilities=probabilities,
        expectation=expectation,
        polynomial=polynomial,
    )


def exact_truncated_q(n: int, p, lam) -> Fraction:
    """P(a left mover from the first n particles ever reaches the origin).

    Equals P(sigma <= n), which increases to the half-process visit
    probability as the window grows.
    """
    table = enumerate_exact(n, p, lam, statistic="sigma")
    return 1 - table.probabilities.get("absent", Fraction(0))


def exact_mean_z(k: int, p, lam, side: str = "left") -> Fraction:
    """Exact E[Z(window of k)] at unit spacing.

    side="left" is the window 1..k on the positive axis (blockades minus
    surviving left movers).  side="right" is the window -k..-1, computed
    by the mirror identity: it equals the left statistic at lambda -> 1-lambda.
    """
    if side == "left":
        return enumerate_exact(k, p, lam, statistic="zleft").expectation
    if side == "right":
        return enumerate_exact(k, p, 1 - Fraction(lam), statistic="zleft").expectation
    raise ValueError("side must be 'left' or 'right'")

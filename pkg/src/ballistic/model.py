"""Domain types and sampling for ballistic annihilation on the line.

Particles live on the real line with velocities -1, 0, +1 (left movers,
blockades, right movers).  A blockade appears with probability p; a mover
goes right with probability lambda and left otherwise, so the velocity
weights are (1-lambda)(1-p), p, lambda*(1-p).

Initial positions are laid out by i.i.d. positive spacings.  Two numeric
modes are supported:

* Exact  -- positions are ``fractions.Fraction``; used for atomic spacing
  laws (unit spacing, rational atoms) where simultaneous triple collisions
  carry probability and must be detected by exact comparison.
* Float  -- 64-bit positions for atomless spacing laws, where ties have
  probability zero.

All sampling is driven by counter-based Philox streams keyed by
(master seed, trial index, stream label), so every draw is a pure function
of those three values and trials can be generated in any order.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Sequence, Union

import numpy as np

Scalar = Union[Fraction, float]


class Velocity(Enum):
    """The three particle classes, tagged by their signed speed."""

    LEFT = -1
    BLOCKADE = 0
    RIGHT = 1

    @property
    def speed(self) -> int:
        return self.value

    @property
    def letter(self) -> str:
        return {Velocity.LEFT: "L", Velocity.BLOCKADE: "B", Velocity.RIGHT: "R"}[self]

    @classmethod
    def from_letter(cls, s: str) -> "Velocity":
        table = {"L": cls.LEFT, "B": cls.BLOCKADE, "R": cls.RIGHT}
        key = s.strip().upper()
        if key not in table:
            raise ValueError(f"unknown velocity letter {s!r} (expected L, B or R)")
        return table[key]


@dataclass(frozen=True)
class Params:
    """Velocity-law parameters: blockade weight p, rightward split lambda."""

    p: float
    lam: float

    def __post_init__(self):
        if not (0 < self.p < 1):
            raise ValueError(f"p must lie in (0,1), got {self.p}")
        if not (0 < self.lam < 1):
            raise ValueError(f"lambda must lie in (0,1), got {self.lam}")

    @property
    def w_left(self) -> float:
        return (1 - self.lam) * (1 - self.p)

    @property
    def w_blockade(self) -> float:
        return self.p

    @property
    def w_right(self) -> float:
        return self.lam * (1 - self.p)

    def mirrored(self) -> "Params":
        """Swap the roles of left and right movers (lambda -> 1-lambda)."""
        return Params(self.p, 1 - self.lam)


@dataclass(frozen=True)
class SpacingSpec:
    """Law of the i.i.d. gaps between consecutive particles.

    Variants: ``exponential`` (unit rate), ``uniform`` on (lo, hi),
    ``unit`` (deterministic spacing 1), and ``rational`` (finitely many
    positive rational atoms with rational weights summing to 1).  Only the
    last two are atomic and run in Exact mode.
    """

    variant: str
    lo: float = 0.0
    hi: float = 0.0
    atoms: tuple = ()  # tuple of (Fraction spacing, Fraction weight)

    def __post_init__(self):
        if self.variant not in ("exponential", "uniform", "unit", "rational"):
            raise ValueError(f"unknown spacing variant {self.variant!r}")
        if self.variant == "uniform":
            if not (0 < self.lo <= self.hi):
                raise ValueError("uniform spacing needs 0 < lo <= hi")
        if self.variant == "rational":
            if not self.atoms:
                raise ValueError("rational spacing needs at least one atom")
            total = Fraction(0)
            for gap, w in self.atoms:
                if Fraction(gap) <= 0:
                    raise ValueError("spacing atoms must be positive")
                if Fraction(w) < 0:
                    raise ValueError("atom weights must be nonnegative")
                total += Fraction(w)
            if total != 1:
                raise ValueError("atom weights must sum to exactly 1")

    @staticmethod
    def exponential() -> "SpacingSpec":
        return SpacingSpec("exponential")

    @staticmethod
    def uniform(lo: float, hi: float) -> "SpacingSpec":
        return SpacingSpec("uniform", lo=lo, hi=hi)

    @staticmethod
    def unit() -> "SpacingSpec":
        return SpacingSpec("unit")

    @staticmethod
    def rational(atoms) -> "SpacingSpec":
        return SpacingSpec(
            "rational",
            atoms=tuple((Fraction(g), Fraction(w)) for g, w in atoms),
        )

    @property
    def exact(self) -> bool:
        """Atomic laws get exact rational positions."""
        return self.variant in ("unit", "rational")

    @property
    def atomless(self) -> bool:
        return self.variant in ("exponential", "uniform")

    def label(self) -> str:
        if self.variant == "uniform":
            return f"uniform({self.lo},{self.hi})"
        if self.variant == "rational":
            inner = ",".join(f"{g}:{w}" for g, w in self.atoms)
            return f"rational({inner})"
        return self.variant


@dataclass(frozen=True)
class Particle:
    """One particle: nonzero signed index, position, velocity.

    Indices count outward from the origin (1, 2, ... on the positive axis,
    -1, -2, ... on the negative axis) and must be ordered like positions.
    """

    index: int
    position: Scalar
    velocity: Velocity


@dataclass(frozen=True)
class RandomnessContract:
    """Deterministic stream addressing: (master seed, trial index, label).

    The derived generator is a pure function of the triple.  Distinct
    labels or trial indices map to disjoint Philox counter blocks, so
    streams never overlap and trials parallelize without coordination.
    """

    master_seed: int
    trial_index: int = 0
    stream_label: str = ""

    def with_trial(self, trial_index: int) -> "RandomnessContract":
        return RandomnessContract(self.master_seed, trial_index, self.stream_label)

    def with_label(self, stream_label: str) -> "RandomnessContract":
        return RandomnessContract(self.master_seed, self.trial_index, stream_label)

    def philox_key(self) -> int:
        digest = hashlib.sha256(
            f"{self.master_seed}:{self.stream_label}".encode()
        ).digest()
        return int.from_bytes(digest[:16], "little")

    def generator(self) -> np.random.Generator:
        # Each trial owns a 2^128-block slice of the keyed Philox counter.
        bitgen = np.random.Philox(
            key=self.philox_key(), counter=self.trial_index << 128
        )
        return np.random.Generator(bitgen)


class StreamBank:
    """Fast per-trial uniform draws for one (master seed, label) family.

    ``uniforms(t, m)`` returns bit-identical output to
    ``RandomnessContract(seed, t, label).generator().random(m)``; reusing
    one Philox bit generator and poking its counter just avoids the
    construction cost in million-trial loops.
    """

    def __init__(self, master_seed: int, stream_label: str):
        self.master_seed = master_seed
        self.stream_label = stream_label
        key = RandomnessContract(master_seed, 0, stream_label).philox_key()
        self._bitgen = np.random.Philox(key=key)
        self._gen = np.random.Generator(self._bitgen)
        self._state = self._bitgen.state

    def uniforms(self, trial_index: int, m: int) -> np.ndarray:
        st = self._state
        st["state"]["counter"][:] = 0
        st["state"]["counter"][2] = trial_index
        st["buffer_pos"] = 4
        st["has_uint32"] = 0
        st["uinteger"] = 0
        self._bitgen.state = st
        return self._gen.random(m)


@dataclass(frozen=True)
class AlphaTriple:
    """Which side's first visitor arrives first, given both arrive.

    alpha_right = P(right visitor no later), alpha_left = P(left visitor
    no later), alpha_hat = P(tie); ties are only possible for atomic
    spacings, and the three numbers always satisfy
    alpha_right + alpha_left = 1 + alpha_hat.
    """

    alpha_right: float
    alpha_left: float
    alpha_hat: float = 0.0

    def __post_init__(self):
        for name in ("alpha_right", "alpha_left", "alpha_hat"):
            v = getattr(self, name)
            if not (0 <= v <= 1):
                raise ValueError(f"{name} must lie in [0,1], got {v}")
        resid = self.alpha_right + self.alpha_left - 1 - self.alpha_hat
        if abs(float(resid)) > 1e-9:
            raise ValueError(
                "alpha_right + alpha_left must equal 1 + alpha_hat "
                f"(residual {resid})"
            )

    def mirrored(self) -> "AlphaTriple":
        return AlphaTriple(self.alpha_left, self.alpha_right, self.alpha_hat)


SYMMETRIC_ALPHA = AlphaTriple(0.5, 0.5, 0.0)


@dataclass(frozen=True)
class Configuration:
    """A finite window of particles sorted by position.

    ``mode`` is "exact" when positions are Fractions (atomic spacing) and
    "float" otherwise.  Provenance records how the window was sampled.
    """

    particles: tuple
    mode: str
    provenance: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.mode not in ("exact", "float"):
            raise ValueError(f"mode must be 'exact' or 'float', got {self.mode!r}")
        pos = [p.position for p in self.particles]
        if any(b <= a for a, b in zip(pos, pos[1:])):
            raise ValueError("particle positions must be strictly increasing")
        idx = [p.index for p in self.particles]
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError("particle indices must be strictly increasing")
        if any(i == 0 for i in idx):
            raise ValueError("particle indices must be nonzero")

    def __len__(self) -> int:
        return len(self.particles)

    @property
    def indices(self):
        return tuple(p.index for p in self.particles)

    @property
    def positions(self):
        return tuple(p.position for p in self.particles)

    @property
    def velocities(self):
        return tuple(p.velocity for p in self.particles)

    def to_text(self) -> str:
        """One particle per line: "index position velocity".

        Exact positions print as rationals ("3/2", "2"); float positions
        print as the shortest decimal that round-trips.
        """
        lines = []
        for p in self.particles:
            if self.mode == "exact":
                pos = str(Fraction(p.position))
            else:
                pos = repr(float(p.position))
            lines.append(f"{p.index} {pos} {p.velocity.letter}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_text(text: str) -> "Configuration":
        particles = []
        exact = True
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split()
            if len(fields) != 3:
                raise ValueError(
                    f"line {lineno}: expected 'index position velocity', got {raw!r}"
                )
            try:
                index = int(fields[0])
            except ValueError:
                raise ValueError(f"line {lineno}: bad index {fields[0]!r}") from None
            postok = fields[1]
            if "." in postok or "e" in postok.lower():
                exact = False
                try:
                    position: Scalar = float(postok)
                except ValueError:
                    raise ValueError(
                        f"line {lineno}: bad position {postok!r}"
                    ) from None
            else:
                try:
                    position = Fraction(postok)
                except (ValueError, ZeroDivisionError):
                    raise ValueError(
                        f"line {lineno}: bad position {postok!r}"
                    ) from None
            try:
                velocity = Velocity.from_letter(fields[2])
            except ValueError:
                raise ValueError(
                    f"line {lineno}: bad velocity {fields[2]!r}"
                ) from None
            particles.append(Particle(index, position, velocity))
        if not particles:
            raise ValueError("no particles given")
        particles.sort(key=lambda p: p.position)
        if not exact:
            particles = [
                Particle(p.index, float(p.position), p.velocity) for p in particles
            ]
        return Configuration(tuple(particles), "exact" if exact else "float")


_VELS = (Velocity.BLOCKADE, Velocity.RIGHT, Velocity.LEFT)


def velocities_from_uniforms(u: np.ndarray, params: Params):
    """Map uniforms to velocities: [0,p) blockade, [p, p+lam(1-p)) right.

    One uniform per particle (fixed consumption), which keeps a window of
    size n a pathwise prefix of the window of size 2n drawn from the same
    stream.
    """
    t1 = params.p
    t2 = params.p + params.lam * (1 - params.p)
    out = np.full(u.shape, -1, dtype=np.int8)
    out[u < t2] = 1
    out[u < t1] = 0
    return out


def sample_velocities(params: Params, n: int, rng: RandomnessContract):
    """Draw n i.i.d. velocities from the asymmetric three-point law."""
    if n < 1:
        raise ValueError("n must be >= 1")
    u = rng.generator().random(n)
    codes = velocities_from_uniforms(u, params)
    lookup = {0: Velocity.BLOCKADE, 1: Velocity.RIGHT, -1: Velocity.LEFT}
    return [lookup[int(c)] for c in codes]


def gaps_from_uniforms(u: np.ndarray, spec: SpacingSpec):
    """Inverse-CDF spacing draws, one uniform per gap.

    Returns a float array for atomless laws and a list of Fractions for
    atomic laws.  Gaps are strictly positive (tiny floor guards against
    the measure-zero u == 0 draw).
    """
    if spec.variant == "exponential":
        g = -np.log1p(-u)
        return np.maximum(g, 1e-300)
    if spec.variant == "uniform":
        return spec.lo + (spec.hi - spec.lo) * u
    if spec.variant == "unit":
        return [Fraction(1)] * len(u)
    # rational atoms: walk the exact cumulative weights
    cum = []
    running = Fraction(0)
    for gap, w in spec.atoms:
        running += w
        cum.append((running, gap))
    out = []
    for x in u:
        fx = Fraction(float(x))
        chosen = cum[-1][1]
        for bound, gap in cum:
            if fx < bound:
                chosen = gap
                break
        out.append(chosen)
    return out


def sample_half_configuration(
    spec: SpacingSpec,
    params: Params,
    n: int,
    side: str,
    rng: RandomnessContract,
) -> Configuration:
    """Sample the n particles nearest the origin on one half-line.

    The first particle sits one spacing draw from the origin (renewal
    convention), successive gaps are i.i.d. spacing draws.  ``side`` is
    "positive" (indices 1..n) or "negative" (indices -n..-1, positions
    mirrored below 0, index -1 nearest the origin).

    Spacing and velocity uniforms interleave in one stream (gap, velocity,
    gap, velocity, ...) so windows of different sizes from the same stream
    agree on their common prefix.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if side not in ("positive", "negative"):
        raise ValueError("side must be 'positive' or 'negative'")
    u = rng.generator().random(2 * n)
    gaps = gaps_from_uniforms(u[0::2], spec)
    codes = velocities_from_uniforms(u[1::2], params)
    lookup = {0: Velocity.BLOCKADE, 1: Velocity.RIGHT, -1: Velocity.LEFT}

    mode = "exact" if spec.exact else "float"
    if mode == "exact":
        positions = []
        running = Fraction(0)
        for g in gaps:
            running += g
            positions.append(running)
    else:
        positions = list(np.cumsum(gaps))

    particles = []
    if side == "positive":
        for i in range(n):
            particles.append(Particle(i + 1, positions[i], lookup[int(codes[i])]))
    else:
        # drawn outward from the origin, then listed left-to-right
        for i in range(n):
            vel = lookup[int(codes[i])]
            particles.append(Particle(-(i + 1), -positions[i], vel))
        particles.reverse()

    provenance = {
        "params": (params.p, params.lam),
        "spacing": spec.label(),
        "seed": rng.master_seed,
        "trial": rng.trial_index,
        "label": rng.stream_label,
        "side": side,
    }
    return Configuration(tuple(particles), mode, provenance)


def half_window_arrays(
    spec: SpacingSpec, params: Params, n: int, rng: RandomnessContract
):
    """Fast path: positions/velocity codes for a positive half-window.

    Same stream discipline as :func:`sample_half_configuration` (positive
    side) but returns raw numpy arrays for the compiled kernel.  Atomic
    unit spacing yields integer-valued positions, which float64 represents
    exactly, so collision times (half-integers) stay exact.
    """
    u = rng.generator().random(2 * n)
    gaps = gaps_from_uniforms(u[0::2], spec)
    codes = velocities_from_uniforms(u[1::2], params)
    if spec.variant == "unit":
        positions = np.arange(1, n + 1, dtype=np.float64)
    elif spec.variant == "rational":
        positions = np.cumsum(np.array([float(g) for g in gaps]))
    else:
        positions = np.cumsum(gaps)
    return positions, codes

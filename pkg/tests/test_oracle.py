import itertools
import json
from fractions import Fraction

import numpy as np
import pytest

from ballistic.engine import resolve
from ballistic.model import (
    Configuration,
    Params,
    Particle,
    RandomnessContract,
    SpacingSpec,
    Velocity,
    sample_half_configuration,
)
from ballistic.oracle import (
    ENUMERATION_CAP,
    enumerate_exact,
    exact_mean_z,
    exact_truncated_q,
    naive_resolve,
)

LOOKUP = {0: Velocity.BLOCKADE, 1: Velocity.RIGHT, -1: Velocity.LEFT}


def unit_cfg(codes):
    particles = tuple(
        Particle(i + 1, Fraction(i + 1), LOOKUP[c]) for i, c in enumerate(codes)
    )
    return Configuration(particles, "exact")


def outcomes_agree(a, b):
    if a.survivors != b.survivors:
        return False
    ka = sorted((str(r.time), str(r.position), r.kind, r.indices) for r in a.collisions)
    kb = sorted((str(r.time), str(r.position), r.kind, r.indices) for r in b.collisions)
    if ka != kb:
        return False
    for i, fate in a.fates.items():
        other = b.fates[i]
        if fate.survives != other.survives:
            return False
        if not fate.survives:
            if (fate.record.time, fate.record.position) != (
                other.record.time,
                other.record.position,
            ):
                return False
    return True


def test_naive_agrees_on_triple():
    a = resolve(unit_cfg([1, 0, -1]))
    b = naive_resolve(unit_cfg([1, 0, -1]))
    assert outcomes_agree(a, b)
    assert b.collisions[0].kind == "triple"


def test_naive_agrees_exhaustively_n4():
    for codes in itertools.product((-1, 0, 1), repeat=4):
        c = unit_cfg(codes)
        assert outcomes_agree(resolve(c), naive_resolve(c)), codes


def test_naive_agrees_on_random_atomless():
    spec = SpacingSpec.exponential()
    params = Params(0.35, 0.45)
    for trial in range(200):
        c = sample_half_configuration(
            spec, params, 50, "positive", RandomnessContract(5, trial, "diff")
        )
        assert outcomes_agree(resolve(c), naive_resolve(c))


def test_sigma_one_and_two():
    # first particle moving left visits immediately; a second-indexed left
    # mover is either annihilated by particle 1 or preceded by it
    for p, lam in ((Fraction(1, 4), Fraction(1, 2)), (Fraction(2, 5), Fraction(1, 5))):
        t = enumerate_exact(4, p, lam, "sigma")
        assert t.probabilities[1] == (1 - lam) * (1 - p)
        assert t.probabilities.get(2, Fraction(0)) == 0


def test_sigma_three_closed_form():
    p, lam = Fraction(1, 3), Fraction(2, 7)
    t = enumerate_exact(3, p, lam, "sigma")
    expected = (1 - p) ** 2 * (1 - lam) ** 2 * (lam * (1 - p) + p)
    assert t.probabilities[3] == expected


def test_probabilities_partition():
    for stat in ("sigma", "zleft", "zright", "nleft", "counts"):
        t = enumerate_exact(5, Fraction(3, 10), Fraction(2, 5), stat)
        assert t.total_mass() == 1


def test_mean_z_single_particle():
    p, lam = Fraction(1, 4), Fraction(1, 3)
    assert exact_mean_z(1, p, lam, "left") == p - (1 - lam) * (1 - p)
    assert exact_mean_z(1, p, lam, "right") == p - lam * (1 - p)


def test_truncated_q_monotone():
    p, lam = Fraction(3, 10), Fraction(1, 2)
    values = [exact_truncated_q(n, p, lam) for n in range(1, 8)]
    assert values[0] == (1 - lam) * (1 - p)
    assert values[1] == values[0]
    assert all(b >= a for a, b in zip(values, values[1:]))


def test_polynomial_form_evaluates_to_probability():
    p, lam = Fraction(1, 5), Fraction(3, 7)
    t = enumerate_exact(4, p, lam, "sigma", include_polynomial=True)
    for value, coeffs in t.polynomial.items():
        acc = Fraction(0)
        for (i, r, s, tt), mult in coeffs.items():
            acc += mult * p**i * lam**r * (1 - p) ** s * (1 - lam) ** tt
        assert acc == t.probabilities[value]


def test_enumeration_budget_enforced():
    with pytest.raises(ValueError, match="budget"):
        enumerate_exact(ENUMERATION_CAP + 1, Fraction(1, 2), Fraction(1, 2))


def test_table_serializes_with_rational_strings():
    t = enumerate_exact(3, Fraction(1, 4), Fraction(1, 2), "sigma")
    payload = json.loads(json.dumps(t.to_jsonable()))
    assert payload["probabilities"]["1"] == "3/8"


def test_zleft_matches_direct_expectation():
    # cross-check the enumerated n=2 expectation against direct algebra
    p, lam = Fraction(1, 4), Fraction(2, 5)
    t = enumerate_exact(2, p, lam, "zleft")
    wb, wr, wl = p, lam * (1 - p), (1 - lam) * (1 - p)
    direct = Fraction(0)
    for c1, w1 in ((0, wb), (1, wr), (-1, wl)):
        for c2, w2 in ((0, wb), (1, wr), (-1, wl)):
            o = naive_resolve(unit_cfg([c1, c2]))
            dot, left, _ = o.counts
            direct += w1 * w2 * (dot - left)
    assert t.expectation == direct

import itertools
from fractions import Fraction

import numpy as np
import pytest

from ballistic.engine import (
    collision_log,
    first_left_visitor,
    first_right_visitor,
    mirror,
    resolve,
    survivor_counts,
    z_stats,
)
from ballistic.model import Configuration, Particle, RandomnessContract, SpacingSpec, Params, Velocity, sample_half_configuration

LOOKUP = {0: Velocity.BLOCKADE, 1: Velocity.RIGHT, -1: Velocity.LEFT}


def cfg(*spec, start_index=1):
    particles = tuple(
        Particle(start_index + i, Fraction(x), Velocity.from_letter(v))
        for i, (x, v) in enumerate(spec)
    )
    return Configuration(particles, "exact")


def unit_cfg(codes, start_index=1):
    particles = tuple(
        Particle(start_index + i, Fraction(i + 1), LOOKUP[c])
        for i, c in enumerate(codes)
    )
    return Configuration(particles, "exact")


def test_head_on_pair():
    o = resolve(cfg((1, "R"), (2, "L")))
    (rec,) = o.collisions
    assert rec.kind == "pair"
    assert rec.time == Fraction(1, 2)
    assert rec.position == Fraction(3, 2)
    assert o.survivors == []


def test_triple_collision_removes_all_three():
    o = resolve(cfg((1, "R"), (2, "B"), (3, "L")))
    (rec,) = o.collisions
    assert rec.kind == "triple"
    assert rec.time == 1
    assert rec.position == 2
    assert rec.indices == (1, 2, 3)
    assert o.survivors == []
    assert survivor_counts(o) == (0, 0, 0)
    assert z_stats(o).z_left == 0


def test_nearer_collision_preempts():
    o = resolve(cfg((1, "R"), (10, "B"), (11, "L")))
    (rec,) = o.collisions
    assert rec.kind == "pair"
    assert rec.indices == (2, 3)
    assert rec.time == 1
    assert rec.position == 10
    assert o.survivors == [1]


def test_blockade_left_left():
    o = resolve(cfg((1, "B"), (2, "L"), (3, "L")))
    (rec,) = o.collisions
    assert rec.indices == (1, 2)
    assert rec.time == 1
    assert rec.position == 1
    assert o.survivors == [3]
    assert o.first_left_visitor == (3, Fraction(3))


def test_all_blockade_window():
    o = resolve(unit_cfg([0] * 5))
    assert survivor_counts(o) == (5, 0, 0)
    assert z_stats(o).z_left == 5
    assert z_stats(o).z_right == 5


def test_single_left():
    o = resolve(unit_cfg([-1]))
    assert survivor_counts(o) == (0, 1, 0)
    assert z_stats(o).z_left == -1
    assert o.first_left_visitor == (1, Fraction(1))


def test_first_visitor_examples():
    assert resolve(unit_cfg([-1, 0, 1])).first_left_visitor[0] == 1
    assert resolve(unit_cfg([1, -1, -1])).first_left_visitor == (3, Fraction(3))
    assert resolve(unit_cfg([0, 1, -1])).first_left_visitor is None


def test_first_right_visitor_mirrors():
    particles = tuple(
        Particle(i - 3, Fraction(i - 3), LOOKUP[c]) for i, c in enumerate([1, 1, 0])
    )
    o = resolve(Configuration(particles, "exact"))
    # window -3..-1: rightmost surviving right is the visitor
    assert o.first_right_visitor is not None


def test_mirror_examples():
    c = cfg((1, "R"))
    m = mirror(c)
    assert m.particles[0].index == -1
    assert m.particles[0].position == -1
    assert m.particles[0].velocity is Velocity.LEFT
    mm = mirror(m)
    assert mm.particles == c.particles


def test_mirror_equivariance_exhaustive_small():
    for n in range(1, 5):
        for codes in itertools.product((-1, 0, 1), repeat=n):
            c = unit_cfg(codes)
            a = resolve(c)
            b = resolve(mirror(c))
            assert sorted(-i for i in b.survivors) == sorted(a.survivors)
            times_a = sorted(rec.time for rec in a.collisions)
            times_b = sorted(rec.time for rec in b.collisions)
            assert times_a == times_b
            pos_a = sorted(rec.position for rec in a.collisions)
            pos_b = sorted(-rec.position for rec in b.collisions)
            assert pos_a == pos_b


def test_scaling_invariance():
    base = [(1, "R"), (2, "B"), (4, "L"), (5, "L"), (7, "R")]
    o1 = resolve(cfg(*base))
    c = Fraction(7, 3)
    scaled = cfg(*((Fraction(x) * c, v) for x, v in base))
    o2 = resolve(scaled)
    assert o1.survivors == o2.survivors
    for r1, r2 in zip(o1.collisions, o2.collisions):
        assert r2.time == c * r1.time
        assert r2.position == c * r1.position
        assert r1.indices == r2.indices


def test_survivor_pattern_and_conservation_random():
    rng = np.random.default_rng(0)
    spec = SpacingSpec.exponential()
    params = Params(0.3, 0.45)
    for trial in range(200):
        cfgr = sample_half_configuration(
            spec, params, 40, "positive", RandomnessContract(17, trial, "pattern")
        )
        o = resolve(cfgr)
        by_index = {p.index: p for p in cfgr.particles}
        letters = [by_index[i].velocity.letter for i in o.survivors]
        assert letters == sorted(letters, key="LBR".index)
        pairs = sum(1 for r in o.collisions if r.kind == "pair")
        triples = sum(1 for r in o.collisions if r.kind == "triple")
        assert len(o.survivors) + 2 * pairs + 3 * triples == 40
        assert triples == 0  # atomless law: simultaneous hits have measure zero


def test_prefix_stability_of_first_visitor():
    rng = np.random.default_rng(3)
    spec = SpacingSpec.unit()
    params = Params(0.25, 0.5)
    for trial in range(300):
        big = sample_half_configuration(
            spec, params, 24, "positive", RandomnessContract(23, trial, "prefix")
        )
        small = Configuration(big.particles[:12], big.mode)
        ob, os_ = resolve(big), resolve(small)
        vb, vs = ob.first_left_visitor, os_.first_left_visitor
        if vb is not None and vb[0] <= 12:
            assert vs == vb
        if vs is not None:
            assert vb == vs


def test_pair_admissibility():
    rng = np.random.default_rng(9)
    for trial in range(100):
        cfgr = sample_half_configuration(
            SpacingSpec.unit(),
            Params(0.4, 0.5),
            20,
            "positive",
            RandomnessContract(31, trial, "admissible"),
        )
        o = resolve(cfgr)
        by_index = {p.index: p for p in cfgr.particles}
        for rec in o.collisions:
            vels = tuple(by_index[i].velocity.letter for i in rec.indices)
            if rec.kind == "pair":
                assert vels in (("R", "L"), ("R", "B"), ("B", "L"))
            else:
                assert vels == ("R", "B", "L")


def test_rejects_empty_and_duplicates():
    with pytest.raises(ValueError):
        resolve(Configuration((), "exact"))
    with pytest.raises(ValueError):
        Configuration(
            (
                Particle(1, Fraction(1), Velocity.RIGHT),
                Particle(2, Fraction(1), Velocity.LEFT),
            ),
            "exact",
        )


def test_collision_log_format():
    o = resolve(cfg((1, "R"), (2, "L")))
    assert collision_log(o) == "1/2 3/2 pair 1 2\n"

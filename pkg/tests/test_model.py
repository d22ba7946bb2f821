import numpy as np
import pytest
from fractions import Fraction

from ballistic.model import (
    AlphaTriple,
    Configuration,
    Params,
    Particle,
    RandomnessContract,
    SpacingSpec,
    StreamBank,
    Velocity,
    half_window_arrays,
    sample_half_configuration,
    sample_velocities,
)


def test_params_validation():
    Params(0.5, 0.5)
    with pytest.raises(ValueError):
        Params(0.0, 0.5)
    with pytest.raises(ValueError):
        Params(0.5, 1.0)


def test_velocity_weights():
    p = Params(0.25, 0.5)
    assert p.w_left == pytest.approx(0.375)
    assert p.w_blockade == 0.25
    assert p.w_right == pytest.approx(0.375)
    assert p.w_left + p.w_blockade + p.w_right == pytest.approx(1.0)


def test_velocity_frequencies_match_law():
    # law of large numbers at 4 binomial sigmas
    params = Params(0.999, 0.5)
    rng = RandomnessContract(123, 0, "vel-test")
    n = 10**6
    vels = sample_velocities(params, n, rng)
    frac = sum(1 for v in vels if v is Velocity.BLOCKADE) / n
    se = np.sqrt(0.999 * 0.001 / n)
    assert abs(frac - 0.999) < 4 * se

    params = Params(0.5, 0.5)
    vels = sample_velocities(params, n, RandomnessContract(7, 0, "vel-test-2"))
    for target in (Velocity.LEFT, Velocity.RIGHT):
        frac = sum(1 for v in vels if v is target) / n
        assert abs(frac - 0.25) < 4 * np.sqrt(0.25 * 0.75 / n)


def test_unit_half_configurations():
    spec = SpacingSpec.unit()
    params = Params(0.3, 0.5)
    rng = RandomnessContract(1, 0, "cfg")
    cfg = sample_half_configuration(spec, params, 3, "positive", rng)
    assert cfg.positions == (Fraction(1), Fraction(2), Fraction(3))
    assert cfg.indices == (1, 2, 3)
    assert cfg.mode == "exact"

    neg = sample_half_configuration(spec, params, 2, "negative", rng)
    assert neg.positions == (Fraction(-2), Fraction(-1))
    assert neg.indices == (-2, -1)


def test_exponential_mean_gap():
    spec = SpacingSpec.exponential()
    params = Params(0.3, 0.5)
    n = 10**4
    cfg = sample_half_configuration(
        spec, params, n, "positive", RandomnessContract(5, 0, "gaps")
    )
    mean_gap = cfg.positions[-1] / n
    assert abs(mean_gap - 1.0) < 4 / np.sqrt(n)


def test_reproducibility_bit_identical():
    spec = SpacingSpec.exponential()
    params = Params(0.3, 0.6)
    rc = RandomnessContract(42, 3, "repro")
    a = sample_half_configuration(spec, params, 50, "positive", rc)
    b = sample_half_configuration(spec, params, 50, "positive", rc)
    assert a.positions == b.positions
    assert a.velocities == b.velocities
    c = sample_half_configuration(spec, params, 50, "positive", rc.with_trial(4))
    assert a.positions != c.positions


def test_stream_bank_matches_contract():
    bank = StreamBank(99, "some/label")
    for trial in (0, 1, 17, 2**40):
        via_contract = RandomnessContract(99, trial, "some/label").generator().random(32)
        assert np.array_equal(bank.uniforms(trial, 32), via_contract)


def test_prefix_coupling_across_window_sizes():
    spec = SpacingSpec.exponential()
    params = Params(0.25, 0.5)
    rc = RandomnessContract(7, 11, "prefix")
    small = sample_half_configuration(spec, params, 16, "positive", rc)
    big = sample_half_configuration(spec, params, 32, "positive", rc)
    assert big.positions[:16] == small.positions
    assert big.velocities[:16] == small.velocities


def test_fast_arrays_match_configuration():
    spec = SpacingSpec.exponential()
    params = Params(0.4, 0.3)
    rc = RandomnessContract(13, 2, "fastpath")
    cfg = sample_half_configuration(spec, params, 24, "positive", rc)
    pos, codes = half_window_arrays(spec, params, 24, rc)
    assert np.array_equal(pos, np.array([float(p.position) for p in cfg.particles]))
    assert [int(c) for c in codes] == [p.velocity.speed for p in cfg.particles]


def test_serialization_round_trip_exact():
    spec = SpacingSpec.rational([(Fraction(1, 3), Fraction(1, 2)), (Fraction(2), Fraction(1, 2))])
    params = Params(0.3, 0.5)
    cfg = sample_half_configuration(spec, params, 8, "positive", RandomnessContract(3, 0, "ser"))
    assert cfg.mode == "exact"
    text = cfg.to_text()
    back = Configuration.from_text(text)
    assert back.positions == cfg.positions
    assert back.velocities == cfg.velocities
    assert back.mode == "exact"


def test_serialization_round_trip_float():
    spec = SpacingSpec.exponential()
    params = Params(0.3, 0.5)
    cfg = sample_half_configuration(spec, params, 20, "positive", RandomnessContract(3, 0, "serf"))
    back = Configuration.from_text(cfg.to_text())
    assert back.mode == "float"
    assert back.positions == cfg.positions


def test_from_text_errors_carry_line_numbers():
    with pytest.raises(ValueError, match="line 2"):
        Configuration.from_text("1 1 R\n2 x L\n")
    with pytest.raises(ValueError, match="no particles"):
        Configuration.from_text("\n\n")


def test_configuration_rejects_disorder():
    with pytest.raises(ValueError):
        Configuration(
            (
                Particle(1, 2.0, Velocity.LEFT),
                Particle(2, 1.0, Velocity.LEFT),
            ),
            "float",
        )
    with pytest.raises(ValueError):
        Configuration(
            (
                Particle(1, 1.0, Velocity.LEFT),
                Particle(2, 1.0, Velocity.LEFT),
            ),
            "float",
        )


def test_alpha_triple_relation_enforced():
    AlphaTriple(0.6, 0.5, 0.1)
    with pytest.raises(ValueError):
        AlphaTriple(0.6, 0.5, 0.0)


def test_spacing_spec_validation():
    with pytest.raises(ValueError):
        SpacingSpec.uniform(0.0, 1.0)
    with pytest.raises(ValueError):
        SpacingSpec.rational([(Fraction(1), Fraction(1, 2))])
    spec = SpacingSpec.rational([("1/2", "1/3"), ("3/2", "2/3")])
    assert spec.exact and not spec.atomless

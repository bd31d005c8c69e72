import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dirng.npa import tsirelson_bound
from dirng.quantum import extremal_behavior, reference_device, sample_counts
from dirng.scenario import (CHSH_SCENARIO, IP_COEFFS, Behavior, BellExpression, FrequencyTable,
                            InputDistribution, Scenario, ScenarioMismatch, bell_value, chsh,
                            chsh_variant, correlator_coefficients, correlators,
                            expression_from_correlators, expression_set, from_coefficient_list,
                            normalization_expression, signaling_norm, tilted_beta, tilted_chsh)

UNIFORM = Behavior.uniform(CHSH_SCENARIO)
PI = InputDistribution.uniform(CHSH_SCENARIO)


def random_behavior(rng) -> Behavior:
    """Convex mixture of random deterministic points (always no-signaling)."""
    w = rng.dirichlet(np.ones(4))
    out = np.zeros(CHSH_SCENARIO.shape)
    for wk in w:
        strat = rng.integers(0, 2, size=(2, 2))
        out += wk * Behavior.deterministic(CHSH_SCENARIO, strat).table
    return Behavior(CHSH_SCENARIO, out)


def test_scenario_counts():
    s = Scenario((2, 3), (2, 4))
    assert s.n_inputs == 6 and s.n_outputs == 8 and s.parties == 2
    with pytest.raises(ValueError):
        Scenario((2, 0), (2, 2))
    with pytest.raises(ValueError):
        Scenario((), ())


def test_behavior_validation():
    with pytest.raises(ValueError):
        Behavior(CHSH_SCENARIO, np.full(CHSH_SCENARIO.shape, 0.3))
    t = np.full(CHSH_SCENARIO.shape, 0.25)
    t[0, 0] += 1e-9
    with pytest.raises(ValueError):
        Behavior(CHSH_SCENARIO, t)


def test_chsh_local_deterministic_is_two():
    p = Behavior.deterministic(CHSH_SCENARIO, [[0, 0], [0, 0]])
    assert bell_value(chsh(), p) == 2.0


def test_uniform_noise_zero():
    assert bell_value(chsh(), UNIFORM) == 0.0
    assert tilted_chsh(1.0, PI)(UNIFORM) == pytest.approx(0.0, abs=1e-15)


def test_tilted_reduces_to_chsh():
    assert tilted_chsh(0.0).same_coefficients(chsh_variant(0, 0))


def test_tilted_beta_value():
    assert tilted_beta(math.pi / 8) == pytest.approx(2 / math.sqrt(3), abs=1e-12)
    assert tilted_beta(math.pi / 8) == pytest.approx(1.1547, abs=1e-4)


@pytest.mark.parametrize("theta", [math.pi / 8, math.pi / 6, math.pi / 4])
def test_tilted_maximum(theta):
    beta = tilted_beta(theta)
    f = tilted_chsh(beta, PI)
    oracle = math.sqrt(8 + 2 * beta * beta)
    assert f(extremal_behavior(theta)) == pytest.approx(oracle, abs=1e-9)
    assert tsirelson_bound(f, 2) == pytest.approx(oracle, abs=1e-5)


def test_chsh_variants_on_circle():
    p = extremal_behavior(math.pi / 4)
    v = [chsh_variant(0, 0)(p), chsh_variant(0, 1)(p)]
    assert v[0] ** 2 + v[1] ** 2 == pytest.approx(8.0, abs=1e-9)


def test_chsh_variant_signs():
    f = chsh_variant(0, 1)
    _, _, joint = correlator_coefficients(f)
    assert joint.tolist() == [[1.0, 1.0], [-1.0, 1.0]]
    with pytest.raises(ValueError):
        chsh_variant(2, 0)


def test_expression_from_correlators_constant_only():
    f = expression_from_correlators([0, 0, 0, 0], [0, 0, 0, 0], 1.0)
    for strat in ([[0, 1], [1, 0]], [[1, 1], [0, 0]]):
        assert f(Behavior.deterministic(CHSH_SCENARIO, strat)) == 1.0
    assert f(reference_device()) == pytest.approx(1.0, abs=1e-15)


def test_expression_from_correlators_chsh():
    assert expression_from_correlators([0, 0, 0, 0], [1, 1, 1, -1]).same_coefficients(chsh())


def test_ip_value_matches_correlator_space():
    p = reference_device()
    c = correlators(p, pi=PI)
    direct = IP_COEFFS[0] + float(np.dot(IP_COEFFS[1:], c))
    for x0 in (None, (1, 0)):
        assert from_coefficient_list(IP_COEFFS, PI, "I_p", x0)(p) == pytest.approx(direct, abs=1e-12)


def test_marginal_weights_biased_pi():
    pi = InputDistribution(CHSH_SCENARIO, [0.1, 0.2, 0.3, 0.4])
    f = expression_from_correlators([1, 0, 0, 0], np.zeros(4), pi=pi)
    p = reference_device()
    # <A_0> is the same in every context for a no-signaling behavior
    expected = p.prob((0, 0), (0, 0)) + p.prob((0, 1), (0, 0)) - p.prob((1, 0), (0, 0)) \
        - p.prob((1, 1), (0, 0))
    assert f(p) == pytest.approx(expected, abs=1e-12)
    with pytest.raises(ValueError):
        expression_from_correlators([1, 0, 0, 0], np.zeros(4),
                                    pi=InputDistribution(CHSH_SCENARIO, [0, 0, 0.5, 0.5]))


def test_scenario_mismatch():
    other = Scenario((2, 2), (2, 3))
    with pytest.raises(ScenarioMismatch):
        bell_value(chsh(), Behavior.uniform(other))


def test_signaling_norm():
    assert signaling_norm(reference_device()) <= 1e-12
    exact = FrequencyTable(CHSH_SCENARIO, np.full(CHSH_SCENARIO.shape, 25), PI)
    assert signaling_norm(exact) == 0.0
    counts = np.zeros(CHSH_SCENARIO.shape, dtype=int)
    counts[0, 0] = 4
    assert signaling_norm(FrequencyTable(CHSH_SCENARIO, counts, PI)) > 0


def test_signaling_norm_decays():
    p = reference_device()
    ns = [10**3, 10**5, 10**7]
    vals = [np.mean([signaling_norm(sample_counts(p, PI, n, seed)) for seed in range(20)])
            for n in ns]
    assert vals[0] > vals[1] > vals[2]
    # ~ n^-1/2: each factor of 100 in n shrinks the norm by about 10
    for a, b in zip(vals, vals[1:]):
        assert 4 < a / b < 25


@given(st.fractions(min_value=-5, max_value=5, max_denominator=16),
       st.fractions(min_value=-5, max_value=5, max_denominator=16), st.integers(0, 2**31))
def test_linearity_exact(a, b, seed):
    rng = np.random.default_rng(seed)
    fc = rng.integers(-3, 4, CHSH_SCENARIO.shape)
    gc = rng.integers(-3, 4, CHSH_SCENARIO.shape)
    counts = rng.integers(1, 6, CHSH_SCENARIO.shape)
    table = [[Fraction(int(counts[i, j]), int(counts[:, j].sum())) for j in range(4)]
             for i in range(4)]

    def exact(coeffs):
        return sum(coeffs[i][j] * table[i][j] for i in range(4) for j in range(4))

    combo = [[a * int(fc[i, j]) + b * int(gc[i, j]) for j in range(4)] for i in range(4)]
    assert exact(combo) == a * exact(fc.tolist()) + b * exact(gc.tolist())
    ftab = np.array(counts / counts.sum(axis=0), dtype=float)
    f = BellExpression(CHSH_SCENARIO, fc)
    g = BellExpression(CHSH_SCENARIO, gc)
    lhs = bell_value(f * float(a) + g * float(b), ftab)
    rhs = float(a) * bell_value(f, ftab) + float(b) * bell_value(g, ftab)
    assert lhs == pytest.approx(rhs, abs=1e-12)


@given(st.floats(0, 1), st.integers(0, 2**31))
def test_convexity_in_behaviors(q, seed):
    rng = np.random.default_rng(seed)
    p1, p2 = random_behavior(rng), random_behavior(rng)
    f = BellExpression(CHSH_SCENARIO, rng.normal(size=CHSH_SCENARIO.shape))
    mixed = p1.mix(p2, q)
    assert f(mixed) == pytest.approx(q * f(p1) + (1 - q) * f(p2), abs=1e-12)


@given(st.lists(st.floats(-3, 3), min_size=9, max_size=9))
def test_correlator_roundtrip(c):
    f = from_coefficient_list(c)
    const, marg, joint = correlator_coefficients(f)
    back = np.concatenate([[const], marg, joint.ravel()])
    assert np.max(np.abs(back - np.array(c))) < 1e-12


def test_expression_sets():
    assert len(expression_set("e")) == 16
    assert len(expression_set("g")) == 8
    h = expression_set("h")
    assert len(h) == 8 and h[4].same_coefficients(chsh())
    with pytest.raises(ValueError):
        expression_set("x")


def test_normalization_expression():
    u = normalization_expression(CHSH_SCENARIO, (1, 0))
    assert u(reference_device()) == pytest.approx(1.0, abs=1e-15)

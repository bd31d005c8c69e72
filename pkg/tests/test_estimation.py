import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dirng.estimation import (ConfidenceRegion, EpsilonBudget, confidence_region, deviation,
                              estimate, estimate_all, split_budget)
from dirng.quantum import reference_device, sample_counts, sample_transcript
from dirng.scenario import (CHSH_SCENARIO, Behavior, BellExpression, FrequencyTable,
                            InputDistribution, chsh, normalization_expression)

PI = InputDistribution.uniform(CHSH_SCENARIO)


def per_round(f: BellExpression, pi: InputDistribution, xs, as_) -> Fraction:
    """Exact per-round average of ``f(a_j, x_j) / pi(x_j)``."""
    total = Fraction(0)
    for x, a in zip(xs, as_):
        total += Fraction(f.coeffs[a, x]) / Fraction(pi.weights[x])
    return total / len(xs)


def test_small_transcript_two_orders():
    s = CHSH_SCENARIO
    rounds = [((0, 0), (0, 0)), ((0, 0), (0, 0)), ((1, 1), (1, 1)), ((0, 1), (1, 0))]
    xs = [s.input_index(x) for x, _ in rounds]
    as_ = [s.output_index(a) for _, a in rounds]
    freq = FrequencyTable.from_rounds(s, xs, as_, PI)
    direct = per_round(chsh(), PI, xs, as_)
    assert estimate(chsh(), freq) == float(direct)
    # rounds: +4, +4, (A1B1 with a=(0,0)) -4, (A1B0 with a=(0,1)) -4
    assert direct == 0


@given(st.integers(0, 2**31), st.integers(1, 400))
def test_estimator_orders_agree(seed, n):
    rng = np.random.default_rng(seed)
    w = rng.dirichlet(np.ones(4))
    pi = InputDistribution(CHSH_SCENARIO, w / w.sum())
    f = BellExpression(CHSH_SCENARIO, rng.integers(-4, 5, CHSH_SCENARIO.shape))
    t = sample_transcript(reference_device(), pi, n, seed)
    freq = t.frequency_table(pi)
    assert estimate(f, freq) == pytest.approx(float(per_round(f, pi, t.inputs, t.outputs)),
                                              rel=1e-12, abs=1e-12)


def test_normalization_estimator_deterministic_device():
    det = Behavior.deterministic(CHSH_SCENARIO, [[0, 1], [1, 1]])
    u = normalization_expression(CHSH_SCENARIO)
    # u is supported on x0 only, so the estimator is #(x0) / (n pi(x0)); exact for uniform
    # input counts
    counts = np.zeros(CHSH_SCENARIO.shape, dtype=int)
    counts[:, :] = det.table.astype(int) * 25
    assert estimate(u, FrequencyTable(CHSH_SCENARIO, counts, PI)) == 1.0


def test_estimate_converges():
    p = reference_device()
    freq = sample_counts(p, PI, 10**7, seed=4)
    assert abs(estimate(chsh(), freq) - chsh()(p)) < 5e-3


def test_estimator_unbiased():
    p = reference_device()
    n, trials = 1000, 10**4
    vals = np.array([estimate(chsh(), sample_counts(p, PI, n, seed)) for seed in range(trials)])
    se = vals.std(ddof=1) / math.sqrt(trials)
    assert abs(vals.mean() - chsh()(p)) < 3 * se


def test_support_violation():
    pi = InputDistribution(CHSH_SCENARIO, [0.5, 0.5, 0.0, 0.0])
    freq = FrequencyTable(CHSH_SCENARIO, np.ones(CHSH_SCENARIO.shape, dtype=int), pi)
    with pytest.raises(ValueError):
        estimate(chsh(), freq)


def test_deviation_values():
    with mpmath.workdps(40):
        oracle = 4 * mpmath.sqrt(2 * mpmath.log(mpmath.mpf(10) ** 6) / mpmath.mpf(10) ** 6)
    assert deviation(4, 1e-6, 10**6) == pytest.approx(float(oracle), rel=1e-14)
    assert deviation(4, 1e-6, 10**6) == pytest.approx(0.021026, abs=1e-6)
    assert deviation(3, 1.0, 10) == 0.0
    assert deviation(2, 1e-3, 4 * 10**5) == pytest.approx(deviation(2, 1e-3, 10**5) / 2,
                                                          rel=1e-14)
    for bad in ((0, 0.1, 10), (1, 0.0, 10), (1, 0.1, 0)):
        with pytest.raises(ValueError):
            deviation(*bad)


def test_split_budget_examples():
    b = split_budget(1e-6, 1, "one_sided", ["lower"])
    assert (b.eps_plus[0], b.eps_minus[0]) == (0.0, 1e-6)
    b = split_budget(1e-6, 8)
    assert np.all(b.eps_plus == 6.25e-8) and np.all(b.eps_minus == 6.25e-8)
    with pytest.raises(ValueError):
        split_budget(1e-6, 2, "one_sided", [])
    with pytest.raises(ValueError):
        split_budget(1e-6, 2, "one_sided", ["lower", "sideways"])
    with pytest.raises(ValueError):
        split_budget(0.0, 2)


@given(st.floats(1e-12, 0.5), st.integers(1, 20),
       st.lists(st.sampled_from(["lower", "upper", "both"]), min_size=20, max_size=20))
def test_split_budget_conserves(eps, t, dirs):
    for b in (split_budget(eps, t), split_budget(eps, t, "one_sided", dirs[:t])):
        assert b.total == pytest.approx(eps, rel=1e-12)


def test_one_sided_region():
    b = split_budget(1e-6, 1, "one_sided", ["lower"])
    r = confidence_region([2.5], [6.0], b, 10**6)
    assert r.upper[0] == math.inf
    assert r.lower[0] == pytest.approx(2.5 - deviation(6.0, 1e-6, 10**6), abs=1e-15)
    assert r.contains([1e300]) and not r.contains([2.0])
    assert r.to_dict()["upper"] == ["inf"]


def test_even_split_equal_widths():
    t, eps, n = 8, 1e-6, 10**8
    g = np.linspace(1, 8, t)
    r = confidence_region(np.zeros(t), g, split_budget(eps, t), n)
    expected = 2 * g * np.sqrt(2 / n * math.log(16 / eps))
    assert np.allclose(r.upper - r.lower, expected, rtol=1e-12)


@given(st.floats(1e-9, 0.4), st.floats(1e-9, 0.4))
def test_width_decreasing_in_epsilon(e1, e2):
    lo, hi = sorted((e1, e2))
    assert deviation(1.0, hi, 100) <= deviation(1.0, lo, 100)


def test_region_validation():
    with pytest.raises(ValueError):
        ConfidenceRegion([1.0], [0.0], 0.1, 10)
    with pytest.raises(ValueError):
        EpsilonBudget([0.0], [0.0])
    with pytest.raises(ValueError):
        confidence_region([1.0, 2.0], [1.0], split_budget(0.1, 1), 10)


def test_estimate_all():
    freq = sample_counts(reference_device(), PI, 10**4, seed=0)
    exprs = [chsh(), normalization_expression(CHSH_SCENARIO)]
    assert estimate_all(exprs, freq).tolist() == [estimate(f, freq) for f in exprs]

import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dirng.guessing import (DualCertificate, GPQuery, GPResult, eta_bound, gamma_bound,
                            guessing_probability_point, guessing_probability_region,
                            optimal_expression, solve_dual, verify_certificate)
from dirng.protocol import XR_CHOICES
from dirng.quantum import biased_input_distribution, reference_device
from dirng.scenario import (CHSH_SCENARIO, IP_ALL_COEFFS, IP_COEFFS, Behavior,
                            InputDistribution, chsh, chsh_variant, correlator_coefficients,
                            correlators, expression_set, from_coefficient_list,
                            probability_expression)

from conftest import chsh_guess_formula

ALL = XR_CHOICES["all"]
ALICE = (0,)
PI = InputDistribution.uniform(CHSH_SCENARIO)
ROOT8 = 2 * math.sqrt(2)


def chsh_query(lo, hi=None, parties=ALICE, xr=ALL):
    return GPQuery([chsh()], [lo], [lo if hi is None else hi], xr, 2, parties)


@pytest.mark.parametrize("S", [2.0, 2.2, 2.4, 2.6, 2.8])
def test_chsh_curve(S):
    res = guessing_probability_point([S], chsh_query(S))
    assert res.status == "optimal"
    assert res.g == pytest.approx(chsh_guess_formula(S), abs=1e-4)
    assert res.h == pytest.approx(-math.log2(res.g), abs=1e-12)


def test_chsh_tsirelson_point():
    res = guessing_probability_point([ROOT8], chsh_query(ROOT8))
    assert res.g == pytest.approx(0.5, abs=1e-4)
    # guessing both outputs at once
    joint = guessing_probability_point([ROOT8], chsh_query(ROOT8, parties=None))
    assert joint.g == pytest.approx((2 + math.sqrt(2)) / 8, abs=1e-4)


@pytest.mark.parametrize("parties", [ALICE, None])
def test_local_value_certifies_nothing(parties):
    res = guessing_probability_point([2.0], chsh_query(2.0, parties=parties))
    assert res.g == pytest.approx(1.0, abs=1e-7)
    assert res.h == pytest.approx(0.0, abs=1e-6)


def test_region_worst_case_at_local_edge():
    res = guessing_probability_region(chsh_query(2.0, ROOT8))
    assert res.g == pytest.approx(1.0, abs=1e-7)


def test_region_point_matches_point_query():
    q = chsh_query(2.6)
    assert guessing_probability_region(q).g == pytest.approx(
        guessing_probability_point([2.6], q).g, abs=1e-8)


def test_region_outside_quantum_set():
    exprs = [chsh_variant(0, 0), chsh_variant(0, 1)]
    q = GPQuery(exprs, [2.5, 2.5], [2.7, 2.7], [(0, 0)], 2)
    for res in (guessing_probability_region(q), solve_dual(q)):
        assert res.status == "infeasible_primal"
        assert (res.g, res.h) == (1.0, 0.0)
    q = GPQuery([chsh()], [3.0], [3.5], ALL, 2)
    assert guessing_probability_region(q).status == "infeasible_primal"


def test_dual_matches_primal():
    q = chsh_query(2.5)
    dual = solve_dual(q)
    primal = guessing_probability_point([2.5], q)
    assert dual.g == pytest.approx(primal.g, abs=1e-4)
    assert dual.g == pytest.approx(0.83072, abs=1e-4)
    assert dual.g >= primal.primal - 1e-6


def test_one_sided_region_has_no_upper_multiplier():
    q = chsh_query(2.5, math.inf)
    for res in (solve_dual(q), guessing_probability_region(q)):
        w = res.witness
        assert w.y_plus[0] == 0.0
        assert w.value(q.lower, q.upper) == pytest.approx(w.y0 - w.y_minus[0] * 2.5, abs=1e-12)
        assert res.g == pytest.approx(chsh_guess_formula(2.5), abs=1e-4)


@pytest.mark.parametrize("method", ["region", "dual"])
def test_certificate_verifies(method):
    q = GPQuery([chsh(), chsh_variant(0, 1)], [2.3, -0.5], [2.4, 0.5], ALL, 2)
    res = guessing_probability_region(q) if method == "region" else solve_dual(q)
    bound = verify_certificate(q, res.witness)
    assert bound == pytest.approx(res.g, abs=1e-6)
    assert bound >= res.primal - 1e-6
    bad = DualCertificate(res.witness.y0 - 0.1, res.witness.y_plus, res.witness.y_minus,
                          res.witness.sos)
    with pytest.raises(ValueError):
        verify_certificate(q, bad)


def test_optimal_expression_restricted():
    p = reference_device()
    expr, res = optimal_expression(p, XR_CHOICES["10"])
    c, m, j = correlator_coefficients(expr)
    got = np.concatenate([[c], m, j.ravel()])
    ref = np.array(IP_COEFFS)
    assert np.max(np.abs(got / got[-1] * ref[-1] - ref)) < 0.05
    # certified values agree with the reported expression
    ip = from_coefficient_list(IP_COEFFS, PI, "I_p", x0=(1, 0))
    g_ip = guessing_probability_point([ip(p)], GPQuery([ip], [0], [0], XR_CHOICES["10"])).g
    g_ex = guessing_probability_point([expr(p)], GPQuery([expr], [0], [0], XR_CHOICES["10"])).g
    assert g_ip == pytest.approx(g_ex, abs=1e-3)
    assert expr(p) == pytest.approx(ip(p), abs=1e-3)
    assert expr(p) == pytest.approx(res.g, abs=1e-9)


def test_optimal_expression_all_inputs():
    expr, _ = optimal_expression(reference_device(), ALL)
    c, m, j = correlator_coefficients(expr)
    got = np.concatenate([[c], m, j.ravel()])
    ref = np.array(IP_ALL_COEFFS)
    assert np.max(np.abs(got / got[-1] * ref[-1] - ref)) < 0.05


def test_optimal_expression_noise():
    _, res = optimal_expression(Behavior.uniform(CHSH_SCENARIO), XR_CHOICES["10"])
    assert res.g == pytest.approx(1.0, abs=1e-7)
    assert res.witness.y0 == pytest.approx(1.0, abs=1e-6)
    assert np.max(np.abs(res.witness.y)) < 1e-6


def test_point_value_of_full_behavior_is_h_of_p():
    p = reference_device()
    q = GPQuery.point(expression_set("g", PI), correlators(p, pi=PI), XR_CHOICES["10"])
    assert guessing_probability_point(q.lower, q).h == pytest.approx(0.6551, abs=1e-3)


def test_gamma_bounds():
    assert gamma_bound(chsh(), PI) == pytest.approx(4 + ROOT8, abs=1e-6)
    pi = InputDistribution(CHSH_SCENARIO, [0.1, 0.2, 0.3, 0.4])
    e = probability_expression(CHSH_SCENARIO, (0, 1), (1, 0))
    assert gamma_bound(e, pi) == pytest.approx(1 / 0.3, abs=1e-6)
    with pytest.raises(ValueError):
        gamma_bound(e, InputDistribution(CHSH_SCENARIO, [0.5, 0.5, 0.0, 0.0]))


def test_gamma_grows_with_bias():
    e = probability_expression(CHSH_SCENARIO, (0, 0), (0, 0))
    n1, n2 = 10**6, 10**11
    g1 = gamma_bound(e, biased_input_distribution(n1))
    g2 = gamma_bound(e, biased_input_distribution(n2))
    assert g2 / g1 == pytest.approx((n2 / n1) ** 0.2, rel=1e-9)


def test_eta_bounds():
    assert eta_bound(CHSH_SCENARIO) == 2.0
    assert eta_bound(CHSH_SCENARIO, guess_parties=ALICE) == 1.0
    for xr, parties in ((ALL, None), ([(0, 0)], None), (ALL, ALICE)):
        exact = eta_bound(CHSH_SCENARIO, xr, 2, "exact", parties)
        assert exact <= eta_bound(CHSH_SCENARIO, xr, 2, "trivial", parties) + 1e-12
        assert exact > 0
    with pytest.raises(ValueError):
        eta_bound(CHSH_SCENARIO, mode="sloppy")


def test_more_expressions_never_hurt():
    p = reference_device()
    f = [chsh(), chsh_variant(0, 1)]
    vals = [fk(p) for fk in f]
    one = guessing_probability_point(vals[:1], GPQuery.point(f[:1], vals[:1], ALL))
    two = guessing_probability_point(vals, GPQuery.point(f, vals, ALL))
    assert two.g <= one.g + 1e-7


def test_query_validation():
    with pytest.raises(ValueError):
        GPQuery([], [], [], ALL)
    with pytest.raises(ValueError):
        GPQuery([chsh()], [2.5], [2.4], ALL)
    with pytest.raises(ValueError):
        GPQuery([chsh()], [2.5], [2.6], [])
    with pytest.raises(ValueError):
        GPQuery([chsh()], [2.5], [2.6], ALL, guess_parties=(2,))


def test_serialization_roundtrip():
    q = chsh_query(2.5, math.inf)
    doc = json.loads(json.dumps(q.to_dict()))
    back = GPQuery.from_dict(doc)
    assert back.to_dict() == q.to_dict()
    res = solve_dual(q)
    again = GPResult.from_dict(json.loads(json.dumps(res.to_dict())))
    assert again.to_dict() == res.to_dict()


@given(st.floats(2.05, 2.8), st.floats(0.0, 0.05), st.floats(0.0, 0.05))
def test_region_monotone(center, w1, w2):
    inner = chsh_query(center - w1, center + w1)
    outer = chsh_query(center - w1 - w2, center + w1 + w2)
    assert guessing_probability_region(inner).g <= guessing_probability_region(outer).g + 1e-7

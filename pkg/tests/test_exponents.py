import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ellipticlab.exponents import (
    INF,
    ONE,
    CriticalExponents,
    Ext,
    WeightIndices,
    compatibility,
    conjugate,
    ext,
    exponent_grid,
    power_weight_indices,
    power_weight_riesz_condition,
    predicted_ranges,
    sobolev_exponents,
    unit_weight_indices,
    ww_interval,
)

above_one = st.fractions(min_value=Fraction(1), max_value=Fraction(64), max_denominator=97).filter(lambda x: x > 1)
at_least_one = st.fractions(min_value=Fraction(1), max_value=Fraction(64), max_denominator=97)
ext_at_least_one = st.one_of(at_least_one.map(Ext), st.just(INF))


@st.composite
def indices(draw):
    r = draw(at_least_one)
    s = draw(st.one_of(above_one.map(Ext), st.just(INF)))
    return WeightIndices(r, s, 2.0)


def test_ext_parsing():
    assert Ext("inf").is_inf and Ext(float("inf")).is_inf
    assert Ext("3/2") == Ext(Fraction(3, 2)) == Ext(1.5)
    with pytest.raises(ValueError):
        Ext(float("nan"))
    with pytest.raises(ValueError):
        Ext(-math.inf)
    with pytest.raises(ValueError):
        INF.fraction


def test_conjugate_endpoints():
    assert conjugate(1) == INF
    assert conjugate(INF) == ONE
    assert conjugate(2) == 2
    assert conjugate("3/2") == 3
    with pytest.raises(ValueError):
        conjugate("1/2")


@given(ext_at_least_one)
def test_conjugate_is_involution(p):
    assert conjugate(conjugate(p)) == p


@given(above_one)
def test_conjugate_holder_relation(p):
    q = conjugate(p)
    assert Ext(1) / p + Ext(1) / q == 1


@settings(max_examples=300)
@given(indices(), at_least_one, st.integers(1, 3))
def test_sobolev_round_trip_exact(idx, p, n):
    lower, _ = sobolev_exponents(p, idx, n)
    _, back = sobolev_exponents(lower, idx, n)
    assert back == Ext(p)


@given(indices(), at_least_one, st.integers(1, 3))
def test_sobolev_upper_is_infinite_past_critical(idx, p, n):
    _, upper = sobolev_exponents(p, idx, n)
    assert upper.is_inf == (Ext(p) >= idx.r_w * n)
    lower, _ = sobolev_exponents(p, idx, n)
    assert lower < Ext(p)


def test_sobolev_rejects_bad_input():
    idx = unit_weight_indices(2)
    with pytest.raises(ValueError):
        sobolev_exponents(INF, idx, 2)
    with pytest.raises(ValueError):
        sobolev_exponents(0, idx, 2)


@given(at_least_one, ext_at_least_one)
def test_ww_interval_unit_weight_is_identity(p0, q0):
    if not Ext(p0) < q0:
        return
    rng = ww_interval(unit_weight_indices(2), p0, q0)
    assert rng.lo == Ext(p0) and rng.hi == q0
    assert rng.provenance == "certified" and rng.open_ends == (True, True)


@settings(max_examples=300)
@given(indices(), at_least_one, ext_at_least_one, st.sampled_from(["J", "K"]))
def test_compatibility_iff_nonempty(idx, lo, hi, kind):
    if not Ext(lo) < hi:
        return
    if hi.is_inf:
        ce = CriticalExponents(lo, INF, lo, INF)
    elif kind == "J":
        ce = CriticalExponents(lo, hi, lo, hi)
    else:
        ce = CriticalExponents(lo, hi + 1, lo, hi)
    bounds = (ce.p_minus, ce.p_plus) if kind == "J" else (ce.q_minus, ce.q_plus)
    assert compatibility(idx, ce, kind) == (not ww_interval(idx, *bounds).empty)


def test_power_weight_indices_closed_form():
    w = power_weight_indices("-3/2", 2)
    assert w.r_w == 1 and w.s_w == Ext("4/3")
    w = power_weight_indices(1, 2)
    assert w.r_w == Ext("3/2") and w.s_w.is_inf and w.doubling_order == 3.0
    with pytest.raises(ValueError):
        power_weight_indices(-2, 2)


def test_weight_indices_validation():
    with pytest.raises(ValueError):
        WeightIndices("1/2", 2, 2.0)
    with pytest.raises(ValueError):
        WeightIndices(1, 1, 2.0)
    with pytest.raises(ValueError):
        WeightIndices(1, 2, 2.0, source="guessed")


def test_critical_exponents_validation():
    with pytest.raises(ValueError):
        CriticalExponents(1, 4, "3/2", 4)
    with pytest.raises(ValueError):
        CriticalExponents(1, 3, 1, 4)
    with pytest.raises(ValueError):
        CriticalExponents(1, INF, 1, 2, n=2)
    ce = CriticalExponents.real_coefficients(1, 3)
    assert ce.q_plus.is_inf


def test_predicted_ranges_unit_weight_real_coefficients():
    ce = CriticalExponents.real_coefficients(2, 4)
    rep = predicted_ranges(ce, unit_weight_indices(2), 2)
    assert rep.ranges["riesz"].lo == 1 and rep.ranges["riesz"].hi == 4
    assert rep.ranges["functional_calculus"].hi.is_inf
    assert not rep.violations
    assert 3 in rep.ranges["riesz"] and 4 not in rep.ranges["riesz"]


def test_predicted_ranges_report_incompatibility():
    ce = CriticalExponents(1, 4, 1, 4)
    idx = WeightIndices(3, 2, 4.0)  # r_w (s_w)' = 6 > 4
    rep = predicted_ranges(ce, idx, 2)
    assert rep.ranges["riesz"].empty
    assert "riesz" in rep.violations


@settings(max_examples=200)
@given(st.fractions(min_value=Fraction(11, 10), max_value=Fraction(8), max_denominator=20),
       st.fractions(min_value=Fraction(-19, 10), max_value=Fraction(10), max_denominator=20))
def test_power_weight_riesz_condition_matches_ranges(p, alpha):
    qp = Ext(4)
    ce = CriticalExponents.real_coefficients(2, qp)
    rng = predicted_ranges(ce, power_weight_indices(alpha, 2), 2).ranges["riesz"]
    assert power_weight_riesz_condition(p, alpha, qp, 2) == (p in rng)


def test_exponent_grid_exact_steps():
    vals = list(exponent_grid(1, 2, "1/4"))
    assert vals == [Ext(1), Ext("5/4"), Ext("3/2"), Ext("7/4"), Ext(2)]
    assert ext(vals[2]) is vals[2]

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import EV1, EV2, PRINTED_AGG, W3, direct_ev_feasible, ev_and_window, random_ul
from ulflex.errors import (
    EmptyEnergyWindow,
    InvertedPowerBounds,
    LengthMismatch,
    NegativeEnergy,
    NegativePower,
    NotConcaveU,
    NotConvexL,
    NotIncreasing,
    PropertyIIIViolated,
    WindowMismatch,
)
from ulflex.flexcore import (
    EVParams,
    ULFlex,
    Window,
    check_feasible_ordered,
    constant_witness,
    minkowski_sum,
    normalize,
    ul_from_ev,
    validate_ev_params,
    validate_ul,
)
from ulflex.polytope import canonical_vertices


# ------------------------------------------------------------ EV params


@pytest.mark.parametrize("ev", [EV1, EV2])
def test_worked_example_evs_are_valid(ev):
    assert validate_ev_params(ev, W3) is ev


def test_energy_above_reach_is_rejected():
    with pytest.raises(EmptyEnergyWindow):
        validate_ev_params(EVParams(0, 10, 40, 50), W3)


@pytest.mark.parametrize(
    "ev, err",
    [
        (EVParams(-1, 10, 0, 5), NegativePower),
        (EVParams(5, 4, 0, 5), InvertedPowerBounds),
        (EVParams(0, 10, -1, 5), NegativeEnergy),
        (EVParams(0, 10, 6, 5), EmptyEnergyWindow),
        (EVParams(5, 10, 0, 10), EmptyEnergyWindow),  # 3 intervals at >= 5 kW need 15 kWh
    ],
)
def test_inconsistent_params_rejected(ev, err):
    with pytest.raises(err):
        validate_ev_params(ev, W3)


def test_normalize_clamps_energy_into_reach():
    ev = normalize(EVParams(1, 10, 0, 50), W3)
    assert (ev.e_min, ev.e_max) == (3, 30)


def test_window_invariants():
    with pytest.raises(ValueError):
        Window(0, 1.0)
    with pytest.raises(ValueError):
        Window(2, 0.0)


# ------------------------------------------------------------ ul_from_ev


def test_ev2_parameters():
    ul = ul_from_ev(EV2, W3)
    assert ul.u.tolist() == [10, 20, 30]
    assert ul.l.tolist() == [5, 10, 20]


def test_ev1_upper_parameters():
    assert ul_from_ev(EV1, W3).u.tolist() == [20, 25, 25]


def test_ev1_lower_follows_construction_formula():
    # two intervals can hold as little as 0 kWh because 15 kWh fits in one
    # interval at 20 kW; (15, 0, 0) is a feasible schedule
    ul = ul_from_ev(EV1, W3)
    assert ul.l.tolist() == [0, 0, 15]
    assert direct_ev_feasible([15, 0, 0], EV1, W3)


def test_no_minimum_requirements():
    ul = ul_from_ev(EVParams(0, 1, 0, 2), Window(2, 1.0))
    assert ul.u.tolist() == [1, 2] and ul.l.tolist() == [0, 0]


@settings(max_examples=300, deadline=None)
@given(ev_and_window())
def test_construction_validity_and_anchoring(case):
    ev, w = case
    ul = ul_from_ev(ev, w)
    validate_ul(ul)
    T, dt = w.T, w.dt
    assert ul.u[0] == pytest.approx(min(ev.p_max * dt, ev.e_max - (T - 1) * ev.p_min * dt), abs=1e-9)
    assert ul.l[0] == pytest.approx(max(ev.p_min * dt, ev.e_min - (T - 1) * ev.p_max * dt), abs=1e-9)
    assert ul.u[-1] == pytest.approx(min(ev.e_max, T * ev.p_max * dt), abs=1e-9)
    assert ul.l[-1] == pytest.approx(max(ev.e_min, T * ev.p_min * dt), abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(ev_and_window())
def test_anchoring_when_energy_bounds_do_not_bind_first_interval(case):
    ev, w = case
    ul = ul_from_ev(ev, w)
    T, dt = w.T, w.dt
    if ev.e_max >= ev.p_max * dt + (T - 1) * ev.p_min * dt:
        assert ul.u[0] / dt == pytest.approx(ev.p_max, abs=1e-9)
    if ev.e_min <= ev.p_min * dt + (T - 1) * ev.p_max * dt:
        assert ul.l[0] / dt == pytest.approx(ev.p_min, abs=1e-9)


def _probe_signals(ev, w, rng, n=60):
    """Mix of uniform draws and vertices nudged just past the tolerance."""
    ul = ul_from_ev(ev, w)
    verts = canonical_vertices(ul).canonical
    out = [rng.uniform(-0.1 * ev.p_max, 1.1 * ev.p_max, w.T) for _ in range(n // 2)]
    for _ in range(n - n // 2):
        v = rng.permutation(verts[rng.integers(len(verts))])
        step = rng.choice([-1e-6, 1e-6, 1e-3, -1e-3, 0.0])
        bump = np.zeros(w.T)
        bump[rng.integers(w.T)] = step
        out.append(v + bump)
    return out


@settings(max_examples=150, deadline=None)
@given(ev_and_window(), st.integers(0, 2**32 - 1))
def test_single_ev_equivalence_with_raw_constraints(case, seed):
    ev, w = case
    ul = ul_from_ev(ev, w)
    rng = np.random.default_rng(seed)
    for p in _probe_signals(ev, w, rng):
        ordered = check_feasible_ordered(p, ul).feasible
        # keep probes a clear margin from the decision boundary of both tests
        raw_tight = direct_ev_feasible(p, ev, w, tol=1e-9)
        raw_loose = direct_ev_feasible(p, ev, w, tol=1e-7)
        if raw_tight == raw_loose:
            assert ordered == raw_tight, (p, ev, w)


# ------------------------------------------------------------ validate_ul


def test_validate_accepts_ev_shaped_vectors():
    validate_ul(ULFlex([20, 25, 25], [0, 5, 15], W3))


@pytest.mark.parametrize(
    "u, l, err, k",
    [
        ([10, 30], [0, 0], NotConcaveU, 1),
        ([10, 12], [1, 12], PropertyIIIViolated, 1),
        ([10, 5], [0, 0], NotIncreasing, 2),
        ([10, 15], [5, 6], NotConvexL, 1),
    ],
)
def test_validate_names_first_violation(u, l, err, k):
    with pytest.raises(err) as info:
        validate_ul(ULFlex(u, l, Window(2, 1.0)))
    assert info.value.details["k"] == k


def test_not_increasing_names_vector():
    with pytest.raises(NotIncreasing) as info:
        validate_ul(ULFlex([1, 2], [-1, 0], Window(2, 1.0)))
    assert info.value.details["vector"] == "l"


def test_length_mismatch():
    with pytest.raises(LengthMismatch):
        ULFlex([1, 2], [0], Window(2, 1.0))
    with pytest.raises(LengthMismatch):
        check_feasible_ordered([1, 2], PRINTED_AGG)


def test_single_interval_is_always_structurally_valid():
    validate_ul(ULFlex([4.0], [1.0], Window(1, 1.0)))


# ------------------------------------------------------------ minkowski_sum


def test_sum_of_worked_example_evs():
    agg = minkowski_sum([ul_from_ev(EV1, W3), ul_from_ev(EV2, W3)])
    assert agg.u.tolist() == [30, 45, 55]
    assert agg.l.tolist() == [5, 10, 35]


def test_zero_is_identity(ev1_ul):
    assert minkowski_sum([ev1_ul, ULFlex.zero(W3)]) == ev1_ul


def test_doubling(ev1_ul):
    d = minkowski_sum([ev1_ul, ev1_ul])
    assert d.u.tolist() == [40, 50, 50] and d.l.tolist() == [0, 0, 30]


def test_empty_sum_is_zero():
    assert minkowski_sum([], window=W3) == ULFlex.zero(W3)


def test_window_mismatch(ev1_ul):
    other = ULFlex([1, 2, 3], [0, 0, 0], Window(3, 0.5))
    with pytest.raises(WindowMismatch):
        minkowski_sum([ev1_ul, other])


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(1, 8))
def test_summation_closure_and_order_independence(seed, T, n):
    rng = np.random.default_rng(seed)
    uls = [random_ul(rng, T) for _ in range(n)]
    total = minkowski_sum(uls)
    validate_ul(total)
    for perm in itertools.islice(itertools.permutations(uls), 6):
        assert minkowski_sum(list(perm)) == total
    # pairwise fold in a different association
    left = minkowski_sum([minkowski_sum(uls[: n // 2] or [ULFlex.zero(uls[0].window)]),
                          minkowski_sum(uls[n // 2 :])])
    np.testing.assert_allclose(left.u, total.u, atol=1e-9)
    np.testing.assert_allclose(left.l, total.l, atol=1e-9)


# ------------------------------------------------- ordered feasibility check


def test_feasible_reference_signal(ev1_ul):
    assert check_feasible_ordered([10, 5, 10], ev1_ul).feasible


def test_peak_above_rate_limit(ev1_ul):
    rep = check_feasible_ordered([2, 22, 11], ev1_ul)
    assert not rep.feasible
    assert ("upper", 1) in [(v.kind, v.k) for v in rep.violations]
    v = next(v for v in rep.violations if v.kind == "upper" and v.k == 1)
    assert v.slack == pytest.approx(-2.0)


def test_aggregate_low_first_interval(printed_agg):
    rep = check_feasible_ordered([5, 30, 0], printed_agg)
    assert not rep.feasible
    assert ("lower", 1) in [(v.kind, v.k) for v in rep.violations]


def test_aggregate_two_interval_overdraw(printed_agg):
    rep = check_feasible_ordered([25, 30, 0], printed_agg)
    assert not rep.feasible
    assert ("upper", 2) in [(v.kind, v.k) for v in rep.violations]
    assert all(v.slack < 0 for v in rep.violations)


def test_ordered_check_counts_2T_bounds(printed_agg):
    assert check_feasible_ordered([10, 10, 10], printed_agg).n_checked == 6


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_negative_entries_always_fail(seed, T):
    rng = np.random.default_rng(seed)
    ul = random_ul(rng, T)
    p = rng.uniform(0, 10, T)
    p[rng.integers(T)] = -rng.uniform(1e-6, 5)
    assert not check_feasible_ordered(p, ul).feasible


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_permutation_invariance(seed, T):
    rng = np.random.default_rng(seed)
    ul = random_ul(rng, T)
    p = rng.uniform(0, 12, T)
    base = check_feasible_ordered(p, ul)
    for _ in range(5):
        q = rng.permutation(p)
        assert check_feasible_ordered(q, ul).feasible == base.feasible


# ------------------------------------------------------------ witness


def test_constant_witness_values(ev1_ul, printed_agg):
    np.testing.assert_allclose(constant_witness(printed_agg), [55 / 3] * 3)
    assert constant_witness(ULFlex.zero(W3)).tolist() == [0, 0, 0]
    assert constant_witness(ul_from_ev(EV2, W3)).tolist() == [10, 10, 10]


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_witness_feasible_and_l_below_u(seed, T):
    rng = np.random.default_rng(seed)
    ul = random_ul(rng, T, dt=float(rng.choice([0.25, 1.0, 2.0])))
    assert check_feasible_ordered(constant_witness(ul), ul).feasible
    assert np.all(ul.l <= ul.u + 1e-9)


def test_json_round_trip(ev1_ul):
    assert ULFlex.from_dict(ev1_ul.to_dict()) == ev1_ul
    assert EVParams.from_dict(EV1.to_dict()) == EV1
    assert ev1_ul.n_params == 6
    assert not math.isnan(ev1_ul.u.sum())

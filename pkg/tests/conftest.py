"""Shared fixtures and random generators for the test suite."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import strategies as st

from ulflex.disagg import Fleet
from ulflex.flexcore import EVParams, ULFlex, Window, ul_from_ev

W3 = Window(3, 1.0)
EV1 = EVParams(0.0, 20.0, 15.0, 25.0)
EV2 = EVParams(5.0, 10.0, 20.0, 30.0)
# aggregate vectors exactly as printed in the worked example
PRINTED_AGG = ULFlex([30.0, 45.0, 55.0], [5.0, 15.0, 35.0], W3)


@pytest.fixture
def w3():
    return W3


@pytest.fixture
def paper_fleet():
    return Fleet((EV1, EV2), W3)


@pytest.fixture
def ev1_ul():
    return ul_from_ev(EV1, W3)


@pytest.fixture
def printed_agg():
    return PRINTED_AGG


def random_ev(rng: np.random.Generator, w: Window, p_min_prob: float = 0.5) -> EVParams:
    """A random EV with a non-empty feasible set on ``w``."""
    p_max = float(rng.uniform(1.0, 22.0))
    p_min = float(rng.uniform(0.0, 0.6) * p_max) if rng.random() < p_min_prob else 0.0
    lo, hi = w.T * p_min * w.dt, w.T * p_max * w.dt
    e_min, e_max = np.sort(rng.uniform(0.0, 1.2 * hi, size=2)).tolist()
    e_max = max(e_max, lo)
    if e_min > hi:
        e_min = float(rng.uniform(0.0, hi))
    return EVParams(p_min, p_max, e_min, e_max)


def random_fleet(rng: np.random.Generator, n: int, w: Window) -> Fleet:
    return Fleet(tuple(random_ev(rng, w) for _ in range(n)), w)


def random_ul(rng: np.random.Generator, T: int, dt: float = 1.0) -> ULFlex:
    """A random valid UL set, not necessarily EV-shaped.

    ``u`` gets non-increasing increments, ``l`` non-decreasing ones, and the
    draw is retried until the cross property holds.
    """
    w = Window(T, dt)
    while True:
        du = np.sort(rng.uniform(0, 10, T))[::-1]
        dl = np.sort(rng.uniform(0, 10, T))
        if rng.random() < 0.3:
            du = np.round(du)
            dl = np.round(dl)
        u, l = np.cumsum(du), np.cumsum(dl)
        zu, zl = np.concatenate(([0], u)), np.concatenate(([0], l))
        if np.all(np.diff(zu + zl[::-1]) >= 0):
            return ULFlex(u, l, w)


@st.composite
def ev_and_window(draw, max_T: int = 6):
    T = draw(st.integers(1, max_T))
    dt = draw(st.sampled_from([0.25, 0.5, 1.0, 1.5]))
    p_max = draw(st.floats(0.5, 50.0))
    p_min = draw(st.one_of(st.just(0.0), st.floats(0.0, 1.0).map(lambda f: f * p_max)))
    lo, hi = T * p_min * dt, T * p_max * dt
    e_min = draw(st.floats(0.0, 1.0)) * hi
    e_min = max(e_min, 0.0)
    e_max = draw(st.floats(0.0, 1.5)) * hi
    e_max = max(e_max, e_min, lo)
    if max(e_min, lo) > min(e_max, hi):
        e_min = lo
    return EVParams(p_min, p_max, e_min, e_max), Window(T, dt)


def direct_ev_feasible(p, ev: EVParams, w: Window, tol: float = 1e-9) -> bool:
    """Raw EV constraints: per-interval power box and window energy range."""
    p = np.asarray(p, dtype=float)
    e = float(np.sum(p) * w.dt)
    return bool(
        np.all(p >= ev.p_min - tol)
        and np.all(p <= ev.p_max + tol)
        and e >= ev.e_min - tol
        and e <= ev.e_max + tol
    )


def _segments(hours: float, n: int) -> list[float]:
    return [hours / n] * n if hours > 0 else []


def full_horizon_lp(tx, spec, window_signal=None, sense: int = 0, max_intervals: int = 12):
    """Per-session LP over the whole connection, built from raw session data.

    The window is split into ``spec.T`` intervals with power in
    ``[p_min, p_max]``; the time outside it into at most
    ``max_intervals - T`` intervals with power in ``[0, p_max]``. Total energy
    must equal ``e_required``. With ``window_signal`` the window powers are
    fixed and the LP checks that a plan exists; otherwise it optimizes the
    window energy (``sense=+1`` max, ``-1`` min).

    Returns the solution object from the LP layer.
    """
    from ulflex.lpcore import EQ, LPProblem, solve

    def hours(a, b):
        return (b - a).total_seconds() / 3600.0

    before, after = hours(tx.arrival, spec.start), hours(spec.end, tx.departure)
    spare = max(max_intervals - spec.T, 2)
    nb = max(1, spare // 2) if before > 0 else 0
    na = max(1, spare - nb) if after > 0 else 0
    durations = _segments(before, nb) + [spec.dt] * spec.T + _segments(after, na)
    d = np.array(durations)
    inside = np.zeros(d.size, dtype=bool)
    inside[nb : nb + spec.T] = True
    lb = np.where(inside, tx.p_min, 0.0)
    ub = np.full(d.size, tx.p_max)
    if window_signal is not None:
        lb[inside] = ub[inside] = np.asarray(window_signal, dtype=float)
    c = np.where(inside, d, 0.0) * sense
    prob = LPProblem(c=c, A=d[None, :], senses=EQ, rhs=[tx.e_required], lb=lb, ub=ub)
    return solve(prob, solver="simplex")

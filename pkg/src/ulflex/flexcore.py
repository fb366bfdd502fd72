"""UL-flexibility algebra for fleets of charging EVs.

A UL-flexibility set is parameterized by two length-T vectors: ``u[k-1]``
caps the energy consumed in any k intervals of the window and ``l[k-1]``
floors it. A single EV's box/energy constraints map onto such a pair, and
the Minkowski sum of UL sets is obtained by adding the parameter vectors.

All objects are immutable; every operation is a pure function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import (
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

#: Absolute tolerance on energies (kWh) and powers (kW).
DEFAULT_TOL = 1e-9


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Window:
    """A flexibility window of ``T`` intervals, each ``dt`` hours long."""

    T: int
    dt: float = 1.0

    def __post_init__(self):
        if int(self.T) != self.T or self.T < 1:
            raise ValueError(f"T must be a positive integer, got {self.T!r}")
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        object.__setattr__(self, "T", int(self.T))
        object.__setattr__(self, "dt", float(self.dt))

    @property
    def duration(self) -> float:
        return self.T * self.dt


@dataclass(frozen=True)
class EVParams:
    """Charging limits of one EV over a window.

    Attributes:
        p_min: Minimum charging power (kW).
        p_max: Maximum charging power (kW).
        e_min: Minimum energy to deliver within the window (kWh).
        e_max: Maximum energy accepted within the window (kWh).
    """

    p_min: float
    p_max: float
    e_min: float
    e_max: float

    def to_dict(self) -> dict:
        return {
            "p_min_kw": self.p_min,
            "p_max_kw": self.p_max,
            "e_min_kwh": self.e_min,
            "e_max_kwh": self.e_max,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EVParams":
        return cls(
            p_min=float(d["p_min_kw"]),
            p_max=float(d["p_max_kw"]),
            e_min=float(d["e_min_kwh"]),
            e_max=float(d["e_max_kwh"]),
        )


@dataclass(frozen=True, eq=False)
class ULFlex:
    """Cumulative-energy bounds ``u`` (upper) and ``l`` (lower), in kWh."""

    u: np.ndarray
    l: np.ndarray
    window: Window

    def __post_init__(self):
        u, l = _frozen(self.u), _frozen(self.l)
        if u.ndim != 1 or l.shape != u.shape:
            raise LengthMismatch(
                f"u and l must be 1-D of equal length, got {u.shape} and {l.shape}"
            )
        if len(u) != self.window.T:
            raise LengthMismatch(
                f"vectors have length {len(u)} but window has T={self.window.T}"
            )
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "l", l)

    @property
    def T(self) -> int:
        return self.window.T

    @property
    def dt(self) -> float:
        return self.window.dt

    @property
    def n_params(self) -> int:
        """Size of the representation: 2T numbers, whatever the fleet size."""
        return self.u.size + self.l.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, ULFlex):
            return NotImplemented
        return (
            self.window == other.window
            and np.array_equal(self.u, other.u)
            and np.array_equal(self.l, other.l)
        )

    def __repr__(self) -> str:
        return f"ULFlex(u={self.u.tolist()}, l={self.l.tolist()}, window={self.window})"

    def to_dict(self) -> dict:
        return {
            "T": self.T,
            "dt_hours": self.dt,
            "u_kwh": self.u.tolist(),
            "l_kwh": self.l.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ULFlex":
        return cls(
            u=d["u_kwh"], l=d["l_kwh"], window=Window(int(d["T"]), float(d["dt_hours"]))
        )

    @classmethod
    def zero(cls, window: Window) -> "ULFlex":
        return cls(np.zeros(window.T), np.zeros(window.T), window)


class Violation(NamedTuple):
    """One broken ordered bound; ``k`` is 1-based, ``slack`` is negative."""

    kind: str
    k: int
    slack: float


@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    violations: list = field(default_factory=list)
    n_checked: int = 0

    def to_dict(self) -> dict:
        return {
            "feasible": self.feasible,
            "violations": [v._asdict() for v in self.violations],
        }


def as_signal(p: Iterable[float], T: int) -> np.ndarray:
    """Coerce ``p`` to a finite float vector of length ``T``."""
    arr = np.asarray(p, dtype=float)
    if arr.ndim != 1 or arr.size != T:
        raise LengthMismatch(f"signal has shape {arr.shape}, expected ({T},)", T=T)
    if not np.all(np.isfinite(arr)):
        raise ValueError("signal entries must be finite")
    return arr


def validate_ev_params(ev: EVParams, w: Window) -> EVParams:
    """Return ``ev`` unchanged if it describes a non-empty feasible set on ``w``."""
    vals = (ev.p_min, ev.p_max, ev.e_min, ev.e_max)
    if not all(math.isfinite(v) for v in vals):
        raise ValueError(f"EV parameters must be finite: {ev}")
    if ev.p_min < 0:
        raise NegativePower(f"p_min={ev.p_min} is negative", p_min_kw=ev.p_min)
    if ev.p_min > ev.p_max:
        raise InvertedPowerBounds(
            f"p_min={ev.p_min} exceeds p_max={ev.p_max}",
            p_min_kw=ev.p_min,
            p_max_kw=ev.p_max,
        )
    if ev.e_min < 0:
        raise NegativeEnergy(f"e_min={ev.e_min} is negative", e_min_kwh=ev.e_min)
    lo = max(ev.e_min, w.T * ev.p_min * w.dt)
    hi = min(ev.e_max, w.T * ev.p_max * w.dt)
    if lo > hi:
        raise EmptyEnergyWindow(
            f"attainable window energy is empty: {lo} > {hi}",
            lower_kwh=lo,
            upper_kwh=hi,
        )
    return ev


def normalize(ev: EVParams, w: Window) -> EVParams:
    """Clamp the energy bounds into the range reachable with the power limits.

    ``e_max`` is lowered to ``T*p_max*dt`` and ``e_min`` raised to
    ``T*p_min*dt``. The clamped parameters are validated; a set that is still
    empty raises instead of being silently repaired.
    """
    e_max = min(ev.e_max, w.T * ev.p_max * w.dt)
    e_min = max(ev.e_min, w.T * ev.p_min * w.dt)
    return validate_ev_params(EVParams(ev.p_min, ev.p_max, e_min, e_max), w)


def ul_arrays(p_min, p_max, e_min, e_max, w: Window) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized UL parameterization.

    Inputs are scalars or 1-D arrays of length N; the result is a pair of
    arrays of shape ``(N, T)`` (or ``(T,)`` for scalar input).
    """
    p_min, p_max = np.asarray(p_min, float), np.asarray(p_max, float)
    e_min, e_max = np.asarray(e_min, float), np.asarray(e_max, float)
    k = np.arange(1, w.T + 1, dtype=float)
    rest = (w.T - k) * w.dt
    col = (lambda a: a[..., None]) if p_min.ndim else (lambda a: a)
    u = np.minimum(k * w.dt * col(p_max), col(e_max) - rest * col(p_min))
    l = np.maximum(k * w.dt * col(p_min), col(e_min) - rest * col(p_max))
    return u, l


def ul_from_ev(ev: EVParams, w: Window) -> ULFlex:
    """UL parameters of a single EV.

    ``u_k = min(k*p_max*dt, e_max - (T-k)*p_min*dt)`` and
    ``l_k = max(k*p_min*dt, e_min - (T-k)*p_max*dt)``.
    """
    validate_ev_params(ev, w)
    u, l = ul_arrays(ev.p_min, ev.p_max, ev.e_min, ev.e_max, w)
    return ULFlex(u, l, w)


def _zero_ext(v: np.ndarray) -> np.ndarray:
    return np.concatenate(([0.0], v))


def validate_ul(ul: ULFlex, tol: float = DEFAULT_TOL) -> ULFlex:
    """Check the three structural properties of a UL pair.

    Monotonicity is weak (plateaus allowed). Concavity of the zero-extended
    ``u`` means non-increasing first differences; convexity of ``l`` means
    non-decreasing ones. Errors report 1-based indices into ``u``/``l``.
    """
    zu, zl = _zero_ext(ul.u), _zero_ext(ul.l)
    if not (np.all(np.isfinite(zu)) and np.all(np.isfinite(zl))):
        raise ValueError("UL vectors must be finite")

    for name, z in (("u", zu), ("l", zl)):
        bad = np.flatnonzero(np.diff(z) < -tol)
        if bad.size:
            k = int(bad[0]) + 1
            raise NotIncreasing(
                f"zero-extended {name} decreases at k={k}", vector=name, k=k
            )

    second_u = np.diff(zu, 2)
    bad = np.flatnonzero(second_u > tol)
    if bad.size:
        k = int(bad[0]) + 1
        raise NotConcaveU(
            f"zero-extended u has second difference {second_u[bad[0]]:+g} at k={k}",
            k=k,
        )
    second_l = np.diff(zl, 2)
    bad = np.flatnonzero(second_l < -tol)
    if bad.size:
        k = int(bad[0]) + 1
        raise NotConvexL(
            f"zero-extended l has second difference {second_l[bad[0]]:+g} at k={k}",
            k=k,
        )

    # (iii): w_j = u_j + l_{T-j} for j = 0..T must be non-decreasing
    w = zu + zl[::-1]
    bad = np.flatnonzero(np.diff(w) < -tol)
    if bad.size:
        k = int(bad[0]) + 1
        raise PropertyIIIViolated(
            f"u + reversed(l) decreases at k={k}: {w[k - 1]:g} -> {w[k]:g}", k=k
        )
    return ul


def minkowski_sum(
    uls: Sequence[ULFlex], window: Window | None = None, tol: float = DEFAULT_TOL
) -> ULFlex:
    """Aggregate UL sets by adding their parameters.

    Components are summed with :func:`math.fsum`, so the result is the
    correctly rounded sum and does not depend on the input order. An empty
    list yields the zero set on ``window``.
    """
    uls = list(uls)
    if not uls:
        if window is None:
            raise ValueError("empty minkowski_sum needs an explicit window")
        return ULFlex.zero(window)
    w = uls[0].window
    if window is not None and window != w:
        raise WindowMismatch(f"requested window {window} but inputs use {w}")
    for ul in uls[1:]:
        if ul.window != w:
            raise WindowMismatch(f"cannot add UL sets on {w} and {ul.window}")
    us = np.stack([ul.u for ul in uls])
    ls = np.stack([ul.l for ul in uls])
    u = [math.fsum(col) for col in us.T]
    l = [math.fsum(col) for col in ls.T]
    # per-input rounding slack accumulates linearly in the worst case
    return validate_ul(ULFlex(u, l, w), tol=tol * len(uls))


def check_feasible_ordered(
    p: Iterable[float], ul: ULFlex, tol: float = DEFAULT_TOL
) -> FeasibilityReport:
    """Membership test using the 2T ordered bounds.

    The largest energy in any k intervals is the k-th partial sum of the
    descending-sorted signal; the smallest is the k-th partial sum of the
    ascending one. ``ul`` is assumed valid and is not re-checked.
    """
    p = as_signal(p, ul.T)
    asc = np.sort(p)
    most = np.cumsum(asc[::-1]) * ul.dt
    least = np.cumsum(asc) * ul.dt
    up_slack = ul.u - most
    lo_slack = least - ul.l
    violations = [
        Violation("upper", int(i) + 1, float(up_slack[i]))
        for i in np.flatnonzero(up_slack < -tol)
    ]
    violations += [
        Violation("lower", int(i) + 1, float(lo_slack[i]))
        for i in np.flatnonzero(lo_slack < -tol)
    ]
    return FeasibilityReport(not violations, violations, n_checked=2 * ul.T)


def constant_witness(ul: ULFlex) -> np.ndarray:
    """The constant signal delivering ``u_T`` over the window; always feasible."""
    return np.full(ul.T, ul.u[-1] / (ul.T * ul.dt))

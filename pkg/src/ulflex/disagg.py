"""Fleets, disaggregation of aggregate signals, and the exactness oracle.

Disaggregation solves one joint feasibility LP over every EV's schedule.
That LP is built from the raw EV constraints only, which makes it an
independent check on the UL aggregate: a signal passes the ordered UL test
exactly when the LP can split it.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import Infeasible, NumericalFailure
from .flexcore import (
    DEFAULT_TOL,
    EVParams,
    ULFlex,
    Violation,
    Window,
    as_signal,
    check_feasible_ordered,
    ul_arrays,
    validate_ev_params,
)
from .lpcore import EQ, GE, LE, TOL_FEAS, LPProblem, solve
from .polytope import canonical_vertices


@dataclass(frozen=True, eq=False)
class Fleet:
    """Validated EVs sharing one window, with cached UL parameters."""

    evs: tuple
    window: Window

    def __post_init__(self):
        evs = tuple(self.evs)
        for ev in evs:
            validate_ev_params(ev, self.window)
        object.__setattr__(self, "evs", evs)

    def __len__(self) -> int:
        return len(self.evs)

    @cached_property
    def arrays(self) -> dict:
        """Parameters as length-N arrays keyed by field name."""
        data = np.array(
            [(ev.p_min, ev.p_max, ev.e_min, ev.e_max) for ev in self.evs], dtype=float
        ).reshape(-1, 4)
        return {name: data[:, i].copy() for i, name in enumerate(("p_min", "p_max", "e_min", "e_max"))}

    def compute_ul_matrices(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-EV ``u`` and ``l`` as ``(N, T)`` arrays (uncached)."""
        a = self.arrays
        return ul_arrays(a["p_min"], a["p_max"], a["e_min"], a["e_max"], self.window)

    @cached_property
    def ul_matrices(self) -> tuple[np.ndarray, np.ndarray]:
        return self.compute_ul_matrices()

    @property
    def uls(self) -> list[ULFlex]:
        u, l = self.ul_matrices
        return [ULFlex(ui, li, self.window) for ui, li in zip(u, l)]

    @cached_property
    def aggregate(self) -> ULFlex:
        u, l = self.ul_matrices
        return ULFlex(u.sum(axis=0), l.sum(axis=0), self.window)

    def to_dict(self) -> dict:
        return {
            "T": self.window.T,
            "dt_hours": self.window.dt,
            "evs": [ev.to_dict() for ev in self.evs],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Fleet":
        return cls(
            tuple(EVParams.from_dict(e) for e in d["evs"]),
            Window(int(d["T"]), float(d["dt_hours"])),
        )


def disaggregation_lp(P: np.ndarray, fleet: Fleet) -> LPProblem:
    """Joint feasibility LP: per-EV power boxes and window-energy bounds,
    plus one equality per interval tying the schedules to ``P``.

    Variable ``n * T + t`` is the power of EV ``n`` in interval ``t``.
    """
    N, T, dt = len(fleet), fleet.window.T, fleet.window.dt
    a = fleet.arrays
    A = np.zeros((2 * N + T, N * T))
    for n in range(N):
        A[2 * n, n * T : (n + 1) * T] = dt
        A[2 * n + 1, n * T : (n + 1) * T] = dt
    for t in range(T):
        A[2 * N + t, t::T] = 1.0
    senses = np.array([GE, LE] * N + [EQ] * T, dtype=object)
    rhs = np.concatenate([np.column_stack([a["e_min"], a["e_max"]]).ravel(), P])
    return LPProblem(
        c=np.zeros(N * T),
        A=A,
        senses=senses,
        rhs=rhs,
        lb=np.repeat(a["p_min"], T),
        ub=np.repeat(a["p_max"], T),
    )


def disaggregate(
    P, fleet: Fleet, solver: str = "auto", tol: float = DEFAULT_TOL
) -> list[np.ndarray]:
    """Split an aggregate signal into per-EV schedules.

    Returns one schedule per EV, each within its own power and energy
    limits, summing to ``P``. Any feasible split may be returned.

    Raises:
        Infeasible: no split exists. ``violations`` carries the ordered UL
            bounds of the fleet aggregate that ``P`` breaks.
    """
    T = fleet.window.T
    P = as_signal(P, T)
    if len(fleet) == 0:
        if np.all(np.abs(P) <= tol):
            return []
        raise Infeasible("an empty fleet only admits the zero signal")
    sol = solve(disaggregation_lp(P, fleet), solver=solver)
    if not sol.optimal:
        report = check_feasible_ordered(P, fleet.aggregate, tol=tol)
        raise Infeasible(
            "signal lies outside the aggregate flexibility set",
            violations=report.violations,
        )
    a = fleet.arrays
    sched = sol.x.reshape(len(fleet), T)
    sched = np.clip(sched, a["p_min"][:, None], a["p_max"][:, None])
    gap = float(np.max(np.abs(sched.sum(axis=0) - P), initial=0.0))
    if gap > TOL_FEAS * max(1.0, float(np.max(np.abs(P)))):
        raise NumericalFailure(f"disaggregation residual {gap:.3g} too large")
    return list(sched)


def violation_subset(P, violation: Violation) -> int:
    """Bitmask of the H-representation row that an ordered violation breaks.

    An upper violation at ``k`` is the set of the ``k`` largest entries; a
    lower one the ``k`` smallest.
    """
    order = np.argsort(np.asarray(P, dtype=float), kind="stable")
    idx = order[::-1][: violation.k] if violation.kind == "upper" else order[: violation.k]
    return int(sum(1 << int(i) for i in idx))


# ----------------------------------------------------------------- oracle


@dataclass
class OracleReport:
    trials: int = 0
    agreements: int = 0
    counterexamples: list = field(default_factory=list)
    fleet: dict | None = None

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "agreements": self.agreements,
            "counterexamples": [
                {"signal_kw": list(map(float, s)), "ul_feasible": a, "lp_feasible": b}
                for s, a, b in self.counterexamples
            ],
            "fleet": self.fleet,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def merge(self, other: "OracleReport") -> "OracleReport":
        return OracleReport(
            self.trials + other.trials,
            self.agreements + other.agreements,
            self.counterexamples + other.counterexamples,
            self.fleet,
        )


def _random_vertex(vertices: Sequence[np.ndarray], rng: np.random.Generator) -> np.ndarray:
    v = vertices[rng.integers(len(vertices))]
    return rng.permutation(v)


def probe_signal(ul: ULFlex, rng: np.random.Generator) -> np.ndarray:
    """Draw one probe: half meant to be interior, half meant to be exterior.

    Interior probes are random convex combinations of vertices. Exterior
    probes are vertices scaled up slightly, or boundary points (vertices or
    edge points) pushed off by a random perturbation.
    """
    verts = canonical_vertices(ul).canonical
    scale = max(1.0, float(np.max(np.abs(verts))))
    if rng.random() < 0.5:
        pts = np.array([_random_vertex(verts, rng) for _ in range(ul.T + 1)])
        return rng.dirichlet(np.ones(len(pts))) @ pts
    v = _random_vertex(verts, rng)
    if rng.random() < 0.5 and np.any(v != 0):
        return v * (1.0 + rng.uniform(1e-3, 0.2))
    w = _random_vertex(verts, rng)
    edge = v + rng.random() * (w - v)
    return edge + rng.normal(scale=rng.choice([1e-3, 1e-2, 1e-1]) * scale, size=ul.T)


def _oracle_chunk(fleet_dict: dict, n_trials: int, seed, solver: str) -> OracleReport:
    fleet = Fleet.from_dict(fleet_dict)
    agg = fleet.aggregate
    rng = np.random.default_rng(seed)
    report = OracleReport()
    for _ in range(n_trials):
        P = probe_signal(agg, rng)
        ul_ok = check_feasible_ordered(P, agg).feasible
        try:
            disaggregate(P, fleet, solver=solver)
            lp_ok = True
        except Infeasible:
            lp_ok = False
        report.trials += 1
        if ul_ok == lp_ok:
            report.agreements += 1
        else:
            report.counterexamples.append((P, ul_ok, lp_ok))
    return report


def exactness_oracle(
    fleet: Fleet,
    n_trials: int,
    rng_seed=None,
    solver: str = "auto",
    workers: int = 1,
) -> OracleReport:
    """Compare the UL aggregate against direct disaggregation on probes.

    Each probe is checked twice: by the ordered test against the summed UL
    parameters, and by the joint LP over the individual EVs. Disagreements
    are recorded as counterexamples, not raised.
    """
    if len(fleet) == 0:
        raise ValueError("exactness_oracle needs a non-empty fleet")
    fd = fleet.to_dict()
    if workers <= 1:
        report = _oracle_chunk(fd, n_trials, rng_seed, solver)
    else:
        seeds = np.random.SeedSequence(rng_seed).spawn(workers)
        sizes = [n_trials // workers + (i < n_trials % workers) for i in range(workers)]
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_oracle_chunk, [fd] * workers, sizes, seeds, [solver] * workers))
        report = OracleReport()
        for part in parts:
            report = report.merge(part)
    report.fleet = fd
    return report

"""Maximum-capacity experiment: direct aggregation versus UL aggregation.

Both formulations maximize the power floor ``tau`` that the fleet can hold
in every interval of the window.

* Direct: one variable per EV and interval plus ``tau`` (``N*T + 1``
  variables); per-EV power boxes and window-energy bounds as explicit rows
  (``2N(T+1)``) and ``T`` rows ``tau <= sum_n p[n, t]``.
* UL: the aggregate signal plus ``tau`` (``T + 1`` variables); the
  ``2(2^T - 1)`` H-representation rows of the summed UL parameters and
  ``T`` rows ``tau <= p[t]``.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import resource
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timedelta, timezone

import numpy as np
import scipy.sparse as sp

from .disagg import Fleet
from .errors import DimensionCapExceeded, Infeasible, NumericalFailure
from .flexcore import ULFlex
from .ingest import WindowSpec, project_all, synth_fleet
from .lpcore import GE, LE, TOL_OPT, LPProblem, solve
from .polytope import DEFAULT_CAP_T, build_hrep

log = logging.getLogger(__name__)


def build_direct_lp(fleet: Fleet, prefix_bounds: bool = False) -> LPProblem:
    """Direct formulation as a sparse LP.

    Variable ``n*T + t`` is EV ``n``'s power in interval ``t``; the last
    variable is ``tau``. With ``prefix_bounds`` the energy cap applies to
    every cumulative prefix instead of the window total only (the lower
    energy bound always applies to the total).
    """
    N, T, dt = len(fleet), fleet.window.T, fleet.window.dt
    a = fleet.arrays
    nv = N * T + 1
    idx = np.arange(N * T)
    ev_of = idx // T
    t_of = idx % T

    blocks, senses, rhs = [], [], []

    def add(rows, cols, vals, n_rows, sense, b):
        blocks.append(sp.csr_matrix((vals, (rows, cols)), shape=(n_rows, nv)))
        senses.append(np.full(n_rows, sense, dtype=object))
        rhs.append(np.asarray(b, dtype=float))

    # power boxes
    add(idx, idx, np.ones(N * T), N * T, LE, np.repeat(a["p_max"], T))
    add(idx, idx, np.ones(N * T), N * T, GE, np.repeat(a["p_min"], T))
    # window energy
    add(ev_of, idx, np.full(N * T, dt), N, GE, a["e_min"])
    if prefix_bounds:
        # row n*T + s covers intervals 0..s of EV n
        r, c = [], []
        for s in range(T):
            for t in range(s + 1):
                r.append(np.arange(N) * T + s)
                c.append(np.arange(N) * T + t)
        r, c = np.concatenate(r), np.concatenate(c)
        add(r, c, np.full(r.size, dt), N * T, LE, np.repeat(a["e_max"], T))
    else:
        add(ev_of, idx, np.full(N * T, dt), N, LE, a["e_max"])
    # tau - sum_n p[n, t] <= 0
    rows = np.concatenate([t_of, np.arange(T)])
    cols = np.concatenate([idx, np.full(T, nv - 1)])
    vals = np.concatenate([-np.ones(N * T), np.ones(T)])
    add(rows, cols, vals, T, LE, np.zeros(T))

    c = np.zeros(nv)
    c[-1] = 1.0
    return LPProblem(
        c=c,
        A=sp.vstack(blocks, format="csr"),
        senses=np.concatenate(senses),
        rhs=np.concatenate(rhs),
        lb=np.full(nv, -np.inf),
        ub=np.full(nv, np.inf),
    )


def build_ul_lp(ul: ULFlex, cap_T: int = DEFAULT_CAP_T) -> LPProblem:
    """UL formulation; its size depends on ``T`` only."""
    h = build_hrep(ul, cap_T=cap_T)
    T = ul.T
    A = np.zeros((h.n_rows + T, T + 1))
    A[: h.n_rows, :T] = h.A * ul.dt
    A[h.n_rows :, :T] = -np.eye(T)
    A[h.n_rows :, T] = 1.0
    c = np.zeros(T + 1)
    c[-1] = 1.0
    return LPProblem(
        c=c,
        A=A,
        senses=LE,
        rhs=np.concatenate([h.b, np.zeros(T)]),
        lb=np.full(T + 1, -np.inf),
        ub=np.full(T + 1, np.inf),
    )


def _checked(sol, what: str):
    if sol.status == "infeasible":
        # validated fleets always admit the constant witness
        raise Infeasible(f"{what} max-capacity LP reported infeasible")
    if sol.status != "optimal":
        raise NumericalFailure(f"{what} max-capacity LP ended {sol.status}")
    return sol


def max_capacity_direct(
    fleet: Fleet, solver: str = "auto", prefix_bounds: bool = False
) -> tuple[float, np.ndarray]:
    """Largest power floor and the per-EV schedules (shape ``(N, T)``) reaching it."""
    if len(fleet) == 0:
        return 0.0, np.zeros((0, fleet.window.T))
    sol = _checked(solve(build_direct_lp(fleet, prefix_bounds), solver), "direct")
    return float(sol.x[-1]), sol.x[:-1].reshape(len(fleet), fleet.window.T)


def max_capacity_ul(fleet: Fleet, solver: str = "auto", cap_T: int = DEFAULT_CAP_T) -> float:
    sol = _checked(solve(build_ul_lp(fleet.aggregate, cap_T), solver), "UL")
    return float(sol.x[-1])


# ----------------------------------------------------------------- harness


@dataclass
class BenchConfig:
    N: list = field(default_factory=lambda: [100, 1_000, 10_000, 100_000])
    T: list = field(default_factory=lambda: [1, 2, 4])
    window_hours: float = 1.0
    method: str = "both"  # direct | ul | both
    seed: int = 1
    solver: str = "highs"
    repetitions: int = 1
    warmup: bool = True
    cap_T: int = DEFAULT_CAP_T
    measure_rss: bool = False
    parallel: int = 1

    def __post_init__(self):
        if self.method not in ("direct", "ul", "both"):
            raise ValueError(f"method must be direct, ul or both, not {self.method!r}")
        if not self.N or not self.T or min(self.N) < 1 or min(self.T) < 1:
            raise ValueError("N and T lists must be non-empty and positive")
        if self.repetitions < 1 or self.window_hours <= 0:
            raise ValueError("repetitions and window_hours must be positive")
        if self.method in ("ul", "both") and max(self.T) > self.cap_T:
            raise DimensionCapExceeded(
                f"T={max(self.T)} exceeds the UL cap {self.cap_T}", cap_T=self.cap_T
            )

    @property
    def methods(self) -> list[str]:
        return ["direct", "ul"] if self.method == "both" else [self.method]


@dataclass
class BenchRecord:
    method: str
    N: int
    T: int
    repetition: int
    build_time_s: float = float("nan")
    solve_time_s: float = float("nan")
    aggregate_time_s: float = float("nan")
    peak_model_vars: int = 0
    peak_model_constraints: int = 0
    objective_tau_kw: float = float("nan")
    peak_rss_bytes: int | None = None
    error: str | None = None


def _peak_rss() -> int:
    rss = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    return rss if sys.platform == "darwin" else rss * 1024


def _bench_window(cfg: BenchConfig, T: int) -> WindowSpec:
    start = datetime(2024, 1, 15, 18, 0, tzinfo=timezone.utc)
    return WindowSpec(start, start + timedelta(hours=cfg.window_hours), T)


def run_cell(fleet: Fleet, method: str, cfg: BenchConfig, repetition: int) -> BenchRecord:
    """Time one (method, fleet) pair: build phase, then solve phase."""
    rec = BenchRecord(method, len(fleet), fleet.window.T, repetition)
    try:
        if method == "direct":
            t0 = time.perf_counter()
            lp = build_direct_lp(fleet)
            t1 = time.perf_counter()
        else:
            t0 = time.perf_counter()
            u, l = fleet.compute_ul_matrices()
            ul = ULFlex(u.sum(axis=0), l.sum(axis=0), fleet.window)
            ta = time.perf_counter()
            lp = build_ul_lp(ul, cfg.cap_T)
            t1 = time.perf_counter()
            rec.aggregate_time_s = ta - t0
        sol = _checked(solve(lp, cfg.solver), method)
        t2 = time.perf_counter()
        rec.build_time_s = t1 - t0
        rec.solve_time_s = t2 - t1
        rec.peak_model_vars = lp.n_vars
        rec.peak_model_constraints = lp.n_rows
        rec.objective_tau_kw = float(sol.x[-1])
        if cfg.measure_rss:
            rec.peak_rss_bytes = _peak_rss()
    except Exception as exc:  # per-cell failures are data
        log.warning("cell %s N=%d T=%d failed: %s", method, rec.N, rec.T, exc)
        rec.error = f"{type(exc).__name__}: {exc}"
    return rec


def make_fleets(cfg: BenchConfig) -> dict:
    """Synthetic fleet per (N, T); sessions are shared across T for each N."""
    fleets = {}
    for N in cfg.N:
        txs = synth_fleet(N, _bench_window(cfg, 1), seed=cfg.seed)
        for T in cfg.T:
            w = _bench_window(cfg, T)
            evs, _ = project_all(txs, w)
            fleets[N, T] = Fleet(tuple(evs), w.window)
    return fleets


def _cell_job(args):
    fleet_dict, method, cfg, rep = args
    return run_cell(Fleet.from_dict(fleet_dict), method, cfg, rep)


def run_benchmark(cfg: BenchConfig) -> tuple[list[BenchRecord], dict]:
    """Run every (method, N, T, repetition) cell and summarize.

    Cells run sequentially unless ``cfg.parallel > 1``, which is meant for
    correctness sweeps only: concurrent cells disturb each other's timings.
    """
    fleets = make_fleets(cfg)
    jobs = []
    for (N, T), fleet in fleets.items():
        for method in cfg.methods:
            for rep in range(cfg.repetitions):
                jobs.append((fleet, method, rep))

    if cfg.parallel > 1:
        with ProcessPoolExecutor(cfg.parallel) as pool:
            records = list(
                pool.map(_cell_job, [(f.to_dict(), m, cfg, r) for f, m, r in jobs])
            )
    else:
        records = []
        warmed = set()
        for fleet, method, rep in jobs:
            key = (method, len(fleet), fleet.window.T)
            if cfg.warmup and key not in warmed:
                run_cell(fleet, method, cfg, -1)
                warmed.add(key)
            records.append(run_cell(fleet, method, cfg, rep))
    return records, summarize(records, cfg)


def summarize(records: list[BenchRecord], cfg: BenchConfig) -> dict:
    cells = {}
    for rec in records:
        cells.setdefault((rec.method, rec.N, rec.T), []).append(rec)
    out = []
    for (method, N, T), recs in sorted(cells.items()):
        ok = [r for r in recs if r.error is None]
        entry = {"method": method, "N": N, "T": T, "runs": len(recs), "failures": len(recs) - len(ok)}
        for name in ("build_time_s", "solve_time_s", "aggregate_time_s"):
            vals = [getattr(r, name) for r in ok if not np.isnan(getattr(r, name))]
            if vals:
                entry[name] = {"min": min(vals), "median": statistics.median(vals)}
        if ok:
            entry["objective_tau_kw"] = ok[0].objective_tau_kw
            entry["model_vars"] = ok[0].peak_model_vars
            entry["model_constraints"] = ok[0].peak_model_constraints
        out.append(entry)

    agreement = []
    for N in cfg.N:
        for T in cfg.T:
            taus = {
                m: [r.objective_tau_kw for r in cells.get((m, N, T), []) if r.error is None]
                for m in ("direct", "ul")
            }
            if taus["direct"] and taus["ul"]:
                a, b = taus["direct"][0], taus["ul"][0]
                agreement.append(
                    {"N": N, "T": T, "tau_direct": a, "tau_ul": b,
                     "equal": abs(a - b) <= TOL_OPT * max(1.0, abs(a))}
                )
    return {
        "config": asdict(cfg),
        "cells": out,
        "tau_agreement": agreement,
        "platform": sys.platform,
    }


def records_to_csv(records: list[BenchRecord]) -> str:
    buf = io.StringIO()
    names = [f.name for f in fields(BenchRecord)]
    writer = csv.DictWriter(buf, fieldnames=names, lineterminator="\n")
    writer.writeheader()
    for rec in records:
        writer.writerow(asdict(rec))
    return buf.getvalue()


def report_to_json(report: dict) -> str:
    return json.dumps(report, indent=2, default=str)

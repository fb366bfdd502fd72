"""Charging-session ingestion and window projection.

A session (transaction) is connected from ``arrival`` to ``departure`` and
needs ``e_required`` kWh at up to ``p_max`` kW. Only sessions connected for
the whole flexibility window are kept; each is projected onto the energy it
may (``e_max``) and must (``e_min``) take inside the window so that the
session can still complete by departure.

CSV schema (header required, timestamps ISO-8601, UTC assumed if naive)::

    id,arrival_iso8601,departure_iso8601,p_max_kw,e_required_kwh[,p_min_kw]
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .errors import SchemaMismatch
from .flexcore import EVParams, Window, normalize

REQUIRED_COLUMNS = ("id", "arrival_iso8601", "departure_iso8601", "p_max_kw", "e_required_kwh")
OPTIONAL_COLUMNS = ("p_min_kw",)

#: Charger ratings drawn by the default synthetic profile (kW).
SYNTH_P_MAX = (3.7, 7.4, 11.0, 22.0)


def parse_timestamp(text: str) -> datetime:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        return ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def _hours(delta: timedelta) -> float:
    return delta.total_seconds() / 3600.0


@dataclass(frozen=True)
class Transaction:
    id: str
    arrival: datetime
    departure: datetime
    p_max: float
    e_required: float
    p_min: float = 0.0

    def __post_init__(self):
        if not self.arrival < self.departure:
            raise ValueError(f"arrival {self.arrival} is not before departure {self.departure}")
        if not (math.isfinite(self.p_max) and self.p_max > 0):
            raise ValueError(f"p_max must be positive, got {self.p_max}")
        if not (0 <= self.p_min <= self.p_max):
            raise ValueError(f"p_min must lie in [0, p_max], got {self.p_min}")
        cap = self.p_max * self.connected_hours
        # small slack for timestamps rounded to the second
        if not (0 <= self.e_required <= cap * (1 + 1e-12) + 1e-9):
            raise ValueError(
                f"e_required={self.e_required} outside [0, p_max*duration={cap:.6g}]"
            )

    @property
    def connected_hours(self) -> float:
        return _hours(self.departure - self.arrival)

    def to_row(self) -> dict:
        return {
            "id": self.id,
            "arrival_iso8601": self.arrival.isoformat(),
            "departure_iso8601": self.departure.isoformat(),
            "p_max_kw": repr(self.p_max),
            "e_required_kwh": repr(self.e_required),
            "p_min_kw": repr(self.p_min),
        }


@dataclass(frozen=True)
class WindowSpec:
    start: datetime
    end: datetime
    T: int

    def __post_init__(self):
        if not self.end > self.start:
            raise ValueError("window end must be after its start")
        if int(self.T) != self.T or self.T < 1:
            raise ValueError(f"T must be a positive integer, got {self.T}")

    @property
    def hours(self) -> float:
        return _hours(self.end - self.start)

    @property
    def dt(self) -> float:
        return self.hours / self.T

    @property
    def window(self) -> Window:
        return Window(self.T, self.dt)

    def to_dict(self) -> dict:
        return {"start": self.start.isoformat(), "end": self.end.isoformat(), "T": self.T}


def window_project(tx: Transaction, w: WindowSpec) -> EVParams | None:
    """Window-local charging limits of a session, or ``None`` if discarded.

    A session is discarded unless it is connected for the whole window.
    Otherwise::

        e_max = min(e_required, p_max * window_hours)
        e_min = max(0, e_required - p_max * hours_connected_outside_window)

    and the result is passed through :func:`~ulflex.flexcore.normalize`.
    """
    if tx.arrival > w.start or tx.departure < w.end:
        return None
    outside = _hours(w.start - tx.arrival) + _hours(tx.departure - w.end)
    e_max = min(tx.e_required, tx.p_max * w.hours)
    e_min = max(0.0, tx.e_required - tx.p_max * outside)
    return normalize(EVParams(tx.p_min, tx.p_max, e_min, e_max), w.window)


def project_all(txs, w: WindowSpec) -> tuple[list[EVParams], int]:
    """Project every session; returns the kept parameters and the discard count."""
    kept = []
    for tx in txs:
        ev = window_project(tx, w)
        if ev is not None:
            kept.append(ev)
    return kept, len(txs) - len(kept)


def load_transactions(path, format: str = "csv") -> tuple[list[Transaction], list[dict]]:
    """Read sessions from a CSV file.

    Returns:
        ``(transactions, rejects)``; each reject is a dict with the line
        number, the row id if present and the reason the row was refused.

    Raises:
        FileNotFoundError: ``path`` does not exist.
        SchemaMismatch: the header lacks a required column or the file has
            no header at all.
    """
    if format != "csv":
        raise ValueError(f"unsupported transaction format {format!r}")
    path = Path(path)
    with path.open(newline="") as fh:
        return read_transactions_csv(fh)


def read_transactions_csv(fh) -> tuple[list[Transaction], list[dict]]:
    reader = csv.DictReader(fh)
    header = reader.fieldnames
    if header is None:
        raise SchemaMismatch("transaction file is empty (no header)")
    header = [h.strip() for h in header]
    reader.fieldnames = header
    missing = [c for c in REQUIRED_COLUMNS if c not in header]
    if missing:
        raise SchemaMismatch(f"missing required columns: {missing}", missing=missing)

    txs, rejects = [], []
    for row in reader:
        line = reader.line_num
        try:
            p_min = row.get("p_min_kw")
            txs.append(
                Transaction(
                    id=row["id"],
                    arrival=parse_timestamp(row["arrival_iso8601"]),
                    departure=parse_timestamp(row["departure_iso8601"]),
                    p_max=float(row["p_max_kw"]),
                    e_required=float(row["e_required_kwh"]),
                    p_min=float(p_min) if p_min not in (None, "") else 0.0,
                )
            )
        except (ValueError, TypeError, AttributeError) as exc:
            rejects.append({"line": line, "id": row.get("id"), "reason": str(exc)})
    return txs, rejects


def transactions_to_csv(txs) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(
        buf, fieldnames=REQUIRED_COLUMNS + OPTIONAL_COLUMNS, lineterminator="\n"
    )
    writer.writeheader()
    for tx in txs:
        writer.writerow(tx.to_row())
    return buf.getvalue()


def transactions_digest(txs) -> str:
    return hashlib.sha256(transactions_to_csv(txs).encode()).hexdigest()


def paper_example_transactions(w: WindowSpec) -> list[Transaction]:
    """Two sessions projecting onto the motivating-example EVs.

    Needs a 3-hour window; with T=3 the projections are
    ``EVParams(0, 20, 15, 25)`` and ``EVParams(5, 10, 20, 30)``.
    """
    if abs(w.hours - 3.0) > 1e-12:
        raise ValueError("the paper-example profile needs a 3-hour window")
    half = timedelta(minutes=30)
    hour = timedelta(hours=1)
    return [
        Transaction("ev1", w.start - half, w.end, p_max=20.0, e_required=25.0),
        Transaction("ev2", w.start - hour, w.end, p_max=10.0, e_required=30.0, p_min=5.0),
    ]


def synth_fleet(
    n: int, w: WindowSpec, profile: str = "default", seed: int | None = 0
) -> list[Transaction]:
    """Generate ``n`` sessions that all cover the window.

    Profiles:
        ``default``: ``p_max`` uniform over 3.7/7.4/11/22 kW; slack before
            and after the window lognormal (median 1 h, sigma 0.75),
            rounded to whole seconds; ``e_required`` uniform in
            [0.2, 0.9] x p_max x connected hours; ``p_min = 0``.
        ``min-power``: as ``default`` plus ``p_min`` uniform in
            [0, 0.2] x p_max.
        ``paper-example``: the two motivating-example EVs (``n`` must be 2).
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if profile == "paper-example":
        if n != 2:
            raise ValueError("the paper-example profile has exactly 2 sessions")
        return paper_example_transactions(w)
    if profile not in ("default", "min-power"):
        raise ValueError(f"unknown profile {profile!r}")

    rng = np.random.default_rng(seed)
    p_max = rng.choice(SYNTH_P_MAX, size=n)
    before = np.round(rng.lognormal(0.0, 0.75, size=n) * 3600.0)
    after = np.round(rng.lognormal(0.0, 0.75, size=n) * 3600.0)
    connected = (before + after) / 3600.0 + w.hours
    e_req = rng.uniform(0.2, 0.9, size=n) * p_max * connected
    if profile == "min-power":
        p_min = rng.uniform(0.0, 0.2, size=n) * p_max
    else:
        p_min = np.zeros(n)

    width = len(str(n - 1))
    out = []
    for i in range(n):
        out.append(
            Transaction(
                id=f"syn-{i:0{width}d}",
                arrival=w.start - timedelta(seconds=float(before[i])),
                departure=w.end + timedelta(seconds=float(after[i])),
                p_max=float(p_max[i]),
                e_required=float(e_req[i]),
                p_min=float(p_min[i]),
            )
        )
    return out


def fleet_document(evs, w: WindowSpec) -> dict:
    """Fleet JSON: the window spec plus one EVParams object per session."""
    return {
        "T": w.T,
        "dt_hours": w.dt,
        "window": w.to_dict(),
        "evs": [ev.to_dict() for ev in evs],
    }

"""Explicit polytope views of a UL-flexibility set.

The H-representation lists one row per non-empty subset of intervals: the
energy over the subset is capped by ``u_k`` and floored by ``l_k`` where
``k`` is the subset size, giving ``2(2^T - 1)`` rows. The vertex view is the
set of permutations of at most ``T + 1`` decreasing canonical vertices.
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import DimensionCapExceeded, LimitExceeded
from .flexcore import DEFAULT_TOL, ULFlex, as_signal

DEFAULT_CAP_T = 16
HARD_CAP_T = 24


@dataclass(frozen=True, eq=False)
class HRep:
    """Inequality system ``A @ p * dt <= b``.

    Rows are ordered uppers first, then lowers; within each half by subset
    cardinality, then by bitmask (bit ``t`` set means interval ``t`` is in
    the subset). Lower rows are the negated upper rows.
    """

    A: np.ndarray
    b: np.ndarray
    sign: np.ndarray  # "upper" / "lower"
    card: np.ndarray
    bitmask: np.ndarray
    dt: float

    @property
    def T(self) -> int:
        return self.A.shape[1]

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["sign", "k", "bitmask", "bound_kwh"])
        for s, k, m, bound in zip(self.sign, self.card, self.bitmask, self.b):
            writer.writerow([s, int(k), int(m), repr(float(bound))])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "T": self.T,
            "dt_hours": self.dt,
            "A": self.A.tolist(),
            "b_kwh": self.b.tolist(),
            "rows": [
                {"sign": str(s), "k": int(k), "bitmask": int(m)}
                for s, k, m in zip(self.sign, self.card, self.bitmask)
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HRep":
        rows = d["rows"]
        return cls(
            A=np.asarray(d["A"], dtype=np.int8),
            b=np.asarray(d["b_kwh"], dtype=float),
            sign=np.array([r["sign"] for r in rows]),
            card=np.array([r["k"] for r in rows], dtype=np.int64),
            bitmask=np.array([r["bitmask"] for r in rows], dtype=np.int64),
            dt=float(d["dt_hours"]),
        )


def subset_masks(T: int) -> np.ndarray:
    """All non-empty subset bitmasks of ``range(T)``, by (size, value)."""
    masks = np.arange(1, 1 << T, dtype=np.int64)
    sizes = np.zeros_like(masks)
    for t in range(T):
        sizes += (masks >> t) & 1
    return masks[np.lexsort((masks, sizes))]


def build_hrep(ul: ULFlex, cap_T: int = DEFAULT_CAP_T) -> HRep:
    if cap_T > HARD_CAP_T:
        raise DimensionCapExceeded(
            f"cap_T={cap_T} exceeds the hard limit {HARD_CAP_T}", cap_T=cap_T
        )
    T = ul.T
    if T > cap_T:
        raise DimensionCapExceeded(
            f"T={T} exceeds the H-representation cap {cap_T}", T=T, cap_T=cap_T
        )
    masks = subset_masks(T)
    upper = ((masks[:, None] >> np.arange(T)) & 1).astype(np.int8)
    card = upper.sum(axis=1).astype(np.int64)
    n = masks.size
    return HRep(
        A=np.vstack([upper, -upper]),
        b=np.concatenate([ul.u[card - 1], -ul.l[card - 1]]),
        sign=np.array(["upper"] * n + ["lower"] * n),
        card=np.concatenate([card, card]),
        bitmask=np.concatenate([masks, masks]),
        dt=ul.dt,
    )


def hrep_slack(h: HRep, p) -> np.ndarray:
    """Row slacks ``b - A @ p * dt`` (negative means violated)."""
    p = as_signal(p, h.T)
    return h.b - (h.A @ p) * h.dt


def hrep_contains(h: HRep, p, tol: float = DEFAULT_TOL) -> bool:
    return bool(np.all(hrep_slack(h, p) >= -tol))


@dataclass(frozen=True, eq=False)
class VertexSet:
    """Deduplicated canonical (decreasing) vertices of a UL polytope.

    ``ks[i]`` lists every ``k`` whose construction produced ``canonical[i]``.
    """

    canonical: list
    ks: list

    @property
    def expanded_count(self) -> int:
        """Number of distinct vertices once all permutations are applied."""
        return sum(_multiset_count(v) for v in self.canonical)

    def to_list(self) -> list:
        return [
            {"k": ks, "p_kw": v.tolist()} for v, ks in zip(self.canonical, self.ks)
        ]


def _multiset_count(v: np.ndarray) -> int:
    count = math.factorial(len(v))
    for m in Counter(v.tolist()).values():
        count //= math.factorial(m)
    return count


def canonical_vertex(ul: ULFlex, k: int) -> np.ndarray:
    """The decreasing vertex where ``u_1..u_k`` and ``l_1..l_{T-k}`` bind."""
    T = ul.T
    du = np.diff(ul.u, prepend=0.0)
    dl = np.diff(ul.l, prepend=0.0)
    # for t > k (1-based): l_{T-t+1} - l_{T-t}, i.e. dl reversed
    p = np.concatenate([du[:k], dl[::-1][k:]]) / ul.dt
    assert p.size == T
    return p


def canonical_vertices(ul: ULFlex) -> VertexSet:
    seen: dict[tuple, int] = {}
    canonical, ks = [], []
    for k in range(ul.T + 1):
        v = canonical_vertex(ul, k)
        key = tuple(v.tolist())
        if key in seen:
            ks[seen[key]].append(k)
            continue
        seen[key] = len(canonical)
        v.setflags(write=False)
        canonical.append(v)
        ks.append([k])
    return VertexSet(canonical, ks)


def _next_permutation(a: list) -> bool:
    """Advance ``a`` in place to its next lexicographic permutation."""
    i = len(a) - 2
    while i >= 0 and a[i] >= a[i + 1]:
        i -= 1
    if i < 0:
        return False
    j = len(a) - 1
    while a[j] <= a[i]:
        j -= 1
    a[i], a[j] = a[j], a[i]
    a[i + 1 :] = reversed(a[i + 1 :])
    return True


def multiset_permutations(v) -> Iterator[np.ndarray]:
    a = sorted(np.asarray(v, dtype=float).tolist())
    while True:
        yield np.array(a)
        if not _next_permutation(a):
            return


def enumerate_permutations(
    vs: VertexSet, limit: int = 100_000, exhaustive: bool = False
) -> Iterator[np.ndarray]:
    """Stream every distinct vertex of the polytope.

    At most ``limit`` points are yielded. With ``exhaustive=True`` the
    stream refuses to start (``LimitExceeded``) if it could not be complete.
    """
    total = vs.expanded_count
    if exhaustive and total > limit:
        raise LimitExceeded(
            f"{total} vertices exceed the limit of {limit}", total=total, limit=limit
        )
    emitted = 0
    for v in vs.canonical:
        for perm in multiset_permutations(v):
            if emitted >= limit:
                return
            emitted += 1
            yield perm


def support(ul: ULFlex, d) -> float:
    """Maximum of ``<d, p>`` over the UL polytope, in O(T^2).

    Every vertex is a permutation of a canonical decreasing vertex, and the
    best permutation pairs the largest entries of ``d`` with the largest
    entries of the vertex.
    """
    d = np.sort(as_signal(d, ul.T))[::-1]
    return max(float(d @ v) for v in canonical_vertices(ul).canonical)


def vertices_to_json(vs: VertexSet) -> str:
    return json.dumps(vs.to_list())

"""Small linear-programming layer.

Problems are always maximizations::

    maximize    c @ x
    subject to  A[i] @ x  (<=, ==, >=)  rhs[i]
                lb <= x <= ub

Two solvers are registered: ``"simplex"``, a bundled dense two-phase revised
simplex (Dantzig pricing, switching to Bland's rule when it stalls), and
``"highs"``, an adapter around :func:`scipy.optimize.linprog` used for
models too large for a dense basis inverse. ``"auto"`` picks between them
by model size. Additional solvers can be plugged in with
:func:`register_solver`.
"""

from __future__ import annotations

import io
import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .errors import NumericalFailure

log = logging.getLogger(__name__)

TOL_FEAS = 1e-7
TOL_OPT = 1e-7

LE, EQ, GE = "<=", "==", ">="
_SENSES = (LE, EQ, GE)

#: "auto" uses the dense simplex while (rows * columns) stays below this.
AUTO_DENSE_LIMIT = 250_000


@dataclass(eq=False)
class LPProblem:
    """A linear program in row form; ``A`` may be dense or scipy-sparse."""

    c: np.ndarray
    A: np.ndarray | sp.spmatrix
    senses: np.ndarray
    rhs: np.ndarray
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        n = self.c.size
        if sp.issparse(self.A):
            self.A = sp.csr_matrix(self.A, dtype=float)
        else:
            self.A = np.asarray(self.A, dtype=float).reshape(-1, n)
        m = self.A.shape[0]
        self.senses = np.asarray(self.senses, dtype=object)
        if self.senses.ndim == 0:
            self.senses = np.full(m, self.senses.item(), dtype=object)
        self.rhs = np.asarray(self.rhs, dtype=float).reshape(-1)
        self.lb = np.zeros(n) if self.lb is None else np.broadcast_to(
            np.asarray(self.lb, dtype=float), (n,)
        ).copy()
        self.ub = np.full(n, np.inf) if self.ub is None else np.broadcast_to(
            np.asarray(self.ub, dtype=float), (n,)
        ).copy()

        if self.A.shape[1] != n:
            raise ValueError(f"A has {self.A.shape[1]} columns, objective has {n}")
        if self.senses.shape != (m,) or self.rhs.shape != (m,):
            raise ValueError("senses and rhs must have one entry per row")
        bad = set(self.senses.tolist()) - set(_SENSES)
        if bad:
            raise ValueError(f"unknown row relations {bad}")
        data = self.A.data if sp.issparse(self.A) else self.A
        if not (np.all(np.isfinite(data)) and np.all(np.isfinite(self.c))):
            raise ValueError("objective and constraint coefficients must be finite")
        if not np.all(np.isfinite(self.rhs)):
            raise ValueError("right-hand sides must be finite")
        if np.any(self.lb == np.inf) or np.any(self.ub == -np.inf):
            raise ValueError("variable bounds must not be +inf lower / -inf upper")

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    def dense_A(self) -> np.ndarray:
        return self.A.toarray() if sp.issparse(self.A) else self.A

    def residuals(self, x: np.ndarray) -> np.ndarray:
        """Constraint violation per row and bound (all >= 0 when feasible)."""
        ax = self.A @ x
        row = np.where(
            self.senses == LE,
            ax - self.rhs,
            np.where(self.senses == GE, self.rhs - ax, np.abs(ax - self.rhs)),
        )
        return np.concatenate(
            [np.maximum(row, 0.0), np.maximum(self.lb - x, 0.0), np.maximum(x - self.ub, 0.0)]
        )

    def scales(self) -> np.ndarray:
        return np.maximum(
            1.0,
            np.abs(
                np.concatenate(
                    [self.rhs, np.nan_to_num(self.lb, neginf=0.0), np.nan_to_num(self.ub, posinf=0.0)]
                )
            ),
        )


@dataclass
class LPSolution:
    status: str  # "optimal" | "infeasible" | "unbounded"
    objective: float = float("nan")
    x: np.ndarray | None = None
    iterations: int = 0
    wall_time: float = 0.0
    solver: str = ""
    stats: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


SolverFn = Callable[[LPProblem], LPSolution]
_SOLVERS: dict[str, SolverFn] = {}


def register_solver(name: str, fn: SolverFn) -> None:
    """Plug in a solver: ``fn(problem) -> LPSolution``."""
    _SOLVERS[name] = fn


def available_solvers() -> list[str]:
    return sorted(_SOLVERS) + ["auto"]


def pick_solver(problem: LPProblem) -> str:
    cols = problem.n_vars + problem.n_rows
    return "simplex" if problem.n_rows * cols <= AUTO_DENSE_LIMIT else "highs"


def solve(problem: LPProblem, solver: str = "auto") -> LPSolution:
    """Solve ``problem`` and verify the primal point of optimal results.

    Raises:
        NumericalFailure: the solver gave up, or its "optimal" point violates
            the constraints by more than ``TOL_FEAS`` (scaled by the size of
            the bound involved).
    """
    name = pick_solver(problem) if solver == "auto" else solver
    try:
        fn = _SOLVERS[name]
    except KeyError:
        raise ValueError(f"unknown solver {solver!r}; have {available_solvers()}") from None
    start = time.perf_counter()
    sol = fn(problem)
    sol.wall_time = time.perf_counter() - start
    sol.solver = name
    if sol.optimal:
        worst = float(np.max(problem.residuals(sol.x) / problem.scales(), initial=0.0))
        sol.stats["max_scaled_residual"] = worst
        if worst > TOL_FEAS:
            raise NumericalFailure(
                f"{name} returned a point violating constraints by {worst:.3g}",
                residual=worst,
            )
    return sol


# ---------------------------------------------------------------- simplex


class _StandardForm:
    """``max c@y  s.t.  M@y = b, y >= 0`` with ``b >= 0``, plus the map back."""

    def __init__(self, p: LPProblem):
        A = p.dense_A()
        m, n = A.shape
        cols, costs = [], []
        # x_j = offset_j + sum(coef * y_col)
        self.n = n
        self.offset = np.zeros(n)
        self.terms: list[list[tuple[int, float]]] = [[] for _ in range(n)]
        extra_rows: list[tuple[int, float]] = []  # (column, upper bound) rows

        def add_col(vec, cost):
            cols.append(vec)
            costs.append(cost)
            return len(cols) - 1

        for j in range(n):
            lo, hi = p.lb[j], p.ub[j]
            if np.isfinite(lo):
                self.offset[j] = lo
                k = add_col(A[:, j], p.c[j])
                self.terms[j].append((k, 1.0))
                if np.isfinite(hi):
                    extra_rows.append((k, hi - lo))
            elif np.isfinite(hi):
                self.offset[j] = hi
                k = add_col(-A[:, j], -p.c[j])
                self.terms[j].append((k, -1.0))
            else:
                k1 = add_col(A[:, j], p.c[j])
                k2 = add_col(-A[:, j], -p.c[j])
                self.terms[j] += [(k1, 1.0), (k2, -1.0)]

        nstruct = len(cols)
        M = np.zeros((m + len(extra_rows), nstruct))
        if nstruct:
            M[:m] = np.column_stack(cols)
        for r, (k, bound) in enumerate(extra_rows):
            M[m + r, k] = 1.0
        rhs = np.concatenate([p.rhs - A @ self.offset, [b for _, b in extra_rows]])
        senses = list(p.senses) + [LE] * len(extra_rows)
        mm = M.shape[0]

        # slacks / surpluses
        slack_cols = []
        slack_sign = []
        for i, s in enumerate(senses):
            if s == LE:
                slack_cols.append(i)
                slack_sign.append(1.0)
            elif s == GE:
                slack_cols.append(i)
                slack_sign.append(-1.0)
        S = np.zeros((mm, len(slack_cols)))
        for j, (i, sg) in enumerate(zip(slack_cols, slack_sign)):
            S[i, j] = sg
        M = np.hstack([M, S])
        cost = np.concatenate([costs, np.zeros(len(slack_cols))])

        flip = rhs < 0
        M[flip] *= -1.0
        rhs = np.where(flip, -rhs, rhs)

        # rows whose slack enters with +1 start basic; the rest get artificials
        basis = np.full(mm, -1)
        for j, i in enumerate(slack_cols):
            if M[i, nstruct + j] > 0:
                basis[i] = nstruct + j
        need = np.flatnonzero(basis < 0)
        art = np.zeros((mm, need.size))
        art[need, np.arange(need.size)] = 1.0
        self.n_real = M.shape[1]
        basis[need] = self.n_real + np.arange(need.size)
        self.M = np.hstack([M, art])
        self.b = rhs
        self.cost = np.concatenate([cost, np.zeros(need.size)])
        self.basis = basis
        self.n_art = need.size

    def recover(self, y: np.ndarray) -> np.ndarray:
        x = self.offset.copy()
        for j, terms in enumerate(self.terms):
            for k, coef in terms:
                x[j] += coef * y[k]
        return x


class _Revised:
    """Dense revised simplex on a ``_StandardForm`` with an explicit inverse."""

    REFACTOR_EVERY = 50
    STALL_LIMIT = 50
    PIV_TOL = 1e-9

    def __init__(self, M, b, basis, max_iter):
        self.M, self.b = M, b
        self.basis = basis.copy()
        self.max_iter = max_iter
        self.iterations = 0
        self.bland_switches = 0
        self.refactor()

    def refactor(self):
        B = self.M[:, self.basis]
        try:
            self.Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:
            raise NumericalFailure("singular basis during refactorization") from exc
        self.xB = self.Binv @ self.b
        self.xB[np.abs(self.xB) < 1e-12] = 0.0
        self.since_refactor = 0

    def run(self, cost, allowed):
        """Maximize ``cost @ y`` over columns where ``allowed`` is true."""
        bland = False
        stalled = 0
        allowed = allowed.copy()
        while True:
            if self.iterations >= self.max_iter:
                raise NumericalFailure(
                    f"simplex hit the iteration limit ({self.max_iter})",
                    iterations=self.iterations,
                )
            y = cost[self.basis] @ self.Binv
            d = cost - y @ self.M
            scale = max(1.0, float(np.max(np.abs(cost))))
            d[self.basis] = 0.0
            d[~allowed] = 0.0
            cand = np.flatnonzero(d > TOL_OPT * scale)
            if cand.size == 0:
                return "optimal"
            q = int(cand[0]) if bland else int(cand[np.argmax(d[cand])])
            w = self.Binv @ self.M[:, q]
            pos = np.flatnonzero(w > self.PIV_TOL)
            if pos.size == 0:
                return "unbounded"
            ratios = self.xB[pos] / w[pos]
            best = ratios.min()
            ties = pos[ratios <= best + 1e-12]
            # Bland tie-break: leave the smallest basic column index
            r = int(ties[np.argmin(self.basis[ties])])
            theta = self.xB[r] / w[r]
            self._pivot(r, q, w, theta)
            if theta <= 1e-12:
                stalled += 1
                if stalled >= self.STALL_LIMIT and not bland:
                    bland = True
                    self.bland_switches += 1
            else:
                stalled = 0

    def _pivot(self, r, q, w, theta):
        self.xB -= theta * w
        self.xB[r] = theta
        self.xB[np.abs(self.xB) < 1e-12] = 0.0
        pivot_row = self.Binv[r] / w[r]
        self.Binv -= np.outer(w, pivot_row)
        self.Binv[r] = pivot_row
        self.basis[r] = q
        self.iterations += 1
        self.since_refactor += 1
        if self.since_refactor >= self.REFACTOR_EVERY:
            self.refactor()
        if np.any(self.xB < -1e-7):
            self.refactor()
            if np.any(self.xB < -1e-7):
                raise NumericalFailure("basic solution lost feasibility")
            self.xB = np.maximum(self.xB, 0.0)


def _solve_simplex(p: LPProblem) -> LPSolution:
    sf = _StandardForm(p)
    mm, ncols = sf.M.shape
    if mm == 0:
        # only bounds: each variable goes to whichever bound its cost favors
        y = np.zeros(ncols)
        if np.any(sf.cost > 0):
            return LPSolution("unbounded")
        x = sf.recover(y)
        return LPSolution("optimal", float(p.c @ x), x)

    rs = _Revised(sf.M, sf.b, sf.basis, max_iter=50 * (mm + ncols) + 1000)
    is_art = np.arange(ncols) >= sf.n_real

    if sf.n_art:
        phase1 = np.where(is_art, -1.0, 0.0)
        rs.run(phase1, np.ones(ncols, dtype=bool))
        infeas = float(np.sum(rs.xB[is_art[rs.basis]]))
        if infeas > TOL_FEAS * max(1.0, float(np.max(np.abs(sf.b)))):
            return LPSolution(
                "infeasible", iterations=rs.iterations, stats={"phase1_residual": infeas}
            )
        _drive_out_artificials(rs, is_art)

    status = rs.run(sf.cost, ~is_art)
    stats = {"bland_switches": rs.bland_switches}
    if status == "unbounded":
        return LPSolution("unbounded", iterations=rs.iterations, stats=stats)
    yv = np.zeros(ncols)
    yv[rs.basis] = rs.xB
    x = sf.recover(yv[: sf.n_real])
    return LPSolution("optimal", float(p.c @ x), x, rs.iterations, stats=stats)


def _drive_out_artificials(rs: _Revised, is_art: np.ndarray) -> None:
    """Pivot zero-valued artificials out of the basis; drop redundant rows."""
    keep = np.ones(rs.M.shape[0], dtype=bool)
    for r in range(rs.M.shape[0]):
        if not is_art[rs.basis[r]]:
            continue
        row = rs.Binv[r] @ rs.M
        row[is_art] = 0.0
        row[rs.basis] = 0.0
        cand = np.flatnonzero(np.abs(row) > 1e-9)
        if cand.size:
            q = int(cand[np.argmax(np.abs(row[cand]))])
            rs._pivot(r, q, rs.Binv @ rs.M[:, q], 0.0)
        else:
            keep[r] = False
    if not keep.all():
        rs.M = rs.M[keep]
        rs.b = rs.b[keep]
        rs.basis = rs.basis[keep]
        rs.refactor()


# ------------------------------------------------------------------ highs


def _solve_highs(p: LPProblem) -> LPSolution:
    from scipy.optimize import linprog

    A = p.A if sp.issparse(p.A) else sp.csr_matrix(p.A)
    le = np.flatnonzero(p.senses == LE)
    ge = np.flatnonzero(p.senses == GE)
    eq = np.flatnonzero(p.senses == EQ)
    A_ub = sp.vstack([A[le], -A[ge]], format="csr") if le.size + ge.size else None
    b_ub = np.concatenate([p.rhs[le], -p.rhs[ge]]) if A_ub is not None else None
    A_eq = A[eq] if eq.size else None
    b_eq = p.rhs[eq] if eq.size else None
    bounds = np.column_stack(
        [np.where(np.isinf(p.lb), np.nan, p.lb), np.where(np.isinf(p.ub), np.nan, p.ub)]
    )
    bounds = [(None if np.isnan(a) else a, None if np.isnan(b) else b) for a, b in bounds]
    kwargs = dict(A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
    res = linprog(-p.c, **kwargs)
    if res.status == 2:
        # presolve can report unbounded models as infeasible
        res = linprog(-p.c, options={"presolve": False}, **kwargs)
    nit = int(getattr(res, "nit", 0) or 0)
    if res.status == 0:
        return LPSolution("optimal", float(p.c @ res.x), np.asarray(res.x), nit)
    if res.status == 2:
        return LPSolution("infeasible", iterations=nit)
    if res.status == 3:
        return LPSolution("unbounded", iterations=nit)
    raise NumericalFailure(f"HiGHS failed: {res.message}", status=int(res.status))


register_solver("simplex", _solve_simplex)
register_solver("highs", _solve_highs)


# ------------------------------------------------------------------- dump


def dump_lp(p: LPProblem, precision: int = 17) -> str:
    """Plain-text dump of a problem, for debugging.

    Format (one item per line)::

        MAXIMIZE
          obj: <coef> x<j> + ...
        SUBJECT TO
          r<i>: <coef> x<j> + ... <= | == | >= <rhs>
        BOUNDS
          <lb> <= x<j> <= <ub>
        END

    Zero coefficients are omitted; infinite bounds print as ``-inf``/``inf``.
    """
    fmt = f"{{:.{precision}g}}"

    def linear(coefs, idx):
        parts = [f"{fmt.format(coefs[k])} x{j}" for k, j in enumerate(idx)]
        return " + ".join(parts) if parts else "0"

    out = io.StringIO()
    nz = np.flatnonzero(p.c)
    out.write("MAXIMIZE\n")
    out.write(f"  obj: {linear(p.c[nz], nz)}\n")
    out.write("SUBJECT TO\n")
    A = sp.csr_matrix(p.A)
    for i in range(p.n_rows):
        lo, hi = A.indptr[i], A.indptr[i + 1]
        out.write(
            f"  r{i}: {linear(A.data[lo:hi], A.indices[lo:hi])} "
            f"{p.senses[i]} {fmt.format(p.rhs[i])}\n"
        )
    out.write("BOUNDS\n")
    for j in range(p.n_vars):
        out.write(f"  {fmt.format(p.lb[j])} <= x{j} <= {fmt.format(p.ub[j])}\n")
    out.write("END\n")
    return out.getvalue()

"""Self-contained sparse LP/MIP engine.

Minimization problems are stated row-wise (``<=``, ``>=``, ``=``) with
variable bounds defaulting to ``[0, +inf)``.  :func:`solve_lp` runs a
bounded-variable revised simplex: all rows are converted to equalities with
one logical (slack) column each, phase 1 shifts the bounds of violated
logicals and drives them back, phase 2 optimizes the true costs.  The basis
inverse is kept dense and refactorized periodically; pricing is Dantzig by
default and switches to Bland's rule after a streak of degenerate pivots so
cycles cannot persist.  :func:`solve_mip` wraps the simplex in best-bound
branch-and-bound on binary variables, branching on the most fractional one
(ties to the lowest index) so repeated runs take identical paths.

Row duals follow the sensitivity convention: the dual is the derivative of
the optimum with respect to that row's right-hand side, hence ``<=`` rows
have duals <= 0 and ``>=`` rows duals >= 0 on a minimization problem.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import InstanceError, NodeLimitError, SolverError

LE = "<="
GE = ">="
EQ = "="

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

TOL_FEAS = 1e-7
TOL_OPT = 1e-7
TOL_INT = 1e-6

_AT_LB, _AT_UB, _BASIC = 0, 1, 2
_INF = float("inf")


class LinearProgram:
    """Sparse minimization LP/MIP under construction.

    Variables are added first (``add_var``), then rows referencing them
    (``add_row``).  Instances are plain containers; solving never mutates
    them, so distinct programs can be solved concurrently.
    """

    def __init__(self, name="lp"):
        self.name = name
        self.costs = []
        self.lower = []
        self.upper = []
        self.binary = []
        self.var_names = []
        self.row_cols = []
        self.row_vals = []
        self.row_sense = []
        self.rhs = []
        self.row_names = []

    @property
    def n_vars(self):
        return len(self.costs)

    @property
    def n_rows(self):
        return len(self.rhs)

    def add_var(self, cost=0.0, lb=0.0, ub=_INF, binary=False, name=None):
        if binary:
            lb = max(lb, 0.0)
            ub = min(ub, 1.0)
        if math.isnan(lb) or math.isnan(ub) or lb > ub:
            raise InstanceError(f"variable bounds [{lb}, {ub}] are inconsistent")
        if not math.isfinite(cost):
            raise InstanceError("variable cost must be finite")
        j = len(self.costs)
        self.costs.append(float(cost))
        self.lower.append(float(lb))
        self.upper.append(float(ub))
        self.binary.append(bool(binary))
        self.var_names.append(name if name is not None else f"x{j}")
        return j

    def add_row(self, coeffs, sense, rhs, name=None):
        if sense not in (LE, GE, EQ):
            raise InstanceError(f"unknown row sense {sense!r}")
        if not math.isfinite(rhs):
            raise InstanceError("row rhs must be finite")
        if isinstance(coeffs, dict):
            coeffs = sorted(coeffs.items())
        cols = []
        vals = []
        for j, a in coeffs:
            if not (0 <= j < self.n_vars):
                raise InstanceError(f"row references unknown variable {j}")
            if not math.isfinite(a):
                raise InstanceError("row coefficients must be finite")
            if a != 0.0:
                cols.append(int(j))
                vals.append(float(a))
        i = len(self.rhs)
        self.row_cols.append(np.array(cols, dtype=np.int64))
        self.row_vals.append(np.array(vals, dtype=float))
        self.row_sense.append(sense)
        self.rhs.append(float(rhs))
        self.row_names.append(name if name is not None else f"c{i}")
        return i

    def binary_indices(self):
        return [j for j, flag in enumerate(self.binary) if flag]

    def to_lp_text(self):
        """Render in CPLEX LP text format for external cross-checking."""
        return _lp_text(self)


@dataclass
class LpSolution:
    """Result of an LP or MIP solve.

    ``duals`` are per-row sensitivities (see module docstring); for a MIP
    they come from the final LP with the binaries fixed at their optimal
    values.  ``objective`` is +inf for infeasible and -inf for unbounded
    problems.
    """

    status: str
    objective: float
    x: np.ndarray
    duals: np.ndarray
    iterations: int = 0
    nodes: int = 0


# ---------------------------------------------------------------------------
# standard form


class _StandardForm:
    """Equality form ``A x = b`` with bounds, logical columns included.

    Structural columns with an infinite lower bound are negated (finite
    upper bound) or split into a difference of two nonnegative columns, so
    the simplex only ever sees finite lower bounds.
    """

    def __init__(self, p: LinearProgram):
        self.prog = p
        n = p.n_vars
        m = p.n_rows
        self.transforms = []
        cols = {"cost": [], "lb": [], "ub": []}

        def push(cost, lb, ub):
            cols["cost"].append(cost)
            cols["lb"].append(lb)
            cols["ub"].append(ub)
            return len(cols["cost"]) - 1

        coo_r, coo_c, coo_v = [], [], []
        col_of = []
        for j in range(n):
            lb, ub, cost = p.lower[j], p.upper[j], p.costs[j]
            if lb > -_INF:
                self.transforms.append(("d", push(cost, lb, ub)))
            elif ub < _INF:
                self.transforms.append(("n", push(-cost, -ub, _INF)))
            else:
                jp = push(cost, 0.0, _INF)
                jn = push(-cost, 0.0, _INF)
                self.transforms.append(("s", jp, jn))
            col_of.append(self.transforms[-1])

        self.flip = np.ones(m)
        b = np.array(p.rhs, dtype=float)
        for i in range(m):
            sgn = 1.0
            if p.row_sense[i] == GE:
                sgn = -1.0
                self.flip[i] = -1.0
                b[i] = -b[i]
            for j, a in zip(p.row_cols[i], p.row_vals[i]):
                tr = col_of[j]
                if tr[0] == "d":
                    coo_r.append(i), coo_c.append(tr[1]), coo_v.append(sgn * a)
                elif tr[0] == "n":
                    coo_r.append(i), coo_c.append(tr[1]), coo_v.append(-sgn * a)
                else:
                    coo_r.append(i), coo_c.append(tr[1]), coo_v.append(sgn * a)
                    coo_r.append(i), coo_c.append(tr[2]), coo_v.append(-sgn * a)

        self.ns = len(cols["cost"])
        # one logical column per row; equality rows get a fixed [0, 0] slack
        for i in range(m):
            slack = push(0.0, 0.0, 0.0 if p.row_sense[i] == EQ else _INF)
            coo_r.append(i), coo_c.append(slack), coo_v.append(1.0)
        self.slack0 = self.ns

        N = self.ns + m
        self.A = sp.coo_matrix(
            (coo_v, (coo_r, coo_c)), shape=(m, N), dtype=float
        ).tocsc()
        self.AT = self.A.T.tocsr()
        self.b = b
        self.costs = np.array(cols["cost"], dtype=float)
        self.lower = np.array(cols["lb"], dtype=float)
        self.upper = np.array(cols["ub"], dtype=float)
        self.m = m
        self.N = N

    def map_bounds(self, lower=None, upper=None):
        """Internal bound arrays with per-variable overrides applied."""
        lo = self.lower.copy()
        up = self.upper.copy()
        if lower is None and upper is None:
            return lo, up
        p = self.prog
        for j, tr in enumerate(self.transforms):
            l_j = p.lower[j] if lower is None or lower[j] is None else lower[j]
            u_j = p.upper[j] if upper is None or upper[j] is None else upper[j]
            if tr[0] == "d":
                lo[tr[1]], up[tr[1]] = l_j, u_j
            elif tr[0] == "n":
                lo[tr[1]], up[tr[1]] = -u_j, -l_j
            else:
                if l_j != p.lower[j] or u_j != p.upper[j]:
                    raise InstanceError("cannot override bounds of a free variable")
        return lo, up

    def map_back(self, x_int):
        x = np.empty(self.prog.n_vars)
        for j, tr in enumerate(self.transforms):
            if tr[0] == "d":
                x[j] = x_int[tr[1]]
            elif tr[0] == "n":
                x[j] = -x_int[tr[1]]
            else:
                x[j] = x_int[tr[1]] - x_int[tr[2]]
        return x


# ---------------------------------------------------------------------------
# revised simplex core


class _Simplex:
    """Bounded-variable revised simplex over an equality system."""

    def __init__(self, sf: _StandardForm, lower, upper, max_pivots=None,
                 bland_after=30, refactor_every=128):
        self.sf = sf
        self.A = sf.A
        self.AT = sf.AT
        self.b = sf.b
        self.lower = lower
        self.upper = upper
        self.m = sf.m
        self.N = sf.N
        self.max_pivots = (
            max_pivots if max_pivots is not None else 50_000 + 100 * (self.m + self.N)
        )
        self.bland_after = bland_after
        self.refactor_every = refactor_every
        self.pivots = 0
        self.phase = 0

    def column(self, j):
        a = self.A
        s, e = a.indptr[j], a.indptr[j + 1]
        return a.indices[s:e], a.data[s:e]

    def ftran(self, j):
        rows, vals = self.column(j)
        return self.Binv[:, rows] @ vals

    def start(self):
        """All-logical basis; structurals rest at their lower bounds."""
        self.x = np.zeros(self.N)
        self.x[: self.sf.ns] = self.lower[: self.sf.ns]
        self.vstat = np.full(self.N, _AT_LB, dtype=np.int8)
        slacks = self.sf.slack0 + np.arange(self.m)
        self.basis = slacks.copy()
        self.vstat[slacks] = _BASIC
        self.Binv = np.eye(self.m)
        resid = self.b - self.A[:, : self.sf.ns] @ self.x[: self.sf.ns]
        self.x[slacks] = resid
        return slacks, resid

    def refactor(self):
        B = self.A[:, self.basis].toarray()
        try:
            self.Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:
            raise SolverError(
                f"singular basis after {self.pivots} pivots",
                iterations=self.pivots, phase=self.phase,
            ) from exc
        self.recompute_basics()

    def recompute_basics(self):
        # snap nonbasics exactly onto their bounds, then solve for the basics
        nb_lb = self.vstat == _AT_LB
        nb_ub = self.vstat == _AT_UB
        self.x[nb_lb] = self.lower[nb_lb]
        self.x[nb_ub] = self.upper[nb_ub]
        xn = self.x.copy()
        xn[self.basis] = 0.0
        self.x[self.basis] = self.Binv @ (self.b - self.A @ xn)

    def run(self, costs):
        """Optimize ``costs`` from the current basis.

        Returns 'optimal' or 'unbounded'; raises SolverError past the pivot
        cap.
        """
        bland = False
        degen_streak = 0
        since_refactor = 0
        final_passes = 0
        tol_d = 1e-9
        fixed = self.lower == self.upper

        while True:
            if self.pivots > self.max_pivots:
                raise SolverError(
                    f"simplex exceeded {self.max_pivots} pivots "
                    f"(phase {self.phase}, objective {costs @ self.x:.6g})",
                    iterations=self.pivots, phase=self.phase,
                )

            y = costs[self.basis] @ self.Binv
            d = costs - self.AT @ y
            scale = 1.0 + np.abs(y).max(initial=0.0)
            elig = (~fixed) & (
                ((self.vstat == _AT_LB) & (d < -tol_d * scale))
                | ((self.vstat == _AT_UB) & (d > tol_d * scale))
            )
            if not elig.any():
                if final_passes < 3:
                    final_passes += 1
                    self.refactor()
                    since_refactor = 0
                    y = costs[self.basis] @ self.Binv
                    d = costs - self.AT @ y
                    elig = (~fixed) & (
                        ((self.vstat == _AT_LB) & (d < -tol_d * scale))
                        | ((self.vstat == _AT_UB) & (d > tol_d * scale))
                    )
                    if not elig.any():
                        return OPTIMAL
                else:
                    return OPTIMAL

            cand = np.flatnonzero(elig)
            if bland:
                j = int(cand[0])
            else:
                j = int(cand[np.argmax(np.abs(d[cand]))])
            sigma = 1.0 if self.vstat[j] == _AT_LB else -1.0

            w = self.ftran(j)
            delta = sigma * w

            xB = self.x[self.basis]
            lB = self.lower[self.basis]
            uB = self.upper[self.basis]
            ratios = np.full(self.m, _INF)
            dec = delta > 1e-11
            inc = delta < -1e-11
            ratios[dec] = (xB[dec] - lB[dec]) / delta[dec]
            has_ub = inc & (uB < _INF)
            ratios[has_ub] = (uB[has_ub] - xB[has_ub]) / (-delta[has_ub])
            np.maximum(ratios, 0.0, out=ratios)

            t_basic = ratios.min() if self.m else _INF
            t_bound = self.upper[j] - self.lower[j]
            t = min(t_basic, t_bound)
            if t == _INF:
                return UNBOUNDED

            self.pivots += 1
            since_refactor += 1

            if t_bound <= t_basic:
                # entering variable runs to its opposite bound; basis unchanged
                self.x[self.basis] = xB - t * delta
                if sigma > 0:
                    self.x[j] = self.upper[j]
                    self.vstat[j] = _AT_UB
                else:
                    self.x[j] = self.lower[j]
                    self.vstat[j] = _AT_LB
            else:
                ties = np.flatnonzero(ratios <= t + 1e-12 * (1.0 + t))
                if bland:
                    r = int(ties[np.argmin(self.basis[ties])])
                else:
                    r = int(ties[np.argmax(np.abs(delta[ties]))])
                leave = int(self.basis[r])

                self.x[self.basis] = xB - t * delta
                self.x[j] = self.x[j] + sigma * t
                if delta[r] > 0:
                    self.x[leave] = self.lower[leave]
                    self.vstat[leave] = _AT_LB
                else:
                    self.x[leave] = self.upper[leave]
                    self.vstat[leave] = _AT_UB
                self.basis[r] = j
                self.vstat[j] = _BASIC

                piv = w[r]
                if abs(piv) < 1e-11:
                    self.refactor()
                    since_refactor = 0
                else:
                    Br = self.Binv[r] / piv
                    w2 = w.copy()
                    w2[r] = 0.0
                    self.Binv -= np.outer(w2, Br)
                    self.Binv[r] = Br

            if t <= 1e-10:
                degen_streak += 1
                if degen_streak >= self.bland_after:
                    bland = True
            else:
                degen_streak = 0
                bland = False

            if since_refactor >= self.refactor_every:
                self.refactor()
                since_refactor = 0


def _solve_standard(sf: _StandardForm, lower, upper, max_pivots=None):
    """Two-phase solve; returns (status, x_int, y_int, pivots)."""
    sx = _Simplex(sf, lower.copy(), upper.copy(), max_pivots=max_pivots)
    slacks, resid = sx.start()

    under = resid < sx.lower[slacks] - 1e-12
    over = resid > sx.upper[slacks] + 1e-12
    if under.any() or over.any():
        sx.phase = 1
        c1 = np.zeros(sf.N)
        orig_lo = sx.lower[slacks].copy()
        orig_up = sx.upper[slacks].copy()
        # shift each violated logical's bounds to contain its current value
        # and pay for the distance back; the target objective is reached
        # exactly when every one of them returns to its true bound
        target = 0.0
        for k in np.flatnonzero(under):
            c = slacks[k]
            sx.lower[c] = resid[k]
            sx.upper[c] = orig_lo[k]
            c1[c] = -1.0
            target -= orig_lo[k]
        for k in np.flatnonzero(over):
            c = slacks[k]
            sx.lower[c] = orig_up[k]
            sx.upper[c] = resid[k]
            c1[c] = 1.0
            target += orig_up[k]

        status = sx.run(c1)
        if status != OPTIMAL:  # pragma: no cover - phase 1 is always bounded
            raise SolverError("phase 1 terminated abnormally", iterations=sx.pivots, phase=1)
        obj1 = float(c1 @ sx.x)
        bscale = 1.0 + np.abs(sf.b).max(initial=0.0)
        if obj1 > target + 1e-7 * (bscale + abs(target)):
            return INFEASIBLE, None, None, sx.pivots

        patched = slacks[under | over]
        sx.lower[patched] = np.where(under[under | over], orig_lo[under | over], sx.lower[patched])
        # restore true bounds and re-tag nonbasic patched logicals
        sx.lower[slacks] = orig_lo
        sx.upper[slacks] = orig_up
        for c in patched:
            if sx.vstat[c] != _BASIC:
                at_lb = abs(sx.x[c] - sx.lower[c]) <= abs(sx.x[c] - sx.upper[c])
                sx.vstat[c] = _AT_LB if at_lb else _AT_UB
                sx.x[c] = sx.lower[c] if at_lb else sx.upper[c]
        sx.refactor()

    sx.phase = 2
    c2 = sf.costs
    status = sx.run(c2)
    if status == UNBOUNDED:
        return UNBOUNDED, None, None, sx.pivots
    sx.refactor()
    y = c2[sx.basis] @ sx.Binv
    return OPTIMAL, sx.x, y, sx.pivots


def _check_primal(p: LinearProgram, x, tol):
    """Largest row/bound violation of a candidate solution."""
    worst = 0.0
    for i in range(p.n_rows):
        lhs = float(p.row_vals[i] @ x[p.row_cols[i]]) if len(p.row_cols[i]) else 0.0
        r = p.rhs[i]
        if p.row_sense[i] == LE:
            worst = max(worst, lhs - r)
        elif p.row_sense[i] == GE:
            worst = max(worst, r - lhs)
        else:
            worst = max(worst, abs(lhs - r))
    for j in range(p.n_vars):
        worst = max(worst, p.lower[j] - x[j], x[j] - p.upper[j])
    return worst


def _solve_lp_bounds(p: LinearProgram, lower=None, upper=None, sf=None, max_pivots=None):
    if sf is None:
        sf = _StandardForm(p)
    lo, up = sf.map_bounds(lower, upper)
    if (lo > up).any():
        return LpSolution(INFEASIBLE, _INF, np.array([]), np.array([]))
    status, x_int, y_int, pivots = _solve_standard(sf, lo, up, max_pivots=max_pivots)
    if status == INFEASIBLE:
        return LpSolution(INFEASIBLE, _INF, np.array([]), np.array([]), pivots)
    if status == UNBOUNDED:
        return LpSolution(UNBOUNDED, -_INF, np.array([]), np.array([]), pivots)
    x = sf.map_back(x_int)
    if lower is not None or upper is not None:
        # overridden bounds are not part of the program rows; clamp drift
        eff_lo = np.array([p.lower[j] if lower is None or lower[j] is None else lower[j]
                           for j in range(p.n_vars)])
        eff_up = np.array([p.upper[j] if upper is None or upper[j] is None else upper[j]
                           for j in range(p.n_vars)])
        x = np.clip(x, eff_lo, eff_up)
    duals = sf.flip * y_int
    obj = float(np.array(p.costs) @ x)
    scale = 1.0 + max(abs(r) for r in p.rhs) if p.n_rows else 1.0
    if lower is None and upper is None and _check_primal(p, x, TOL_FEAS) > TOL_FEAS * scale:
        raise SolverError(
            f"post-solve feasibility check failed after {pivots} pivots",
            iterations=pivots, phase=2,
        )
    return LpSolution(OPTIMAL, obj, x, duals, pivots)


def solve_lp(p: LinearProgram, max_pivots=None) -> LpSolution:
    """Solve a pure LP; binary marks are rejected.

    Infeasibility and unboundedness are reported through ``status``; only
    numerical breakdown raises :class:`SolverError`.
    """
    if any(p.binary):
        raise InstanceError("program has binary variables; use solve_mip")
    return _solve_lp_bounds(p, max_pivots=max_pivots)


def solve_mip(p: LinearProgram, node_limit=100_000, tol_int=TOL_INT) -> LpSolution:
    """Best-bound branch-and-bound over the binary variables.

    The returned solution has exactly integral binaries (the continuous part
    is re-solved with the binaries fixed) and its objective is within the
    branch-and-bound proof tolerance of the true optimum.  Exceeding
    ``node_limit`` raises :class:`NodeLimitError` carrying the incumbent.
    """
    binaries = p.binary_indices()
    if not binaries:
        return solve_lp(p)
    sf = _StandardForm(p)

    root = _solve_lp_bounds(p, sf=sf)
    total_iters = root.iterations
    if root.status == UNBOUNDED:
        return LpSolution(UNBOUNDED, -_INF, np.array([]), np.array([]), total_iters, 1)
    nodes = 1

    incumbent = None
    inc_obj = _INF
    heap = []
    seq = 0
    if root.status == OPTIMAL:
        heapq.heappush(heap, (root.objective, seq, ()))

    def bounds_from(fixes):
        lo = [None] * p.n_vars
        up = [None] * p.n_vars
        for var, val in fixes:
            lo[var] = float(val)
            up[var] = float(val)
        return lo, up

    while heap:
        bound, _, fixes = heapq.heappop(heap)
        if bound >= inc_obj - 1e-9 * (1.0 + abs(inc_obj)):
            continue
        if nodes >= node_limit:
            raise NodeLimitError(
                f"branch-and-bound node limit {node_limit} reached",
                partial=incumbent,
            )
        lo, up = bounds_from(fixes)
        sol = _solve_lp_bounds(p, lo, up, sf=sf)
        nodes += 1
        total_iters += sol.iterations
        if sol.status != OPTIMAL:
            continue
        if sol.objective >= inc_obj - 1e-9 * (1.0 + abs(inc_obj)):
            continue
        frac = np.abs(sol.x[binaries] - np.round(sol.x[binaries]))
        if frac.max(initial=0.0) <= tol_int:
            incumbent = sol
            inc_obj = sol.objective
            continue
        k = int(np.argmax(frac))
        var = binaries[k]
        for val in (0, 1):
            seq += 1
            heapq.heappush(heap, (sol.objective, seq, fixes + ((var, val),)))

    if incumbent is None:
        return LpSolution(INFEASIBLE, _INF, np.array([]), np.array([]), total_iters, nodes)

    # polish: fix the binaries at their integral values and re-solve so the
    # continuous part and the duals are exact for that assignment
    lo = [None] * p.n_vars
    up = [None] * p.n_vars
    for j in binaries:
        v = float(round(incumbent.x[j]))
        lo[j] = v
        up[j] = v
    final = _solve_lp_bounds(p, lo, up, sf=sf)
    total_iters += final.iterations
    if final.status != OPTIMAL:  # pragma: no cover - incumbent was feasible
        raise SolverError("incumbent re-solve failed", iterations=total_iters, phase=2)
    final.iterations = total_iters
    final.nodes = nodes
    return final


# ---------------------------------------------------------------------------
# LP text dump


def _num(v):
    return repr(float(v))


def _safe(name):
    out = "".join(ch if ch.isalnum() or ch in "_.-" else "_" for ch in str(name))
    if not out or out[0].isdigit():
        out = "v" + out
    return out


def _terms(cols, vals, names):
    if len(cols) == 0:
        return "0 " + names[0]
    parts = []
    for j, a in zip(cols, vals):
        sign = "-" if a < 0 else "+"
        parts.append(f"{sign} {_num(abs(a))} {names[j]}")
    joined = " ".join(parts)
    return joined[2:] if joined.startswith("+ ") else joined


def _lp_text(p: LinearProgram):
    names = [_safe(n) for n in p.var_names]
    lines = [f"\\ {p.name}", "Minimize"]
    obj_cols = [j for j, c in enumerate(p.costs) if c != 0.0]
    obj_vals = [p.costs[j] for j in obj_cols]
    lines.append(" obj: " + _terms(obj_cols, obj_vals, names))
    lines.append("Subject To")
    for i in range(p.n_rows):
        body = _terms(p.row_cols[i], p.row_vals[i], names)
        lines.append(f" {_safe(p.row_names[i])}: {body} {p.row_sense[i]} {_num(p.rhs[i])}")
    lines.append("Bounds")
    for j in range(p.n_vars):
        if p.binary[j]:
            continue
        lb, ub = p.lower[j], p.upper[j]
        if lb == 0.0 and ub == _INF:
            continue
        if lb == -_INF and ub == _INF:
            lines.append(f" {names[j]} free")
        elif ub == _INF:
            lines.append(f" {names[j]} >= {_num(lb)}")
        elif lb == -_INF:
            lines.append(f" {names[j]} <= {_num(ub)}")
        else:
            lines.append(f" {_num(lb)} <= {names[j]} <= {_num(ub)}")
    bins = p.binary_indices()
    if bins:
        lines.append("Binaries")
        lines.append(" " + " ".join(names[j] for j in bins))
    lines.append("End")
    return "\n".join(lines) + "\n"

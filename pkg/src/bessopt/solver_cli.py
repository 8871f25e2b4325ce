"""``bessopt-solve``: a small LP-file MILP solver process.

Reads a CPLEX-LP file, solves it, and writes a ``name value`` solution
file. It exists so the file-exchange solver driver always has a working
executable to point at; any other LP-speaking solver can be substituted
through the solver command template.

Solve pipeline (single-threaded scipy/HiGHS underneath):

1. LP relaxation. Infeasible or integral relaxations finish here.
2. Small models go to HiGHS branch-and-bound for a proven optimum.
3. Large models use dive-and-fix: repeatedly pin integer variables that
   sit near integer values in the relaxation and re-solve, backtracking
   on infeasibility. The result is reported as ``feasible`` with the
   true gap against the relaxation bound. HiGHS's own tree search is
   impractical for these instances on one core because it stalls in
   root-node cut separation without ever finding an incumbent.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass

import numpy as np

from .milp import ParsedLP, Solution, parse_lp, write_solution_generic

INT_TOL = 1e-6
SMALL_MODEL_INTEGERS = 1600
SMALL_MODEL_ROWS = 16000


@dataclass
class _Arrays:
    c: np.ndarray
    a: "object"          # scipy.sparse matrix
    row_lb: np.ndarray
    row_ub: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    integrality: np.ndarray
    names: list[str]
    sign: float


def _to_arrays(lp: ParsedLP) -> _Arrays:
    from scipy import sparse

    names = lp.var_names
    index = {n: i for i, n in enumerate(names)}
    n = len(names)
    c = np.zeros(n)
    for name, coeff in lp.objective.items():
        c[index[name]] = coeff
    sign = 1.0
    if lp.sense == "max":
        c, sign = -c, -1.0
    lo = np.zeros(n)
    hi = np.full(n, np.inf)
    integrality = np.zeros(n)
    for name, (a, b) in lp.bounds.items():
        lo[index[name]] = a
        hi[index[name]] = b
    for name in lp.binaries:
        i = index[name]
        integrality[i] = 1
        lo[i] = max(lo[i], 0.0)
        hi[i] = min(hi[i], 1.0)
    for name in lp.generals:
        integrality[index[name]] = 1
    rows, cols, vals = [], [], []
    row_lb = np.empty(len(lp.constraints))
    row_ub = np.empty(len(lp.constraints))
    for r, (coeffs, sense, rhs, _name) in enumerate(lp.constraints):
        for name, coeff in coeffs.items():
            rows.append(r)
            cols.append(index[name])
            vals.append(coeff)
        row_lb[r] = -np.inf if sense == "<=" else rhs
        row_ub[r] = np.inf if sense == ">=" else rhs
    a = sparse.csr_matrix((vals, (rows, cols)), shape=(len(lp.constraints), n))
    return _Arrays(c, a, row_lb, row_ub, lo, hi, integrality, names, sign)


def _run_milp(ar: _Arrays, lo, hi, integrality, time_limit, mip_gap):
    from scipy.optimize import Bounds, LinearConstraint, milp

    cons = []
    if ar.a.shape[0]:
        cons = [LinearConstraint(ar.a, ar.row_lb, ar.row_ub)]
    return milp(
        ar.c,
        constraints=cons,
        integrality=integrality,
        bounds=Bounds(lo, hi),
        options={
            "time_limit": max(1.0, time_limit),
            "mip_rel_gap": mip_gap,
            "presolve": True,
            "disp": False,
        },
    )


def _solve_lp(ar: _Arrays, lo, hi, time_limit):
    return _run_milp(ar, lo, hi, np.zeros_like(ar.integrality), time_limit, 1e-9)


def _fractional(ar: _Arrays, x, lo, hi):
    """Indices of integer variables away from an integer, worst first."""
    idx = np.flatnonzero(ar.integrality > 0)
    if not idx.size:
        return np.array([], dtype=int), np.array([])
    dist = np.abs(x[idx] - np.round(x[idx]))
    free = dist > INT_TOL
    idx, dist = idx[free], dist[free]
    order = np.argsort(-dist)
    return idx[order], dist[order]


def _dive(ar: _Arrays, relax, time_limit, deadline) -> tuple[np.ndarray | None, float | None]:
    """Fix-and-resolve dive; returns (integral x, objective) or (None, None)."""
    import time as _time

    lo, hi = ar.lo.copy(), ar.hi.copy()
    x = relax.x.copy()
    fun = relax.fun
    for _round in range(80):
        if _time.monotonic() > deadline:
            return None, None
        idx, dist = _fractional(ar, x, lo, hi)
        if not idx.size:
            return x, fun
        near = idx[dist <= 0.25]
        batch = near if near.size else idx[-1:]
        trial_lo, trial_hi = lo.copy(), hi.copy()
        vals = np.round(x[batch])
        trial_lo[batch] = np.maximum(trial_lo[batch], vals)
        trial_hi[batch] = np.minimum(trial_hi[batch], vals)
        res = _solve_lp(ar, trial_lo, trial_hi, time_limit)
        if res.status == 0:
            lo, hi = trial_lo, trial_hi
            x, fun = res.x, res.fun
            continue
        # Batch clashed: retry with just the single most-integral fix,
        # then with its flip, then leave that variable to a later round
        # with the rest pinned by LP pressure.
        var = batch[-1]
        ok = False
        cands = sorted({math.floor(x[var]), math.ceil(x[var])},
                       key=lambda v: abs(x[var] - v))
        for val in cands:
            if val < lo[var] - 1e-9 or val > hi[var] + 1e-9:
                continue
            trial_lo, trial_hi = lo.copy(), hi.copy()
            trial_lo[var] = trial_hi[var] = val
            res = _solve_lp(ar, trial_lo, trial_hi, time_limit)
            if res.status == 0:
                lo, hi = trial_lo, trial_hi
                x, fun = res.x, res.fun
                ok = True
                break
        if not ok:
            return None, None
    return None, None


def solve_parsed(lp: ParsedLP, time_limit: float, mip_gap: float) -> Solution:
    import time as _time

    start = _time.monotonic()
    deadline = start + time_limit
    ar = _to_arrays(lp)
    n_int = int((ar.integrality > 0).sum())

    def finish(status, x, fun, gap=None):
        assignment = {}
        objective = None
        if x is not None:
            assignment = {name: float(x[i]) for i, name in enumerate(ar.names)}
            objective = ar.sign * float(fun)
        return Solution(status, objective, assignment, mip_gap=gap)

    relax = _solve_lp(ar, ar.lo, ar.hi, time_limit)
    if relax.status == 2:
        return finish("infeasible", None, None)
    if relax.status == 3:
        return finish("unbounded", None, None)
    if relax.status != 0:
        return finish("error", None, None)
    bound = float(relax.fun)
    idx, _dist = _fractional(ar, relax.x, ar.lo, ar.hi)
    if n_int == 0 or not idx.size:
        x = relax.x.copy()
        if n_int:
            ints = ar.integrality > 0
            x[ints] = np.round(x[ints])
        return finish("optimal", x, relax.fun, gap=0.0)

    if n_int <= SMALL_MODEL_INTEGERS and ar.a.shape[0] <= SMALL_MODEL_ROWS:
        left = max(1.0, deadline - _time.monotonic())
        res = _run_milp(ar, ar.lo, ar.hi, ar.integrality, left, mip_gap)
        if res.status == 0:
            return finish("optimal", res.x, res.fun, gap=getattr(res, "mip_gap", None))
        if res.status == 2:
            return finish("infeasible", None, None)
        if res.status == 3:
            return finish("unbounded", None, None)
        if res.x is not None:
            return finish("feasible", res.x, res.fun, gap=getattr(res, "mip_gap", None))
        bound = max(bound, float(getattr(res, "mip_dual_bound", bound) or bound))

    x, fun = _dive(ar, relax, time_limit, deadline)
    if x is None:
        # Last resort: hand whatever time is left to branch-and-bound.
        left = max(1.0, deadline - _time.monotonic())
        res = _run_milp(ar, ar.lo, ar.hi, ar.integrality, left, mip_gap)
        if res.status == 0:
            return finish("optimal", res.x, res.fun, gap=getattr(res, "mip_gap", None))
        if res.x is not None:
            return finish("feasible", res.x, res.fun, gap=getattr(res, "mip_gap", None))
        return finish("infeasible" if res.status == 2 else "error", None, None)
    gap = abs(fun - bound) / max(1e-12, abs(fun))
    status = "optimal" if gap <= max(mip_gap, 1e-9) else "feasible"
    return finish(status, x, fun, gap=gap)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="bessopt-solve",
        description="Solve a CPLEX-LP file and write a 'name value' solution file.",
    )
    parser.add_argument("lp", help="input LP file")
    parser.add_argument("sol", help="output solution file")
    parser.add_argument("--time-limit", type=float, default=3600.0)
    parser.add_argument("--mip-gap", type=float, default=1e-4)
    args = parser.parse_args(argv)

    try:
        lp = parse_lp(args.lp)
        sol = solve_parsed(lp, args.time_limit, args.mip_gap)
    except Exception as exc:  # report as a parseable error file, not a stack
        write_solution_generic(Solution("error", None, {}), args.sol)
        print(f"bessopt-solve: {exc}", file=sys.stderr)
        return 1
    write_solution_generic(sol, args.sol)
    print(f"bessopt-solve: {sol.status}" + (
        f", objective {sol.objective}" if sol.objective is not None else ""
    ))
    return 0


if __name__ == "__main__":
    sys.exit(main())

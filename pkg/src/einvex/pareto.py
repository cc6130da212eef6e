"""Brute-force grid oracle for (weak) Pareto sets of the composed program.

Completely independent of the invexity machinery: it enumerates a finite
grid of the domain box, filters by the constraints, and compares objective
vectors pairwise.  Its job is to confirm or refute what the certificates
claim, so it shares nothing with them except the problem file.

Dominance uses the package-wide tie tolerance: z strictly dominates y when
every objective of z is below that of y by more than tol; z dominates y
(for the strict Pareto order) when every objective is within tol of being
no worse and at least one is better by more than tol.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import expr as ex
from .errors import GridGuardError, InfeasiblePointError
from .problem import EProblem, ProblemFunction, _jsonable, feasible

MAX_GRID_POINTS = 10_000_000
MAX_PAIRWISE = 20_000


@dataclass(frozen=True)
class GridSpec:
    """Points per axis; axes span the problem box exactly (corners included)."""

    counts: tuple

    def __post_init__(self):
        if not self.counts or any(int(c) < 1 for c in self.counts):
            raise GridGuardError("grid needs at least one point per axis")
        total = math.prod(int(c) for c in self.counts)
        if total > MAX_GRID_POINTS:
            raise GridGuardError(f"grid of {total} points exceeds the guard of {MAX_GRID_POINTS}")

    @staticmethod
    def uniform(count: int, n: int) -> "GridSpec":
        return GridSpec(tuple([count] * n))


def build_grid(problem: EProblem, grid: GridSpec, extra_points=None) -> np.ndarray:
    """Cartesian grid over the box, plus candidate points snapped in."""
    if len(grid.counts) != problem.n:
        raise GridGuardError(f"grid has {len(grid.counts)} axes, problem has {problem.n}")
    axes = [np.linspace(problem.lo[j], problem.hi[j], int(grid.counts[j]))
            for j in range(problem.n)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    snap = [c.x for c in problem.candidates]
    if extra_points is not None:
        snap += [np.asarray(p, dtype=float) for p in np.atleast_2d(extra_points)]
    add = []
    for s in snap:
        s = np.asarray(s, dtype=float).reshape(problem.n)
        if not ((pts == s).all(axis=1).any() or any((a == s).all() for a in add)):
            add.append(s)
    if add:
        pts = np.vstack([pts, np.asarray(add)])
    return pts


def _objective_matrix(problem: EProblem, pts: np.ndarray):
    cols, bad = [], np.zeros(pts.shape[0], dtype=bool)
    for fn in problem.objectives:
        r = problem.composed_values(fn, pts)
        cols.append(r.values)
        bad |= r.invalid | ~np.isfinite(r.values)
    return np.stack(cols, axis=-1), bad


def _feasible_mask(problem: EProblem, pts: np.ndarray, tol: float):
    ok = np.ones(pts.shape[0], dtype=bool)
    for fn in problem.ineq:
        r = problem.composed_values(fn, pts)
        ok &= ~r.invalid & (r.values <= tol)
    for fn in problem.eq:
        r = problem.composed_values(fn, pts)
        ok &= ~r.invalid & (np.abs(r.values) <= tol)
    return ok


def _dominance_masks(F: np.ndarray, tol: float):
    """(weak_pareto, pareto) membership masks for rows of F, O(N^2 p) blockwise."""
    Nf = F.shape[0]
    if Nf > MAX_PAIRWISE:
        raise GridGuardError(
            f"{Nf} feasible points exceed the pairwise guard of {MAX_PAIRWISE}; "
            f"coarsen the grid or use a point query")
    weak = np.ones(Nf, dtype=bool)
    pareto = np.ones(Nf, dtype=bool)
    for start in range(0, Nf, 256):
        blk = F[start:start + 256]
        lt = F[:, None, :] < blk[None, :, :] - tol
        le = F[:, None, :] <= blk[None, :, :] + tol
        strictly = lt.all(axis=2)
        dominates = le.all(axis=2) & lt.any(axis=2)
        weak[start:start + blk.shape[0]] = ~strictly.any(axis=0)
        pareto[start:start + blk.shape[0]] = ~dominates.any(axis=0)
    return weak, pareto


@dataclass
class GridReport:
    grid_points: int
    feasible_points: int
    points: np.ndarray        # feasible points
    objectives: np.ndarray    # objective rows for feasible points
    weak_mask: np.ndarray
    pareto_mask: np.ndarray
    tol: float

    @property
    def weak_points(self):
        return self.points[self.weak_mask]

    @property
    def pareto_points(self):
        return self.points[self.pareto_mask]

    def to_dict(self, list_cap: int = 1000):
        def capped(P):
            out = _jsonable(P[:list_cap])
            return out
        d = {"grid_points": self.grid_points, "feasible_points": self.feasible_points,
             "weak_pareto_count": int(np.count_nonzero(self.weak_mask)),
             "pareto_count": int(np.count_nonzero(self.pareto_mask)),
             "weak_pareto_points": capped(self.weak_points),
             "pareto_points": capped(self.pareto_points)}
        if np.count_nonzero(self.weak_mask) > list_cap or np.count_nonzero(self.pareto_mask) > list_cap:
            d["truncated_at"] = list_cap
        return d


def grid_oracle(problem: EProblem, grid: Optional[GridSpec] = None, tol: float = 1e-9) -> GridReport:
    """Enumerate the grid and classify every feasible point."""
    grid = grid or GridSpec.uniform(33, problem.n)
    pts = build_grid(problem, grid)
    keep = _feasible_mask(problem, pts, tol)
    if not keep.any():
        raise InfeasiblePointError("no feasible grid point at this resolution; refine the grid")
    fpts = pts[keep]
    F, bad = _objective_matrix(problem, fpts)
    if bad.any():
        # a feasible point where an objective fails to evaluate is kept out
        # of the comparison rather than poisoning it
        fpts, F = fpts[~bad], F[~bad]
    weak, pareto = _dominance_masks(F, tol)
    return GridReport(pts.shape[0], fpts.shape[0], fpts, F, weak, pareto, tol)


def is_weak_pareto(problem: EProblem, y, grid: Optional[GridSpec] = None, tol: float = 1e-9):
    """(verdict, witness): witness is a feasible grid point strictly better
    in every objective, when one exists.  The queried point itself always
    joins the comparison set."""
    y = np.asarray(y, dtype=float).reshape(problem.n)
    rep = feasible(problem, y, tol)
    if not rep.feasible:
        raise InfeasiblePointError(
            f"query point {y.tolist()} infeasible (worst violation {rep.worst:.3g})")
    grid = grid or GridSpec.uniform(33, problem.n)
    pts = build_grid(problem, grid, extra_points=y[None, :])
    keep = _feasible_mask(problem, pts, tol)
    fpts = pts[keep]
    F, bad = _objective_matrix(problem, fpts)
    fpts, F = fpts[~bad], F[~bad]
    fy, bady = _objective_matrix(problem, y[None, :])
    if bady.any():
        raise InfeasiblePointError(f"objectives do not evaluate at {y.tolist()}")
    better = (F < fy[0] - tol).all(axis=1)
    if better.any():
        i = int(np.argmax(better))
        return False, {"x": fpts[i].tolist(), "objectives": F[i].tolist(),
                       "query_objectives": fy[0].tolist()}
    return True, None


@dataclass
class MinimizerReport:
    gradient: np.ndarray
    gradient_inf_norm: float
    value: float
    is_minimizer: bool
    witness: Optional[dict]

    def to_dict(self):
        return {"gradient": _jsonable(self.gradient),
                "gradient_inf_norm": _jsonable(self.gradient_inf_norm),
                "value": _jsonable(self.value), "is_minimizer": self.is_minimizer,
                "witness": _jsonable(self.witness) if self.witness else None}


def e_minimizer_check(fn: ProblemFunction, problem: EProblem, xbar,
                      grid: Optional[GridSpec] = None, tol: float = 1e-9) -> MinimizerReport:
    """Stationarity plus a grid check that xbar minimizes (fn o E) on the box."""
    xbar = np.asarray(xbar, dtype=float).reshape(problem.n)
    env = {name: float(v) for name, v in zip(problem.vars, xbar)}
    grad = ex.gradient(fn.composed, env, problem.vars)
    value = ex.evaluate(fn.composed, env)
    grid = grid or GridSpec.uniform(33, problem.n)
    pts = build_grid(problem, grid, extra_points=xbar[None, :])
    r = problem.composed_values(fn, pts)
    ok = ~r.invalid & np.isfinite(r.values)
    vals = np.where(ok, r.values, np.inf)
    is_min = bool(np.all(value <= vals + tol))
    witness = None
    if not is_min:
        i = int(np.argmin(vals))
        witness = {"x": pts[i].tolist(), "value": float(vals[i]), "value_at_xbar": value}
    return MinimizerReport(grad, float(np.max(np.abs(grad))) if grad.size else 0.0,
                           value, is_min, witness)


def dump_csv(problem: EProblem, grid: GridSpec, path, tol: float = 1e-9) -> int:
    """Write every grid point with objectives and classification flags."""
    pts = build_grid(problem, grid)
    keep = _feasible_mask(problem, pts, tol)
    F, bad = _objective_matrix(problem, pts)
    weak = np.zeros(pts.shape[0], dtype=bool)
    pareto = np.zeros(pts.shape[0], dtype=bool)
    comp_rows = np.where(keep & ~bad)[0]
    if comp_rows.size:
        w, p = _dominance_masks(F[comp_rows], tol)
        weak[comp_rows] = w
        pareto[comp_rows] = p
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(list(problem.vars) + [f.name for f in problem.objectives]
                    + ["feasible", "weak_pareto", "pareto"])
        for i in range(pts.shape[0]):
            vals = ["" if bad[i] else f"{v:.12g}" for v in F[i]]
            wr.writerow([f"{v:.12g}" for v in pts[i]] + vals
                        + [int(keep[i]), int(weak[i]), int(pareto[i])])
    return pts.shape[0]

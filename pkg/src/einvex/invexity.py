"""Sampling checkers for the exponential invexity family.

Every checker evaluates its defining inequality on a deterministic sample
set and returns a Verdict.  "Holds" always means "no violation found among
the reported number of samples", never a proof.  Comparisons follow one
convention throughout:

* non-strict inequalities get ``tol`` slack (violation means beyond tol);
* strict inequalities must clear a gap of ``strict_margin`` at samples
  satisfying the side condition of the definition; the checkers for the
  pointwise-gradient (invex) family additionally probe deterministic points
  close to the base point, where a vanishing gap hides from uniform pairs.

Exponential-domain quantities are never formed for decisions: membership in
the value domain is tested on logarithms (log-sum-exp for mixtures) and the
gradient inequalities are normalized by exp(f(E(x0))) > 0, which turns
exp(a) - exp(b) >= d * exp(b) into expm1(a - b) >= d.  A naive
exponential-domain mode is kept for cross-checking on small values.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .errors import SamplingStarvedError
from .problem import (EProblem, ProblemFunction, Region, SampleConfig, Verdict, Witness,
                      box_region, sample_region)
from .rng import SampleStream, tau_grid

PROBE_RADII = (1e-2, 1e-3, 1e-4, 1e-5)
PROBE_CENTERS = 4        # basepoints probed in pair mode
LEVEL_SPAN = 1.0         # headroom above exp(f) for sampled epigraph levels


class PreinvexKind(str, Enum):
    EXP = "preinvex"
    STRICT = "strict-preinvex"
    QUASI = "quasi-preinvex"
    STRICT_QUASI = "strict-quasi-preinvex"


class InvexKind(str, Enum):
    EXP = "invex"
    STRICT = "strict-invex"
    QUASI = "quasi-invex"
    PSEUDO = "pseudo-invex"
    STRICT_PSEUDO = "strict-pseudo-invex"


# ---------------------------------------------------------------------------
# Shared evaluation plumbing
# ---------------------------------------------------------------------------


def _run_blocks(fun, X, threads, min_rows=8192):
    """Apply fun to row blocks of X and concatenate the tuple results.

    fun must map a row array to a tuple of arrays whose leading dimension
    equals the number of input rows, so the merge is order-preserving and
    thread count cannot change any result.
    """
    n = X.shape[0]
    if threads <= 1 or n < min_rows:
        return fun(X)
    blocks = np.array_split(np.arange(n), threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(lambda b: fun(X[b]), blocks))
    return tuple(np.concatenate([p[k] for p in parts], axis=0) for k in range(len(parts[0])))


def _composed_vals(problem, fn, X, threads):
    def one(rows):
        r = problem.composed_values(fn, rows)
        return r.values, r.invalid
    return _run_blocks(one, X, threads)


def _composed_grads(problem, fn, X, threads):
    def one(rows):
        r = problem.composed_grads(fn, rows)
        return r.values, r.grads, r.invalid, r.nondiff
    return _run_blocks(one, X, threads)


def _raw_vals(problem, fn, Z, threads):
    def one(rows):
        r = problem.raw_values(fn, rows)
        return r.values, r.invalid
    return _run_blocks(one, Z, threads)


def _first_true(mask):
    return int(np.argmax(mask))


def _point_list(row):
    return [float(v) for v in np.atleast_1d(row)]


# ---------------------------------------------------------------------------
# Pair sampling for the mixture (preinvex) family
# ---------------------------------------------------------------------------


@dataclass
class PreinvexSamples:
    """Deterministic triples (x, x0, tau) with all values the checks need."""

    X: np.ndarray       # (N, n)
    X0: np.ndarray
    U: np.ndarray       # E(X)
    V: np.ndarray       # E(X0)
    H: np.ndarray       # eta(U, V)
    T: np.ndarray       # (N, k) mixture weights
    A: np.ndarray       # f(E(x))   per pair
    B: np.ndarray       # f(E(x0))  per pair
    C: np.ndarray       # (N, k) f at the combined point
    invalid_pair: np.ndarray
    invalid_comb: np.ndarray

    @property
    def mix_log(self):
        """log(tau*exp(A) + (1 - tau)*exp(B)) without leaving the log domain."""
        with np.errstate(divide="ignore"):
            lt = np.log(self.T)
            l1 = np.log1p(-self.T)
        return np.logaddexp(lt + self.A[:, None], l1 + self.B[:, None])

    @property
    def max_log(self):
        return np.maximum(self.A, self.B)[:, None]

    def first_invalid_point(self):
        if self.invalid_pair.any():
            i = _first_true(self.invalid_pair)
            return self.X[i], self.X0[i], None
        flat = _first_true(self.invalid_comb)
        i, t = divmod(flat, self.T.shape[1])
        return self.X[i], self.X0[i], float(self.T[i, t])


def preinvex_pairs(fn: ProblemFunction, problem: EProblem, cfg: SampleConfig,
                   region: Optional[Region] = None) -> PreinvexSamples:
    """Draw the shared (x, x0, tau) sample set and evaluate f on it.

    The same seed always yields the same pairs for every checker in this
    module, which is what makes the definitional cross-checks (epigraph vs
    mixture inequality, level sets vs the max form) sample-exact.
    """
    region = region or box_region(problem, cfg.tol)
    X = sample_region(problem, SampleStream(cfg.seed, "pairs-x"), cfg.n_pairs, region)
    X0 = sample_region(problem, SampleStream(cfg.seed, "pairs-x0"), cfg.n_pairs, region)
    T = tau_grid(SampleStream(cfg.seed, "tau"), cfg.n_pairs, cfg.n_tau)

    U, bad_u = problem.e_map(X)
    V, bad_v = problem.e_map(X0)
    H, bad_h = problem.eta_map(U, V)
    A, bad_a = _composed_vals(problem, fn, X, cfg.threads)
    B, bad_b = _composed_vals(problem, fn, X0, cfg.threads)
    invalid_pair = bad_u | bad_v | bad_h | bad_a | bad_b | ~np.isfinite(A) | ~np.isfinite(B)

    Z = V[:, None, :] + T[:, :, None] * H[:, None, :]
    C_flat, bad_c = _raw_vals(problem, fn, Z.reshape(-1, problem.n), cfg.threads)
    C = C_flat.reshape(T.shape)
    invalid_comb = (bad_c | ~np.isfinite(C_flat)).reshape(T.shape) | invalid_pair[:, None]
    return PreinvexSamples(X, X0, U, V, H, T, A, B, C, invalid_pair, invalid_comb)


def preinvex_masks(s: PreinvexSamples, kind: PreinvexKind, cfg: SampleConfig, mode: str = "log"):
    """Per-sample (satisfied, nonvacuous) masks for one definition.

    In "naive" mode the same thresholds are applied to exponentials
    directly (slack becomes the factor exp(tol), margins exp(-margin)), so
    verdicts agree with the log path wherever the exponentials are finite.
    """
    tol, margin = cfg.tol, cfg.strict_margin
    interior = (s.T > tol) & (s.T < 1.0 - tol)
    if mode == "log":
        mix, mx, c = s.mix_log, s.max_log, s.C
        slack, gap = tol, margin
    elif mode == "naive":
        with np.errstate(over="ignore"):
            ea, eb, c = np.exp(s.A), np.exp(s.B), np.exp(s.C)
            mix = s.T * ea[:, None] + (1.0 - s.T) * eb[:, None]
            mx = np.maximum(ea, eb)[:, None]
        slack, gap = None, None  # multiplicative, applied below
    else:
        raise ValueError(f"unknown mode {mode!r}")

    def le(lhs, rhs, add, mul):
        if mode == "log":
            return lhs <= rhs + add
        return lhs <= rhs * mul

    if kind == PreinvexKind.EXP:
        sat = le(c, mix, tol, math.exp(tol))
        nonvac = np.ones_like(sat)
    elif kind == PreinvexKind.STRICT:
        sep = (np.max(np.abs(s.U - s.V), axis=1) > tol)[:, None]
        cond = interior & sep
        sat = ~cond | le(c, mix, -margin, math.exp(-margin))
        nonvac = cond
    elif kind == PreinvexKind.QUASI:
        sat = le(c, mx, tol, math.exp(tol))
        nonvac = np.ones_like(sat)
    elif kind == PreinvexKind.STRICT_QUASI:
        sep = (np.max(np.abs(s.X - s.X0), axis=1) > tol)[:, None]
        cond = interior & sep
        sat = ~cond | le(c, mx, -margin, math.exp(-margin))
        nonvac = cond
    else:
        raise ValueError(f"not a mixture-family kind: {kind}")
    return sat, nonvac


def preinvex_sides(fn: ProblemFunction, problem: EProblem, x, x0, tau: float) -> dict:
    """Scalar evaluation of both sides of the mixture inequality at one triple."""
    x = np.asarray(x, float).reshape(1, -1)
    x0 = np.asarray(x0, float).reshape(1, -1)
    U, _ = problem.e_map(x)
    V, _ = problem.e_map(x0)
    H, _ = problem.eta_map(U, V)
    z = V + tau * H
    a = float(problem.composed_values(fn, x).values[0])
    b = float(problem.composed_values(fn, x0).values[0])
    c = float(problem.raw_values(fn, z).values[0])
    lt = math.log(tau) if tau > 0.0 else -math.inf
    l1 = math.log1p(-tau) if tau < 1.0 else -math.inf
    mix = float(np.logaddexp(lt + a, l1 + b))
    return {"a": a, "b": b, "c": c, "combined": z[0].tolist(),
            "mix_log": mix, "max_log": max(a, b),
            "left": math.exp(c) if c < 700 else math.inf,
            "right_mix": math.exp(mix) if mix < 700 else math.inf,
            "right_max": math.exp(max(a, b)) if max(a, b) < 700 else math.inf}


def _verdict_from(sat, nonvac, cfg, vacuous_policy, witness_fn, invalid=None, invalid_point_fn=None):
    if invalid is not None and invalid.any():
        x, x0, tau = invalid_point_fn()
        at = f"x={_point_list(x)}" + (f", x0={_point_list(x0)}" if x0 is not None else "")
        if tau is not None:
            at += f", tau={tau}"
        return Verdict.inconclusive(f"evaluation failed at {at}", checked=int(sat.size))
    viol = ~sat
    if viol.any():
        return Verdict.fails(witness_fn(_first_true(viol)), checked=int(sat.size))
    nv = int(np.count_nonzero(nonvac))
    if nv == 0 and vacuous_policy == "inconclusive":
        return Verdict.inconclusive("all samples were vacuous for this definition", checked=int(sat.size))
    return Verdict.holds(checked=int(sat.size), nonvacuous=nv)


def check_preinvex(fn: ProblemFunction, problem: EProblem, kind: PreinvexKind,
                   cfg: SampleConfig = SampleConfig(), region: Optional[Region] = None,
                   mode: str = "log", vacuous_policy: str = "inconclusive") -> Verdict:
    """Check one mixture-family definition of exp(f) along eta-paths."""
    kind = PreinvexKind(kind)
    try:
        s = preinvex_pairs(fn, problem, cfg, region)
    except SamplingStarvedError as e:
        return Verdict.inconclusive(str(e))
    sat, nonvac = preinvex_masks(s, kind, cfg, mode)

    def witness(flat):
        i, t = divmod(flat, s.T.shape[1])
        tau = float(s.T[i, t])
        sides = preinvex_sides(fn, problem, s.X[i], s.X0[i], tau)
        strictish = kind in (PreinvexKind.STRICT, PreinvexKind.STRICT_QUASI)
        right_key = "right_mix" if kind in (PreinvexKind.EXP, PreinvexKind.STRICT) else "right_max"
        cmp = ("strict gap below margin" if strictish else "left > right beyond tol")
        return Witness(x=_point_list(s.X[i]), x0=_point_list(s.X0[i]), tau=tau,
                       left=sides["left"], right=sides[right_key], comparison=cmp, index=flat,
                       extra={"log_left": sides["c"],
                              "log_right": sides["mix_log"] if right_key == "right_mix" else sides["max_log"],
                              "combined": sides["combined"]})

    return _verdict_from(sat, nonvac, cfg, vacuous_policy, witness,
                         invalid=s.invalid_comb, invalid_point_fn=s.first_invalid_point)


# ---------------------------------------------------------------------------
# Pointwise-gradient (invex) family
# ---------------------------------------------------------------------------


def _probe_points(centers, problem, region, tol):
    """Deterministic points approaching each center, clipped to the box.

    Directions: the normalized all-ones diagonal first, then +/- axes and
    the negative diagonal; radii decrease through PROBE_RADII scaled by the
    box diameter.  Used by strict kinds, whose margin must survive x -> x0.
    """
    n = problem.n
    diag = np.ones(n) / math.sqrt(n)
    dirs = [diag] + [e for e in np.eye(n)] + [-diag] + [-e for e in np.eye(n)]
    scale = max(1.0, float(np.linalg.norm(problem.hi - problem.lo)))
    xs, x0s = [], []
    for c in np.atleast_2d(centers):
        for r in PROBE_RADII:
            for d in dirs:
                p = np.clip(c + r * scale * d, problem.lo, problem.hi)
                if np.max(np.abs(p - c)) <= tol:
                    continue
                if bool(region.contains(p[None, :])[0]):
                    xs.append(p)
                    x0s.append(c)
    if not xs:
        return np.empty((0, n)), np.empty((0, n))
    return np.asarray(xs), np.asarray(x0s)


@dataclass
class InvexSamples:
    X: np.ndarray      # (N, n) moving points
    X0: np.ndarray     # (N, n) base points
    A: np.ndarray      # f(E(x))
    B: np.ndarray      # f(E(x0))
    GX: np.ndarray     # gradient of (f o E) at x   (used by the monotone check)
    G0: np.ndarray     # gradient of (f o E) at x0
    H: np.ndarray      # eta(E(x), E(x0))
    D: np.ndarray      # G0 . H
    invalid: np.ndarray
    nondiff: np.ndarray
    n_regular: int     # samples before appended probes

    def first_bad_point(self):
        bad = self.invalid | self.nondiff
        i = _first_true(bad)
        return self.X[i], self.X0[i], None


def invex_pairs(fn: ProblemFunction, problem: EProblem, cfg: SampleConfig,
                at=None, region: Optional[Region] = None, probes: bool = False,
                want_gx: bool = False) -> InvexSamples:
    """Sample base/moving pairs and the gradient-side data.

    With ``at`` fixed, x0 is constant and x is drawn from the region.  In
    pair mode each drawn pair is used in both orientations, so any verdict
    is automatically symmetric in the roles of x and x0.
    """
    region = region or box_region(problem, cfg.tol)
    X = sample_region(problem, SampleStream(cfg.seed, "pairs-x"), cfg.n_pairs, region)
    if at is None:
        X0 = sample_region(problem, SampleStream(cfg.seed, "pairs-x0"), cfg.n_pairs, region)
        Xs, X0s = np.vstack([X, X0]), np.vstack([X0, X])
        centers = X0[:PROBE_CENTERS]
    else:
        x0 = np.asarray(at, dtype=float).reshape(problem.n)
        Xs, X0s = X, np.tile(x0, (X.shape[0], 1))
        centers = x0[None, :]
    n_regular = Xs.shape[0]
    if probes:
        P, P0 = _probe_points(centers, problem, region, cfg.tol)
        if P.size:
            Xs, X0s = np.vstack([Xs, P]), np.vstack([X0s, P0])

    A, bad_a = _composed_vals(problem, fn, Xs, cfg.threads)
    if want_gx:
        _, GX, bad_gx, nd_gx = _composed_grads(problem, fn, Xs, cfg.threads)
    else:
        GX = np.zeros_like(Xs)
        bad_gx = np.zeros(Xs.shape[0], dtype=bool)
        nd_gx = bad_gx
    B, G0, bad_g, nd = _composed_grads(problem, fn, X0s, cfg.threads)
    U, bad_u = problem.e_map(Xs)
    V, bad_v = problem.e_map(X0s)
    H, bad_h = problem.eta_map(U, V)
    D = np.einsum("ij,ij->i", G0, H)
    invalid = bad_a | bad_g | bad_gx | bad_u | bad_v | bad_h | ~np.isfinite(A) | ~np.isfinite(B)
    return InvexSamples(Xs, X0s, A, B, GX, G0, H, D, invalid, (nd | nd_gx) & ~invalid, n_regular)


def invex_masks(s: InvexSamples, kind: InvexKind, cfg: SampleConfig):
    """Per-sample (satisfied, nonvacuous) masks, normalized by exp(B)."""
    tol, margin = cfg.tol, cfg.strict_margin
    lhs = np.expm1(s.A - s.B)
    sep = np.max(np.abs(s.X - s.X0), axis=1) > tol
    if kind == InvexKind.EXP:
        sat = lhs >= s.D - tol
        nonvac = np.ones_like(sat)
    elif kind == InvexKind.STRICT:
        sat = ~sep | (lhs >= s.D + margin)
        nonvac = sep
    elif kind == InvexKind.QUASI:
        ante = s.A <= s.B + tol
        sat = ~ante | (s.D <= tol)
        nonvac = ante
    elif kind == InvexKind.PSEUDO:
        ante = s.A < s.B - tol
        sat = ~ante | (s.D <= tol)
        nonvac = ante
    elif kind == InvexKind.STRICT_PSEUDO:
        cond = (s.A <= s.B + tol) & sep
        sat = ~cond | (s.D <= -margin)
        nonvac = cond
    else:
        raise ValueError(f"not a gradient-family kind: {kind}")
    return sat, nonvac


def invex_sides(fn: ProblemFunction, problem: EProblem, x, x0) -> dict:
    """Scalar evaluation of the gradient inequality data at one pair."""
    x = np.asarray(x, float).reshape(1, -1)
    x0 = np.asarray(x0, float).reshape(1, -1)
    a = float(problem.composed_values(fn, x).values[0])
    gr = problem.composed_grads(fn, x0)
    b = float(gr.values[0])
    g0 = gr.grads[0]
    U, _ = problem.e_map(x)
    V, _ = problem.e_map(x0)
    H, _ = problem.eta_map(U, V)
    d = float(np.dot(g0, H[0]))
    eb = math.exp(b) if b < 700 else math.inf
    return {"a": a, "b": b, "grad0": [float(v) for v in g0], "eta": H[0].tolist(), "d": d,
            "left": (math.exp(a) if a < 700 else math.inf) - eb,
            "right": d * eb,
            "norm_left": float(np.expm1(a - b)), "norm_right": d}


_GRADIENT_KINDS = {InvexKind.QUASI, InvexKind.PSEUDO, InvexKind.STRICT_PSEUDO}


def check_invex(fn: ProblemFunction, problem: EProblem, kind: InvexKind,
                cfg: SampleConfig = SampleConfig(), at=None, region: Optional[Region] = None,
                vacuous_policy: str = "inconclusive") -> Verdict:
    """Check one gradient-family definition at sampled pairs.

    ``at`` pins the base point (the mode certificates use); otherwise both
    orientations of each sampled pair are tested.  Strict kinds also test
    deterministic probes near base points: "holds" for them means the
    strict gap stays above the margin even arbitrarily close to x0 in the
    probed directions.
    """
    kind = InvexKind(kind)
    strict = kind in (InvexKind.STRICT, InvexKind.STRICT_PSEUDO)
    try:
        s = invex_pairs(fn, problem, cfg, at=at, region=region, probes=strict)
    except SamplingStarvedError as e:
        return Verdict.inconclusive(str(e))
    if (s.invalid | s.nondiff).any():
        x, x0, _ = s.first_bad_point()
        what = "gradient" if s.nondiff.any() and not s.invalid.any() else "evaluation"
        return Verdict.inconclusive(
            f"{what} failed at x={_point_list(x)}, x0={_point_list(x0)}",
            checked=int(s.A.size))
    sat, nonvac = invex_masks(s, kind, cfg)

    def witness(i):
        sides = invex_sides(fn, problem, s.X[i], s.X0[i])
        if kind in (InvexKind.EXP, InvexKind.STRICT):
            cmp = ("strict gap below margin" if kind == InvexKind.STRICT
                   else "left < right beyond tol")
            return Witness(x=_point_list(s.X[i]), x0=_point_list(s.X0[i]),
                           left=sides["left"], right=sides["right"], comparison=cmp, index=int(i),
                           extra={"norm_left": sides["norm_left"], "norm_right": sides["norm_right"],
                                  "probe": bool(i >= s.n_regular)})
        cmp = "antecedent held but gradient term not below threshold"
        return Witness(x=_point_list(s.X[i]), x0=_point_list(s.X0[i]),
                       left=sides["d"], right=0.0, comparison=cmp, index=int(i),
                       extra={"a": sides["a"], "b": sides["b"], "probe": bool(i >= s.n_regular)})

    return _verdict_from(sat, nonvac, cfg, vacuous_policy, witness)


def gradient_monotonicity(fn: ProblemFunction, problem: EProblem,
                          cfg: SampleConfig = SampleConfig(), strict: bool = False,
                          region: Optional[Region] = None, at=None,
                          vacuous_policy: str = "inconclusive") -> Verdict:
    """Monotone-gradient consequence of the invexity inequality.

    Tests (grad F(x) e^{F(x)} - grad F(x0) e^{F(x0)}) . eta >= 0 with both
    sides divided by e^{max(F(x), F(x0))}, which keeps every quantity
    representable regardless of the magnitude of F.
    """
    try:
        s = invex_pairs(fn, problem, cfg, at=at, region=region, probes=strict, want_gx=True)
    except SamplingStarvedError as e:
        return Verdict.inconclusive(str(e))
    if (s.invalid | s.nondiff).any():
        x, x0, _ = s.first_bad_point()
        return Verdict.inconclusive(
            f"evaluation failed at x={_point_list(x)}, x0={_point_list(x0)}", checked=int(s.A.size))
    m = np.maximum(s.A, s.B)
    gx_eta = np.einsum("ij,ij->i", s.GX, s.H)
    term = gx_eta * np.exp(s.A - m) - s.D * np.exp(s.B - m)
    if strict:
        sep = np.max(np.abs(s.X - s.X0), axis=1) > cfg.tol
        sat = ~sep | (term >= cfg.strict_margin)
        nonvac = sep
    else:
        sat = term >= -cfg.tol
        nonvac = np.ones_like(sat)

    def witness(i):
        a, b = float(s.A[i]), float(s.B[i])
        mm = max(a, b)
        tval = float(gx_eta[i] * math.exp(a - mm) - s.D[i] * math.exp(b - mm))
        unnorm = (gx_eta[i] * math.exp(a) - s.D[i] * math.exp(b)) if mm < 700 else math.inf
        return Witness(x=_point_list(s.X[i]), x0=_point_list(s.X0[i]),
                       left=float(unnorm) if math.isfinite(unnorm) else tval, right=0.0,
                       comparison=("strict gap below margin" if strict else "left < right beyond tol"),
                       index=int(i), extra={"normalized": tval, "scale_log": mm,
                                            "probe": bool(i >= s.n_regular)})

    return _verdict_from(sat, nonvac, cfg, vacuous_policy, witness)


# ---------------------------------------------------------------------------
# Epigraph and level-set forms
# ---------------------------------------------------------------------------


def epigraph_invex_check(fn: ProblemFunction, problem: EProblem,
                         cfg: SampleConfig = SampleConfig(), region: Optional[Region] = None,
                         level_span: float = LEVEL_SPAN) -> Verdict:
    """Invexity of the region above exp(f) over the image of E.

    Each sampled pair is lifted twice: once with tight levels (exactly
    exp(f) at both endpoints) and once with independently drawn headroom in
    (0, level_span].  The tight instance makes this check fail exactly when
    the mixture inequality fails on the same sample; the slack instance
    exercises genuinely interior epigraph points.
    """
    try:
        s = preinvex_pairs(fn, problem, cfg, region)
    except SamplingStarvedError as e:
        return Verdict.inconclusive(str(e))
    if s.invalid_comb.any():
        x, x0, tau = s.first_invalid_point()
        return Verdict.inconclusive(
            f"evaluation failed at x={_point_list(x)}, x0={_point_list(x0)}, tau={tau}",
            checked=int(s.C.size) * 2)
    N = s.A.shape[0]
    r1 = SampleStream(cfg.seed, "level-x").uniform(N)
    r2 = SampleStream(cfg.seed, "level-x0").uniform(N)
    with np.errstate(divide="ignore"):
        lift_a = np.logaddexp(s.A, np.log(level_span * r1))
        lift_b = np.logaddexp(s.B, np.log(level_span * r2))
        lt = np.log(s.T)
        l1 = np.log1p(-s.T)
    mix_tight = s.mix_log
    mix_rand = np.logaddexp(lt + lift_a[:, None], l1 + lift_b[:, None])
    sat = np.stack([s.C <= mix_tight + cfg.tol, s.C <= mix_rand + cfg.tol], axis=-1)

    if not sat.all():
        flat = _first_true(~sat)
        i, rest = divmod(flat, sat.shape[1] * 2)
        t, variant = divmod(rest, 2)
        tau = float(s.T[i, t])
        level_a = float(s.A[i] if variant == 0 else lift_a[i])
        level_b = float(s.B[i] if variant == 0 else lift_b[i])
        with np.errstate(divide="ignore"):
            lvl = float(np.logaddexp((np.log(tau) if tau > 0 else -np.inf) + level_a,
                                     (np.log1p(-tau) if tau < 1 else -np.inf) + level_b))
        w = Witness(x=_point_list(s.X[i]), x0=_point_list(s.X0[i]), tau=tau,
                    left=math.exp(float(s.C[i, t])) if s.C[i, t] < 700 else math.inf,
                    right=math.exp(lvl) if lvl < 700 else math.inf,
                    comparison="combined point above the combined level", index=flat,
                    extra={"level_x": math.exp(level_a) if level_a < 700 else math.inf,
                           "level_x0": math.exp(level_b) if level_b < 700 else math.inf,
                           "tight": variant == 0})
        return Verdict.fails(w, checked=int(sat.size))
    return Verdict.holds(checked=int(sat.size), nonvacuous=int(sat.size))


def level_set_invex_check(fn: ProblemFunction, problem: EProblem,
                          levels: Optional[Sequence[float]] = None,
                          cfg: SampleConfig = SampleConfig(),
                          region: Optional[Region] = None) -> Verdict:
    """Invexity of sublevel sets of exp(f) over the image of E.

    With explicit ``levels`` (thresholds on exp(f), so positive), pairs are
    restricted to each sublevel set; levels catching no sampled pair are
    reported and make the overall verdict inconclusive rather than holds.
    Without levels every pair is tested against its own binding level
    max(exp(f(E(x))), exp(f(E(x0)))), the tightest set containing it.
    """
    try:
        s = preinvex_pairs(fn, problem, cfg, region)
    except SamplingStarvedError as e:
        return Verdict.inconclusive(str(e))
    if s.invalid_comb.any():
        x, x0, tau = s.first_invalid_point()
        return Verdict.inconclusive(
            f"evaluation failed at x={_point_list(x)}, x0={_point_list(x0)}, tau={tau}",
            checked=int(s.C.size))

    def fail_at(flat, level_log):
        i, t = divmod(flat, s.T.shape[1])
        w = Witness(x=_point_list(s.X[i]), x0=_point_list(s.X0[i]), tau=float(s.T[i, t]),
                    left=math.exp(float(s.C[i, t])) if s.C[i, t] < 700 else math.inf,
                    right=math.exp(level_log) if level_log < 700 else math.inf,
                    comparison="combined point left the sublevel set", index=flat,
                    extra={"level": math.exp(level_log) if level_log < 700 else math.inf})
        return Verdict.fails(w, checked=int(s.C.size))

    if levels is None:
        mx = s.max_log
        sat = s.C <= mx + cfg.tol
        if not sat.all():
            flat = _first_true(~sat)
            return fail_at(flat, float(mx[flat // s.T.shape[1], 0]))
        return Verdict.holds(checked=int(sat.size), nonvacuous=int(sat.size))

    empty, checked = [], 0
    for lvl in levels:
        if not (lvl > 0.0):
            raise ValueError("levels must be positive (they bound exp(f))")
        log_lvl = math.log(lvl)
        qualify = (s.A <= log_lvl) & (s.B <= log_lvl)
        if not qualify.any():
            empty.append(lvl)
            continue
        sat = ~qualify[:, None] | (s.C <= log_lvl + cfg.tol)
        checked += int(np.count_nonzero(qualify)) * s.T.shape[1]
        if not sat.all():
            return fail_at(_first_true(~sat), log_lvl)
    if empty:
        return Verdict.inconclusive(
            f"no sampled pair lies in the sublevel set for levels {empty}", checked=checked)
    return Verdict.holds(checked=checked, nonvacuous=checked)

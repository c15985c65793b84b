"""The l1 solvers the recovery studies exercise.

* :func:`lasso_homotopy` — penalized l1 regression solved by tracking the
  regularization path from ``lam_max`` down to the requested ``lam``,
  handling activation and sign-violation removal events.
* :func:`basis_pursuit` — equality-constrained l1 minimization, run as the
  homotopy path end point at ``lam = 1e-10`` with a span feasibility check.
* :func:`bpdn_constrained` — residual-constrained l1 minimization by
  bisection on ``log lam`` over the (monotone) lasso Pareto path.
* :func:`signal_error_bp` — joint sparse-signal / sparse-error recovery on
  the identity-augmented dictionary.
* :func:`l0_oracle` — exhaustive smallest-support search at desk scale; the
  independent ground truth the l1 routes are checked against.
* :func:`threshold_and_refit` — support thresholding followed by a pivoted
  QR least-squares refit on the surviving columns.
"""

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Optional

import numpy as np
import scipy.linalg

from . import numerics
from .coherence import Dictionary
from .errors import (
    CombinatorialBlowup,
    DimensionMismatch,
    EmptySupport,
    Infeasible,
    NoSolution,
    PathStall,
)

# Support threshold used wherever an l0 count is reported.
DEFAULT_SUPPORT_THRESHOLD = 1e-10

# The trade-off parameter that makes the lasso act as basis pursuit.
BP_LAMBDA = 1e-10

# Relative residual above which a target is declared outside the span.
SPAN_TOL = 1e-8

# Enumeration budget for the l0 oracle.
ORACLE_BUDGET = 10**6

_TIE = 1e-12


@dataclass
class CoefVector:
    """A coefficient vector with an explicit support threshold.

    All l0 counts are taken relative to ``threshold`` (entries with
    ``|entry| > threshold`` count as support); l1/l2 norms use every entry.
    ``flag`` records solver-side caveats ("trivial_feasible",
    "no_convergence", ...); ``iterations`` the solver's event/sweep count.
    """

    entries: np.ndarray
    threshold: float = DEFAULT_SUPPORT_THRESHOLD
    flag: Optional[str] = None
    iterations: int = 0

    def __post_init__(self):
        self.entries = numerics.as_vector(self.entries)
        self.entries.flags.writeable = False

    def support(self, tau: Optional[float] = None) -> np.ndarray:
        t = self.threshold if tau is None else tau
        return np.flatnonzero(np.abs(self.entries) > t)

    def l0(self, tau: Optional[float] = None) -> int:
        return int(self.support(tau).size)

    def l1(self) -> float:
        return float(np.sum(np.abs(self.entries)))

    def l2(self) -> float:
        return float(np.linalg.norm(self.entries))


@dataclass
class SolverConfig:
    """Solver knobs: exactly one of ``lam`` (penalized mode) and ``epsilon``
    (residual-constrained mode) may be set per call."""

    lam: Optional[float] = None
    epsilon: Optional[float] = None
    max_iters: int = 10_000
    conv_tol: float = 1e-8
    support_threshold: float = DEFAULT_SUPPORT_THRESHOLD

    def __post_init__(self):
        if self.lam is not None and self.epsilon is not None:
            raise ValueError("set either lam or epsilon, not both")


def _as_design(D) -> np.ndarray:
    return D.data if isinstance(D, Dictionary) else numerics.as_matrix(D)


def _active_solve(XA, y, s):
    """Return (p, q) with p = argmin ||XA p - y|| and q = (XA'XA)^{-1} s.

    Uses the QR factors of the active block; falls back to pivoted least
    squares (with a min-norm pseudo-solve for q) when the block is wider
    than it is tall or numerically rank-deficient.
    """
    if XA.shape[1] <= XA.shape[0]:
        Q, R = scipy.linalg.qr(XA, mode="economic")
        diag = np.abs(np.diag(R))
        if diag.min() > 1e-12 * max(diag.max(), 1e-300):
            p = scipy.linalg.solve_triangular(R, Q.T @ y, lower=False)
            w = scipy.linalg.solve_triangular(R, s, lower=False, trans="T")
            q = scipy.linalg.solve_triangular(R, w, lower=False)
            return p, q
    p = numerics.least_squares(XA, y)
    G = XA.T @ XA
    q = np.linalg.lstsq(G, s, rcond=None)[0]
    return p, q


def lasso_homotopy(D, y, lam: float, cfg: Optional[SolverConfig] = None) -> CoefVector:
    """Minimize ``0.5 ||y - X a||_2^2 + lam ||a||_1`` along the homotopy path.

    The path starts at ``lam_max = ||X'y||_inf`` (where a = 0) and follows
    the piecewise-linear solution downward.  Tie-breaking is deterministic:
    at coinciding breakpoints removals are processed before activations,
    then the lowest column index wins.  The KKT conditions are checked on
    return; violation raises ``PathStall``.
    """
    cfg = cfg or SolverConfig()
    X = _as_design(D)
    y = numerics.as_vector(y)
    if X.shape[0] != y.shape[0]:
        raise DimensionMismatch(
            f"dictionary has m={X.shape[0]} but target has length {y.shape[0]}"
        )
    if lam <= 0:
        raise ValueError(f"lam must be positive, got {lam}")
    n = X.shape[1]
    Xty = X.T @ y
    lam_max = float(np.max(np.abs(Xty))) if n else 0.0
    if lam >= lam_max:
        return CoefVector(np.zeros(n), cfg.support_threshold, iterations=0)

    j0 = int(np.argmax(np.abs(Xty)))  # first max = lowest index on ties
    active = [j0]
    signs = [1.0 if Xty[j0] > 0 else -1.0]
    lam_cur = lam_max
    iterations = 0
    # The just-processed column is blocked for one step so its own
    # breakpoint echo cannot ping-pong the active set; the seed activation
    # at lam_max is the first such event.
    last_col = j0
    p = q = None

    while True:
        iterations += 1
        if iterations > cfg.max_iters:
            raise PathStall(
                f"no progress within {cfg.max_iters} path events "
                f"(lam_cur={lam_cur:.3e}, target={lam:.3e})"
            )
        XA = X[:, active]
        s = np.array(signs)
        p, q = _active_solve(XA, y, s)
        # Correlations are affine in lam: c(lam) = u + lam * w, with
        # u_j = 0 and w_j = sign_j on the active set.
        u = X.T @ (y - XA @ p)
        w = X.T @ (XA @ q)
        # Coinciding breakpoints are processed one event per iteration, so
        # candidates at (numerically) the current lam stay admissible.
        ceiling = lam_cur * (1.0 + 1e-12) + 1e-300

        inactive = np.ones(n, dtype=bool)
        inactive[active] = False
        if last_col >= 0:
            inactive[last_col] = False
        lam_act, j_act, s_act = -np.inf, -1, 0.0
        idx = np.flatnonzero(inactive)
        if idx.size:
            with np.errstate(divide="ignore", invalid="ignore"):
                cand_pos = u[idx] / (1.0 - w[idx])
                cand_neg = -u[idx] / (1.0 + w[idx])
            for cand, sign_new in ((cand_pos, 1.0), (cand_neg, -1.0)):
                valid = np.isfinite(cand) & (cand > lam) & (cand <= ceiling)
                if np.any(valid):
                    vi = idx[valid]
                    vc = cand[valid]
                    top = float(np.max(vc))
                    if top > lam_act + _TIE:
                        near = vi[vc >= top - _TIE]
                        lam_act, j_act, s_act = top, int(near.min()), sign_new
                    elif top > lam_act - _TIE:
                        near = vi[vc >= lam_act - _TIE]
                        j_new = int(near.min())
                        if j_new < j_act:
                            j_act, s_act = j_new, sign_new

        lam_rem, a_rem = -np.inf, -1
        with np.errstate(divide="ignore", invalid="ignore"):
            cross = p / q
        for pos, cand in enumerate(cross):
            if active[pos] == last_col:
                continue
            if math.isfinite(cand) and lam < cand <= ceiling:
                if cand > lam_rem + _TIE or (
                    cand > lam_rem - _TIE and active[pos] < active[a_rem]
                ):
                    lam_rem, a_rem = cand, pos

        if lam_act <= -np.inf and lam_rem <= -np.inf:
            break  # path is linear down to the target lam
        if lam_rem >= lam_act - _TIE:
            lam_cur = min(lam_rem, lam_cur)
            last_col = active[a_rem]
            del active[a_rem]
            del signs[a_rem]
            if not active:
                # a lone active coefficient can only vanish at lam_max,
                # which its own one-step block excludes; reaching this means
                # the breakpoint arithmetic lost all precision
                raise PathStall(f"active set emptied at lam={lam_cur:.3e}")
        else:
            lam_cur = min(lam_act, lam_cur)
            last_col = j_act
            active.append(j_act)
            signs.append(s_act)

    alpha = np.zeros(n)
    alpha[active] = p - lam * q
    resid_corr = Xty - X.T @ (X @ alpha)
    kkt = float(np.max(np.abs(resid_corr))) if n else 0.0
    if kkt > lam + cfg.conv_tol:
        raise PathStall(
            f"KKT violation on return: ||X'(y - Xa)||_inf = {kkt:.3e} "
            f"> lam + conv_tol = {lam + cfg.conv_tol:.3e}"
        )
    return CoefVector(alpha, cfg.support_threshold, iterations=iterations)


def basis_pursuit(D, y, cfg: Optional[SolverConfig] = None) -> CoefVector:
    """Minimum-l1 representation subject to ``X a = y``.

    Runs the homotopy path down to ``lam = 1e-10``.  Requires ``y`` to lie
    in the dictionary's column span (relative least-squares residual below
    ``SPAN_TOL``); otherwise raises ``Infeasible`` — the failure mode of
    width-starved kernel embeddings, reported distinctly.
    """
    cfg = cfg or SolverConfig()
    X = _as_design(D)
    y = numerics.as_vector(y)
    ny = float(np.linalg.norm(y))
    if ny == 0.0:
        return CoefVector(np.zeros(X.shape[1]), cfg.support_threshold)
    beta = numerics.least_squares(X, y)
    rel = float(np.linalg.norm(X @ beta - y)) / ny
    if rel > SPAN_TOL:
        raise Infeasible(rel, SPAN_TOL)
    alpha = lasso_homotopy(X, y, BP_LAMBDA, cfg)
    resid = float(np.linalg.norm(X @ alpha.entries - y))
    if resid > 1e-6 * ny:
        raise PathStall(
            f"basis pursuit residual {resid:.3e} exceeds 1e-6 * ||y|| = {1e-6 * ny:.3e}"
        )
    return alpha


def bpdn_constrained(D, y, epsilon: float, cfg: Optional[SolverConfig] = None) -> CoefVector:
    """Minimum-l1 representation subject to ``||X a - y||_2 <= epsilon``.

    Exploits monotonicity of the residual along the lasso path: bisects on
    ``log lam`` (at most 60 iterations) until the residual lands within
    ``conv_tol`` of ``epsilon``.  When ``epsilon >= ||y||_2`` the zero
    vector is trivially optimal and is returned with flag
    ``"trivial_feasible"``.
    """
    cfg = cfg or SolverConfig()
    X = _as_design(D)
    y = numerics.as_vector(y)
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    ny = float(np.linalg.norm(y))
    if epsilon >= ny:
        return CoefVector(
            np.zeros(X.shape[1]), cfg.support_threshold, flag="trivial_feasible"
        )

    def solve(lam):
        a = lasso_homotopy(X, y, lam, cfg)
        return a, float(np.linalg.norm(X @ a.entries - y))

    lam_hi = float(np.max(np.abs(X.T @ y)))  # residual ||y|| > epsilon here
    lam_lo = BP_LAMBDA
    alpha_lo, res_lo = solve(lam_lo)
    if res_lo > epsilon + cfg.conv_tol:
        # Even the unpenalized end of the path cannot reach the ball.
        alpha_lo.flag = "target_residual_unreachable"
        return alpha_lo
    if abs(res_lo - epsilon) <= cfg.conv_tol:
        return alpha_lo
    best, best_gap = alpha_lo, abs(res_lo - epsilon)
    for _ in range(60):
        lam_mid = math.sqrt(lam_lo * lam_hi)
        alpha_mid, res_mid = solve(lam_mid)
        gap = abs(res_mid - epsilon)
        if res_mid <= epsilon + cfg.conv_tol and gap < best_gap:
            best, best_gap = alpha_mid, gap
        if gap <= cfg.conv_tol:
            return alpha_mid
        if res_mid > epsilon:
            lam_hi = lam_mid
        else:
            lam_lo = lam_mid
    best.flag = best.flag or "bisection_tolerance_not_met"
    return best


def signal_error_bp(D, y, cfg: Optional[SolverConfig] = None):
    """Solve ``min ||a||_1 + ||z||_1  s.t.  y = X a + z``.

    Implemented as basis pursuit on the identity-augmented dictionary
    ``[X | I_m]`` (identity columns are unit-norm, so the augmentation is a
    valid dictionary); the augmented system is always feasible via z = y.
    Returns ``(alpha, z)``.
    """
    cfg = cfg or SolverConfig()
    X = _as_design(D)
    y = numerics.as_vector(y)
    m, n = X.shape
    aug = np.hstack([X, np.eye(m)])
    combined = basis_pursuit(aug, y, cfg)
    alpha = CoefVector(
        combined.entries[:n], cfg.support_threshold, iterations=combined.iterations
    )
    z = combined.entries[n:].copy()
    return alpha, z


def l0_oracle(
    D,
    y,
    k_cap: int,
    res_tol: float = SPAN_TOL,
    support_threshold: float = DEFAULT_SUPPORT_THRESHOLD,
) -> CoefVector:
    """Exhaustive sparsest-representation search.

    Scans supports of size k = 1..k_cap in lexicographic order and returns
    the least-squares fit on the first support whose relative residual is
    within ``res_tol`` — i.e. the smallest k wins, ties broken by the
    lexicographically smallest support.  Desk scale only: raises
    ``CombinatorialBlowup`` when C(N, k_cap) exceeds the budget, and
    ``NoSolution`` when no support of size <= k_cap fits.
    """
    X = _as_design(D)
    y = numerics.as_vector(y)
    if X.shape[0] != y.shape[0]:
        raise DimensionMismatch(
            f"dictionary has m={X.shape[0]} but target has length {y.shape[0]}"
        )
    m, n = X.shape
    if not 1 <= k_cap <= n:
        raise ValueError(f"need 1 <= k_cap <= N, got {k_cap}")
    count = math.comb(n, k_cap)
    if count > ORACLE_BUDGET:
        raise CombinatorialBlowup(n, k_cap, count, ORACLE_BUDGET)
    ny = float(np.linalg.norm(y))
    if ny == 0.0:
        return CoefVector(np.zeros(n), support_threshold)
    cutoff = res_tol * ny
    for k in range(1, k_cap + 1):
        for subset in combinations(range(n), k):
            cols = X[:, subset]
            beta, *_ = np.linalg.lstsq(cols, y, rcond=None)
            if np.linalg.norm(cols @ beta - y) <= cutoff:
                alpha = np.zeros(n)
                alpha[list(subset)] = beta
                return CoefVector(alpha, support_threshold)
    raise NoSolution(
        f"no support of size <= {k_cap} fits within {res_tol:.1e} * ||y||"
    )


def threshold_and_refit(D, y, alpha: CoefVector, tau: float) -> CoefVector:
    """Zero out entries below ``tau`` and least-squares refit the survivors.

    Columns outside the surviving support are excluded from the refit, so
    ``support(result) <= support(alpha, tau)``.  Raises ``EmptySupport``
    when thresholding removes everything.
    """
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    X = _as_design(D)
    y = numerics.as_vector(y)
    keep = np.flatnonzero(np.abs(alpha.entries) >= tau)
    if keep.size == 0:
        raise EmptySupport(f"no coefficient reaches tau = {tau}")
    beta = numerics.least_squares(X[:, keep], y)
    out = np.zeros(alpha.entries.shape[0])
    out[keep] = beta
    return CoefVector(out, alpha.threshold)

"""Evaluation quantities for the recovery and kernel studies: normalized
recovery errors, support-error fractions, class-residual summaries, kernel
sweep aggregates, correlation diagnostics, class-contribution profiles, and
the two kernel-width searches.

All aggregates are order-independent reductions over trials, so trial
results may arrive in any order.  Zero-denominator cases return 0 with a
degeneracy flag instead of NaN, keeping CSV aggregation total.
"""

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .classify import (
    KCD_CONV_TOL,
    KCD_MAX_SWEEPS,
    SIGMA_CAP,
    KernelModel,
    gaussian_gram,
    kcd_lasso,
    ksrc_classify,
)
from .datagen import gen_kernel_test_samples
from .errors import ZeroGroundTruth
from .solvers import BP_LAMBDA, DEFAULT_SUPPORT_THRESHOLD, CoefVector


@dataclass(frozen=True)
class RecoveryErrors:
    """Recovery quality of one trial: normalized l2 error against the
    ground truth, the fraction of support (and of l2/l1 mass) landing
    outside the planted class, and the dictionary coherence."""

    err_l2: float
    err_supp: float
    err_supp_l2: float
    err_supp_l1: float
    mu: float
    degenerate: bool = False


def recovery_errors(
    alpha1: CoefVector,
    alpha0: CoefVector,
    class1_mask,
    mu: float,
    tau: float = DEFAULT_SUPPORT_THRESHOLD,
) -> RecoveryErrors:
    """Compare a recovered vector against the planted one.

    ``class1_mask`` marks the planted class's columns; entries of
    ``alpha1`` outside it are the off-support part.  ``err_supp`` is the
    off-support fraction of the tau-support, ``err_supp_l2``/``err_supp_l1``
    the off-support fraction of the l2/l1 mass.
    """
    a1 = alpha1.entries
    a0 = alpha0.entries
    if a1.shape != a0.shape:
        raise ValueError(f"length mismatch: {a1.shape} vs {a0.shape}")
    mask = np.asarray(class1_mask, dtype=bool)
    n0 = float(np.linalg.norm(a0))
    if n0 == 0.0:
        raise ZeroGroundTruth("ground-truth coefficient vector is all zero")
    err_l2 = float(np.linalg.norm(a1 - a0)) / n0

    off = np.where(mask, 0.0, a1)
    degenerate = False
    total_l0 = int(np.sum(np.abs(a1) > tau))
    if total_l0 == 0:
        err_supp, degenerate = 0.0, True
    else:
        err_supp = float(np.sum(np.abs(off) > tau)) / total_l0
    total_l2 = float(np.linalg.norm(a1))
    if total_l2 == 0.0:
        err_supp_l2, degenerate = 0.0, True
    else:
        err_supp_l2 = float(np.linalg.norm(off)) / total_l2
    total_l1 = float(np.sum(np.abs(a1)))
    if total_l1 == 0.0:
        err_supp_l1, degenerate = 0.0, True
    else:
        err_supp_l1 = float(np.sum(np.abs(off))) / total_l1
    return RecoveryErrors(err_l2, err_supp, err_supp_l2, err_supp_l1, mu, degenerate)


def class_residual_summary(decisions, truth_class: int) -> tuple[float, float]:
    """Mean truth-class residual and mean best-other-class residual."""
    if not decisions:
        raise ValueError("need at least one decision")
    truth_vals = []
    other_vals = []
    for d in decisions:
        res = d.residuals
        truth_vals.append(res[truth_class - 1])
        others = np.delete(res, truth_class - 1)
        other_vals.append(float(others.min()))
    return float(np.mean(truth_vals)), float(np.mean(other_vals))


@dataclass(frozen=True)
class SweepPoint:
    """Aggregate of one kernel-width (or stage) cell: median-based sparsity
    fraction, classification accuracy, the l2/l1 mass fractions landing on
    the ground-truth class, and the correlation diagnostics."""

    sigma_or_stage: float
    sparsity: float
    accuracy: float
    supp_l2: float
    supp_l1: float
    corr_gt: float = 0.0
    corr_other: float = 0.0
    degenerate: bool = False


def kernel_sweep_point(
    trial_results: Sequence[Sequence[tuple]],
    labels,
    sigma_or_stage: float,
    tau: float = DEFAULT_SUPPORT_THRESHOLD,
) -> SweepPoint:
    """Reduce per-trial classification outcomes into one sweep point.

    ``trial_results`` holds, per trial, ``(decision, truth_label)`` pairs
    for every test sample.  Sparsity is the mean over trials of the median
    over test samples of the support fraction; accuracy and the
    ground-truth mass fractions are means of per-trial means.
    """
    labels = np.asarray(labels, dtype=np.int64)
    n_tr = labels.shape[0]
    sparsities, accuracies, l2s, l1s = [], [], [], []
    degenerate = False
    for trial in trial_results:
        if not trial:
            raise ValueError("every trial needs at least one test sample")
        frac, correct, f2, f1 = [], [], [], []
        for decision, truth in trial:
            a = decision.coef.entries
            frac.append(np.sum(np.abs(a) > tau) / n_tr)
            correct.append(1.0 if decision.label == truth else 0.0)
            gt = np.where(labels == truth, a, 0.0)
            d2 = float(np.linalg.norm(a))
            d1 = float(np.sum(np.abs(a)))
            if d2 == 0.0 or d1 == 0.0:
                degenerate = True
                f2.append(0.0)
                f1.append(0.0)
            else:
                f2.append(float(np.linalg.norm(gt)) / d2)
                f1.append(float(np.sum(np.abs(gt))) / d1)
        sparsities.append(float(np.median(frac)))
        accuracies.append(float(np.mean(correct)))
        l2s.append(float(np.mean(f2)))
        l1s.append(float(np.mean(f1)))
    return SweepPoint(
        sigma_or_stage,
        float(np.mean(sparsities)),
        float(np.mean(accuracies)),
        float(np.mean(l2s)),
        float(np.mean(l1s)),
        degenerate=degenerate,
    )


def correlation_diagnostics(K: KernelModel, tests) -> tuple[float, float]:
    """Trial-level correlation medians between implicit test samples and
    training samples.

    ``corr_gt`` is the median kernel inner product over all (test sample,
    same-class training sample) pairs.  ``corr_other`` takes, per test
    sample and per foreign class, the median over that class's columns,
    then the median of those values.  Callers average both over trials.
    """
    gt_vals = []
    other_vals = []
    for t in tests:
        ky = K.gram @ t.coefs.entries
        gt_vals.extend(ky[K.class_mask(t.label)].tolist())
        for l in range(1, K.n_classes + 1):
            if l == t.label:
                continue
            other_vals.append(float(np.median(ky[K.class_mask(l)])))
    corr_gt = float(np.median(gt_vals))
    # single-class data has no foreign classes to compare against
    corr_other = float(np.median(other_vals)) if other_vals else corr_gt
    return corr_gt, corr_other


def class_contribution_profile(alpha_batches, labels) -> tuple[np.ndarray, np.ndarray]:
    """Average coefficient-magnitude profile for one target class.

    ``alpha_batches`` holds, per trial, the coefficient vectors of that
    class's test samples.  Magnitudes are averaged over test samples, then
    over trials, then normalized to sum 1.  Returns ``(profile,
    class_sums)`` where ``class_sums[l-1]`` sums the profile over class l.
    """
    labels = np.asarray(labels, dtype=np.int64)
    trial_means = []
    for batch in alpha_batches:
        if not batch:
            raise ValueError("every trial batch needs at least one vector")
        mags = [np.abs(a.entries if isinstance(a, CoefVector) else np.asarray(a)) for a in batch]
        trial_means.append(np.mean(mags, axis=0))
    profile = np.mean(trial_means, axis=0)
    total = profile.sum()
    if total > 0:
        profile = profile / total
    L = int(labels.max())
    sums = np.array([profile[labels == l].sum() for l in range(1, L + 1)])
    return profile, sums


def geometric_grid(start: float, factor: float, stop: float) -> np.ndarray:
    """Ascending geometric grid from ``start`` to at most ``stop``."""
    if start <= 0 or stop < start or factor <= 1:
        raise ValueError("need 0 < start <= stop and factor > 1")
    vals = [start]
    while vals[-1] * factor <= stop * (1 + 1e-12):
        vals.append(vals[-1] * factor)
    return np.array(vals)


def k_sup(mu_kernel: float) -> float:
    """Sparsity cap (1/2)(1 + 1/mu) certified by the kernel coherence."""
    if mu_kernel <= 0.0:
        return math.inf
    return 0.5 * (1.0 + 1.0 / mu_kernel)


@dataclass(frozen=True)
class SigmaSearchResult:
    """Outcome of a width search: the selected sigma, whether any grid
    member qualified, and the per-sigma score column."""

    sigma: float
    qualified: bool
    grid: np.ndarray
    scores: np.ndarray


def sigma_mc_search(
    D,
    sigma_grid,
    trials: int,
    confidence: float = 0.95,
    lam: float = BP_LAMBDA,
    per_class: int = 1,
    seed: int = 0,
    conv_tol: float = KCD_CONV_TOL,
    max_sweeps: int = KCD_MAX_SWEEPS,
    tau: float = DEFAULT_SUPPORT_THRESHOLD,
) -> SigmaSearchResult:
    """Largest width at which the solved sparsity stays certified.

    For each grid sigma the pass score is the fraction of (trial, test
    sample) pairs whose support size stays strictly below the coherence cap
    ``k_sup(mu_kernel(sigma))``; a sigma qualifies when the score reaches
    ``confidence``.  When nothing qualifies the smallest grid value is
    returned with ``qualified=False``.
    """
    grid = np.asarray(sigma_grid, dtype=float)
    if grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("sigma grid must be nonempty and ascending")
    if np.any(grid >= SIGMA_CAP):
        raise ValueError(f"grid must stay below the coherence cap {SIGMA_CAP:.4f}")
    scores = np.empty(grid.size)
    for gi, sigma in enumerate(grid):
        K = gaussian_gram(D, sigma)
        cap = k_sup(K.mu_kernel)
        passed = total = 0
        for trial in range(trials):
            tests = gen_kernel_test_samples(K, per_class, derive_tag(seed, gi, trial))
            for t in tests:
                alpha = kcd_lasso(K, t, lam, conv_tol, max_sweeps)
                passed += alpha.l0(tau) < cap
                total += 1
        scores[gi] = passed / total
    qualifying = np.flatnonzero(scores >= confidence)
    if qualifying.size:
        return SigmaSearchResult(float(grid[qualifying[-1]]), True, grid, scores)
    return SigmaSearchResult(float(grid[0]), False, grid, scores)


def sigma_acc_search(
    D,
    sigma_grid,
    trials: int,
    tol: float = 0.005,
    lam: float = BP_LAMBDA,
    per_class: int = 1,
    seed: int = 0,
    conv_tol: float = KCD_CONV_TOL,
    max_sweeps: int = KCD_MAX_SWEEPS,
) -> SigmaSearchResult:
    """Largest width on the maximum-accuracy plateau.

    Mean classification accuracy is estimated per grid sigma; the result is
    the largest sigma whose accuracy is within ``tol`` of the grid maximum.
    """
    grid = np.asarray(sigma_grid, dtype=float)
    if grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("sigma grid must be nonempty and ascending")
    accs = np.empty(grid.size)
    for gi, sigma in enumerate(grid):
        K = gaussian_gram(D, sigma)
        correct = total = 0
        for trial in range(trials):
            tests = gen_kernel_test_samples(K, per_class, derive_tag(seed, gi, trial))
            for t in tests:
                decision = ksrc_classify(K, t, lam, conv_tol, max_sweeps)
                correct += decision.label == t.label
                total += 1
        accs[gi] = correct / total
    best = float(accs.max())
    plateau = np.flatnonzero(accs >= best - tol)
    return SigmaSearchResult(float(grid[plateau[-1]]), True, grid, accs)


def derive_tag(seed: int, *parts) -> int:
    """Sub-seed for (grid index, trial) cells inside the width searches."""
    from .datagen import derive_seed

    return derive_seed(seed, "sigma_search", *parts)

"""Residual-based classification in the original space and in Gaussian
kernel space.

The original-space classifier decomposes a test vector over the labeled
dictionary by l1 minimization and assigns the class whose columns
reconstruct it best.  The kernel variant runs the same pipeline against a
Gaussian Gram matrix, with test samples that exist only implicitly as
coefficient vectors; its lasso is solved by cyclic coordinate descent on
the kernel quadratic form.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from . import numerics
from .coherence import Dictionary
from .solvers import (
    DEFAULT_SUPPORT_THRESHOLD,
    CoefVector,
    SolverConfig,
    basis_pursuit,
    bpdn_constrained,
    lasso_homotopy,
)

# Width at which the Gaussian similarity of an orthogonal unit pair
# (squared distance 2, the farthest nonnegatively-correlated unit vectors
# can be) reaches 1/3.  Below it, a dictionary of unit samples can still
# have kernel coherence under 1/3; at or above it, it cannot.
SIGMA_CAP = math.sqrt(2.0 / math.log(3.0))

# Kernel coordinate descent stopping rule.  The sweep budget is
# deliberately small: the classifier under study stops its solver early,
# and that early stop is what produces the characteristic accuracy cliff
# at large kernel widths.  Run to convergence the solver returns the exact
# generating coefficients and the cliff disappears.
KCD_CONV_TOL = 1e-12
KCD_MAX_SWEEPS = 15


@dataclass
class KernelModel:
    """Gaussian-kernel view of a labeled dictionary: the width ``sigma``,
    the N x N Gram matrix (unit diagonal, entries in (0, 1]), and the
    per-column class labels."""

    sigma: float
    gram: np.ndarray
    labels: np.ndarray

    @property
    def n_cols(self) -> int:
        return self.gram.shape[0]

    @property
    def n_classes(self) -> int:
        return int(self.labels.max())

    @property
    def mu_kernel(self) -> float:
        """Max off-diagonal Gram entry: the kernel-space mutual coherence,
        strictly increasing in sigma for a fixed dictionary."""
        off = self.gram - np.eye(self.n_cols)
        return float(off.max())

    def class_mask(self, label: int) -> np.ndarray:
        return self.labels == label


@dataclass
class KernelTestSample:
    """An implicit kernel-space test point: the generating coefficients
    ``coefs`` (supported on one class) and its ground-truth label."""

    coefs: CoefVector
    label: int


@dataclass
class ClassDecision:
    """Outcome of one classification: per-class residuals, the argmin label
    (ties broken to the lowest class index), and the coefficient vector."""

    label: int
    residuals: np.ndarray
    coef: CoefVector


def class_residuals(D: Dictionary, y, alpha: CoefVector) -> np.ndarray:
    """Per-class reconstruction residuals ||y - X delta_l(alpha)||_2."""
    y = numerics.as_vector(y)
    L = D.n_classes
    out = np.empty(L)
    for l in range(1, L + 1):
        masked = np.where(D.class_mask(l), alpha.entries, 0.0)
        out[l - 1] = np.linalg.norm(y - D.data @ masked)
    return out


def decide(D: Dictionary, y, alpha: CoefVector) -> ClassDecision:
    """Build the residual-argmin decision for an already-computed alpha."""
    res = class_residuals(D, y, alpha)
    return ClassDecision(int(np.argmin(res)) + 1, res, alpha)


def src_classify(D: Dictionary, y, cfg: Optional[SolverConfig] = None) -> ClassDecision:
    """Classify ``y`` by sparse decomposition over the labeled dictionary.

    The decomposition is chosen by the config: ``epsilon`` set runs the
    residual-constrained problem, ``lam`` set runs the penalized lasso, and
    neither set runs exact basis pursuit.
    """
    cfg = cfg or SolverConfig()
    if D.labels is None:
        raise ValueError("classification needs a labeled dictionary")
    if cfg.epsilon is not None:
        alpha = bpdn_constrained(D, y, cfg.epsilon, cfg)
    elif cfg.lam is not None:
        alpha = lasso_homotopy(D, y, cfg.lam, cfg)
    else:
        alpha = basis_pursuit(D, y, cfg)
    return decide(D, y, alpha)


def gaussian_gram(D, sigma: float, labels=None) -> KernelModel:
    """Gram matrix of the Gaussian kernel exp(-||x_i - x_j||^2 / sigma^2).

    Computed from squared norms and inner products, clipped at zero
    distance, with the diagonal pinned to exactly 1.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if isinstance(D, Dictionary):
        X = D.data
        if labels is None:
            labels = D.labels
    else:
        X = numerics.as_matrix(D)
    sq = np.sum(X * X, axis=0)
    d2 = sq[:, np.newaxis] + sq[np.newaxis, :] - 2.0 * (X.T @ X)
    np.clip(d2, 0.0, None, out=d2)
    K = np.exp(-d2 / sigma**2)
    K = (K + K.T) / 2.0
    np.fill_diagonal(K, 1.0)
    if labels is None:
        raise ValueError("kernel classification needs labels")
    return KernelModel(sigma, K, np.asarray(labels, dtype=np.int64))


def kernel_coherence_bound(sigma_query: float) -> tuple[bool, float]:
    """Check a width against the kernel-coherence cap ``SIGMA_CAP``.

    Returns ``(passes, SIGMA_CAP)`` with ``passes`` true when
    ``sigma_query < SIGMA_CAP``.  Staying below the cap is necessary (not
    sufficient) for the kernel coherence of unit-normalized training
    samples to fall under 1/3, the cheapest level at which the noiseless
    sparsity certificate can ever apply to a two-atom representation.
    """
    return sigma_query < SIGMA_CAP, SIGMA_CAP


@njit(cache=True)
def _kcd_sweeps(K, ky, lam, conv_tol, max_sweeps):  # pragma: no cover - jitted
    n = K.shape[0]
    alpha = np.zeros(n)
    for sweep in range(max_sweeps):
        max_change = 0.0
        for j in range(n):
            old = alpha[j]
            r = ky[j] + old
            for i in range(n):
                r -= K[j, i] * alpha[i]
            if r > lam:
                new = r - lam
            elif r < -lam:
                new = r + lam
            else:
                new = 0.0
            alpha[j] = new
            change = abs(new - old)
            if change > max_change:
                max_change = change
        if max_change <= conv_tol:
            return alpha, sweep + 1, True
    return alpha, max_sweeps, False


def kcd_lasso(
    K: KernelModel,
    t: KernelTestSample,
    lam: float,
    conv_tol: float = KCD_CONV_TOL,
    max_sweeps: int = KCD_MAX_SWEEPS,
) -> CoefVector:
    """Kernel-space lasso by cyclic coordinate descent.

    Minimizes ``0.5 (c'Kc - 2 a'Kc + a'Ka) + lam ||a||_1`` with the
    closed-form unit-diagonal update
    ``a_j <- soft((Kc)_j - sum_{i != j} K_ji a_i, lam)`` in fixed ascending
    column order, stopping when the largest coordinate change falls below
    ``conv_tol`` or after ``max_sweeps`` sweeps (the iterate is then
    returned with flag ``"no_convergence"``).  Entries below 1e-10 are
    zeroed on return.
    """
    if lam <= 0:
        raise ValueError(f"lam must be positive, got {lam}")
    ky = K.gram @ t.coefs.entries
    alpha, sweeps, converged = _kcd_sweeps(
        np.ascontiguousarray(K.gram), ky, lam, conv_tol, max_sweeps
    )
    alpha = alpha.copy()
    alpha[np.abs(alpha) < 1e-10] = 0.0
    return CoefVector(
        alpha,
        DEFAULT_SUPPORT_THRESHOLD,
        flag=None if converged else "no_convergence",
        iterations=sweeps,
    )


def kernel_residuals(K: KernelModel, t: KernelTestSample, alpha: CoefVector) -> np.ndarray:
    """Kernel-space per-class residuals.

    ``err_l = sqrt(c'Kc - 2 d'Kc + d'Kd)`` for ``d = delta_l(alpha)``; the
    radicand is clamped at zero before the root.
    """
    c = t.coefs.entries
    ky = K.gram @ c
    cc = float(c @ ky)
    L = K.n_classes
    out = np.empty(L)
    for l in range(1, L + 1):
        d = np.where(K.class_mask(l), alpha.entries, 0.0)
        r2 = cc - 2.0 * float(d @ ky) + float(d @ (K.gram @ d))
        out[l - 1] = math.sqrt(max(r2, 0.0))
    return out


def ksrc_classify(
    K: KernelModel,
    t: KernelTestSample,
    lam: float,
    conv_tol: float = KCD_CONV_TOL,
    max_sweeps: int = KCD_MAX_SWEEPS,
    normalize_test: bool = False,
) -> ClassDecision:
    """Kernel-space classification of an implicit test sample.

    ``normalize_test`` rescales the generating coefficients to unit
    kernel-space norm first (off by default; the label is invariant to
    positive rescaling either way).
    """
    if normalize_test:
        c = t.coefs.entries
        norm = math.sqrt(float(c @ (K.gram @ c)))
        if norm <= 0:
            raise ValueError("test sample has zero kernel-space norm")
        t = KernelTestSample(CoefVector(c / norm, t.coefs.threshold), t.label)
    alpha = kcd_lasso(K, t, lam, conv_tol, max_sweeps)
    res = kernel_residuals(K, t, alpha)
    return ClassDecision(int(np.argmin(res)) + 1, res, alpha)

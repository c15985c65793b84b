"""Mutual coherence and the recovery certificates built from it: the
sparsity caps for noiseless and noisy l1 recovery, the stability constants
of the support-stability theorem, the Welch lower bound, and desk-scale
checkers for span violations and test-sample coherence.
"""

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Optional

import numpy as np
import scipy.linalg

from . import numerics
from .errors import (
    CombinatorialBlowup,
    NotNormalized,
    NotUnderdetermined,
    TooFewColumns,
)

# Enumeration budget for the span-violation scan.
SCAN_BUDGET = 10**6


class Dictionary:
    """A column-normalized m x N sample matrix with optional 1-based class
    labels (one per column).

    Invariants enforced at construction: every column is unit-norm within
    1e-12, and when labels are present every class 1..L is nonempty.
    """

    def __init__(self, data, labels=None):
        data = numerics.as_matrix(data)
        norms = np.linalg.norm(data, axis=0)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            j = int(np.argmax(np.abs(norms - 1.0)))
            raise NotNormalized(
                f"column {j} has norm {norms[j]!r}; normalize_columns first"
            )
        data.flags.writeable = False
        self.data = data
        if labels is not None:
            labels = np.asarray(labels, dtype=np.int64)
            if labels.shape != (data.shape[1],):
                raise ValueError(
                    f"need one label per column, got {labels.shape} for N={data.shape[1]}"
                )
            L = int(labels.max())
            if labels.min() < 1:
                raise ValueError("class labels are 1-based")
            present = np.unique(labels)
            if present.size != L:
                missing = sorted(set(range(1, L + 1)) - set(present.tolist()))
                raise ValueError(f"empty classes: {missing}")
            labels.flags.writeable = False
        self.labels = labels

    @property
    def m(self) -> int:
        return self.data.shape[0]

    @property
    def n_cols(self) -> int:
        return self.data.shape[1]

    @property
    def n_classes(self) -> int:
        if self.labels is None:
            raise ValueError("dictionary is unlabeled")
        return int(self.labels.max())

    def class_mask(self, label: int) -> np.ndarray:
        """Boolean mask selecting the columns of class ``label``."""
        if self.labels is None:
            raise ValueError("dictionary is unlabeled")
        return self.labels == label

    def __repr__(self):
        tag = f", L={self.n_classes}" if self.labels is not None else ""
        return f"Dictionary(m={self.m}, N={self.n_cols}{tag})"


def mutual_coherence(D) -> float:
    """Largest |<x_i, x_j>| over distinct columns, in [0, 1] for unit columns.

    The full pairwise scan runs in double precision BLAS; the winning pairs
    are then re-accumulated with compensated summation so values near 1 are
    distinguished from exactly 1.
    """
    X = D.data if isinstance(D, Dictionary) else numerics.as_matrix(D)
    if X.shape[1] < 2:
        raise TooFewColumns(f"need >= 2 columns, got {X.shape[1]}")
    G = np.abs(X.T @ X)
    np.fill_diagonal(G, -1.0)
    rough = float(G.max())
    # Re-evaluate every near-maximal pair exactly.
    ii, jj = np.nonzero(G >= rough - 1e-12)
    best = 0.0
    for i, j in zip(ii, jj):
        if i < j:
            exact = abs(math.fsum(X[k, i] * X[k, j] for k in range(X.shape[0])))
            best = max(best, exact)
    return best


def welch_bound(m: int, n: int) -> float:
    """Lower bound sqrt((N-m)/(m(N-1))) on coherence when N > m >= 1."""
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if n <= m:
        raise NotUnderdetermined(f"bound needs N > m, got N={n}, m={m}")
    return math.sqrt((n - m) / (m * (n - 1)))


@dataclass(frozen=True)
class RecoveryCertificate:
    """Coherence-based equivalence certificate for one dictionary.

    ``k_max_noiseless`` is the strict cap (1/2)(1 + 1/mu): an l1 solution
    with fewer nonzeros is certified to be the unique sparsest one.
    ``k_max_noisy`` is the inclusive cap (1/4)(1 + 1/mu) for the noisy
    variant.  Both are +inf for orthonormal dictionaries (mu = 0).
    """

    mu: float
    welch: Optional[float]
    k_max_noiseless: float
    k_max_noisy: float

    def verdict_noiseless(self, k: int) -> bool:
        return k < self.k_max_noiseless

    def verdict_noisy(self, k: int) -> bool:
        return k <= self.k_max_noisy

    @property
    def slack(self) -> Optional[float]:
        return None if self.welch is None else self.mu - self.welch


def certificate(D) -> RecoveryCertificate:
    """Build the :class:`RecoveryCertificate` for a dictionary."""
    X = D.data if isinstance(D, Dictionary) else numerics.as_matrix(D)
    mu = mutual_coherence(X)
    m, n = X.shape
    welch = welch_bound(m, n) if n > m else None
    if mu == 0.0:
        k_noiseless = k_noisy = math.inf
    else:
        k_noiseless = 0.5 * (1.0 + 1.0 / mu)
        k_noisy = 0.25 * (1.0 + 1.0 / mu)
    return RecoveryCertificate(mu, welch, k_noiseless, k_noisy)


@dataclass(frozen=True)
class StabilityConstants:
    """Constants controlling noisy-recovery stability at sparsity ``k``.

    ``beta = mu * k``.  When beta < 1/2 the support-stability constants
    ``gamma = sqrt(1-beta)/(1-2 beta)`` and ``c = gamma * sqrt(k)`` are
    defined (the exaggerated error tolerance is ``eps = c * zeta``);
    otherwise they are None and ``defined`` is False.
    """

    mu: float
    k: int
    beta: float
    gamma: Optional[float] = None
    c: Optional[float] = None

    @property
    def defined(self) -> bool:
        return self.gamma is not None

    def error_bound(self, epsilon: float, zeta: float) -> Optional[float]:
        """Squared-error bound (eps + zeta)^2 / (1 - mu(4k - 1)), or None
        when the denominator is not positive."""
        denom = 1.0 - self.mu * (4 * self.k - 1)
        if denom <= 0.0:
            return None
        return (epsilon + zeta) ** 2 / denom


def stability_constants(mu: float, k: int) -> StabilityConstants:
    """Evaluate the stability constants for coherence ``mu`` and sparsity ``k``."""
    if k < 1:
        raise ValueError(f"sparsity level must be >= 1, got {k}")
    if not 0.0 <= mu <= 1.0 + 1e-12:
        raise ValueError(f"coherence must lie in [0, 1], got {mu}")
    beta = mu * k
    if beta < 0.5:
        gamma = math.sqrt(1.0 - beta) / (1.0 - 2.0 * beta)
        return StabilityConstants(mu, k, beta, gamma, gamma * math.sqrt(k))
    return StabilityConstants(mu, k, beta)


def coherence_with_test(D: Dictionary, y) -> tuple[float, bool]:
    """Coherence of the dictionary augmented with the unit test vector ``y``.

    Returns ``(mu_aug, increased)`` where ``increased`` reports whether the
    augmented coherence exceeds mu(X) + 1e-12.  Appending a test sample that
    does not increase coherence rules out any representation sparse enough
    for the noiseless certificate.
    """
    y = numerics.as_vector(y)
    ny = np.linalg.norm(y)
    if abs(ny - 1.0) > 1e-10:
        raise NotNormalized(f"test sample norm is {ny!r}, expected 1")
    if y.shape[0] != D.m:
        raise ValueError(f"test sample has length {y.shape[0]}, expected {D.m}")
    mu = mutual_coherence(D)
    cross = float(np.max(np.abs(D.data.T @ y)))
    mu_aug = max(mu, cross)
    return mu_aug, mu_aug > mu + 1e-12


def spark_violation_scan(D, k: int, limit: Optional[int] = None):
    """Enumerate k-subsets of columns and report spanned extra columns.

    For every linearly independent k-subset, any *distinct* column within
    least-squares distance 1e-8 of the subset's span is reported as
    ``(support, spanned_column)``.  A nonempty result certifies that the
    noiseless sparsity cap cannot hold at this ``k``.

    Only feasible at desk scale: raises ``CombinatorialBlowup`` when
    C(N, k) exceeds ``SCAN_BUDGET``.  ``limit`` optionally stops the scan
    after that many violations.
    """
    X = D.data if isinstance(D, Dictionary) else numerics.as_matrix(D)
    m, n = X.shape
    if not 1 <= k < n:
        raise ValueError(f"need 1 <= k < N, got k={k}, N={n}")
    count = math.comb(n, k)
    if count > SCAN_BUDGET:
        raise CombinatorialBlowup(n, k, count, SCAN_BUDGET)
    col_norms = np.linalg.norm(X, axis=0)
    violations = []
    for subset in combinations(range(n), k):
        cols = X[:, subset]
        Q, R = scipy.linalg.qr(cols, mode="economic")
        diag = np.abs(np.diag(R))
        if diag.min() <= numerics.RANK_TOL * max(diag.max(), 1e-300):
            continue  # dependent subset: not a k-dimensional span
        # Residual of every column against span(Q) in one shot.
        proj = Q @ (Q.T @ X)
        resid = np.linalg.norm(X - proj, axis=0)
        inside = set(subset)
        for j in np.flatnonzero(resid <= 1e-8 * col_norms):
            if int(j) not in inside:
                violations.append((subset, int(j)))
                if limit is not None and len(violations) >= limit:
                    return violations
    return violations

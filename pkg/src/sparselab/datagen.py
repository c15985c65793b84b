"""Synthetic data: the 11-stage clustered-sphere ("bouquet") database with
class structure, class-1 test synthesis, Gaussian noise injection,
redundancy-preserving dimension scaling, the noisy-basis toy database for
kernel studies, and implicit kernel-space test samples.

All generators are pure functions of (spec, seed).  Randomness comes from
Philox, a counter-based 64-bit generator; independent substreams are
derived by hashing ``(master_seed, *tags)`` so that trials can run in any
order (or in parallel) and still reproduce bit-identically.
"""

import hashlib
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Optional

import numpy as np

from . import numerics
from .coherence import Dictionary
from .errors import NonIntegerScaling
from .solvers import CoefVector


def derive_seed(master_seed: int, *tags) -> int:
    """Stable 128-bit stream key from a master seed and arbitrary tags."""
    text = "|".join([str(int(master_seed))] + [repr(t) for t in tags])
    digest = hashlib.blake2b(text.encode(), digest_size=16).digest()
    return int.from_bytes(digest, "little")


def stream(master_seed: int, *tags) -> np.random.Generator:
    """Philox generator keyed by ``derive_seed(master_seed, *tags)``."""
    return np.random.Generator(np.random.Philox(key=derive_seed(master_seed, *tags)))


@dataclass(frozen=True)
class StageParams:
    """Per-stage knobs: ``mu = (stage-1)/10`` pulls the whole dataset toward
    a common cone mean, ``eta = 2/stage`` shrinks the spread of the class
    means around it."""

    mu: float
    eta: float

    @classmethod
    def for_stage(cls, stage: int) -> "StageParams":
        if not 1 <= stage <= 11:
            raise ValueError(f"stage must be in 1..11, got {stage}")
        return cls(mu=(stage - 1) / 10.0, eta=2.0 / stage)


@dataclass(frozen=True)
class StagedDatabaseSpec:
    """Parameters of one staged random database draw.

    ``n0`` samples per class, ambient dimension ``m``, ``n_classes``
    classes, correlation stage 1..11, and the 64-bit seed.  The dictionary
    must be underdetermined: ``n0 * n_classes > m``.
    """

    n0: int
    m: int
    n_classes: int
    stage: int
    seed: int = 0

    def __post_init__(self):
        if self.n0 < 1 or self.m < 1 or self.n_classes < 1:
            raise ValueError("n0, m and n_classes must all be >= 1")
        if self.n0 * self.n_classes <= self.m:
            raise ValueError(
                f"need an underdetermined system: n0*L = {self.n0 * self.n_classes} "
                f"must exceed m = {self.m}"
            )
        StageParams.for_stage(self.stage)

    @property
    def n_tr(self) -> int:
        return self.n0 * self.n_classes

    @property
    def params(self) -> StageParams:
        return StageParams.for_stage(self.stage)


# The four database shapes used throughout the recovery studies.
TABLE_DBS = {
    "DB-1": (5, 50, 20),
    "DB-2": (10, 50, 10),
    "DB-3": (10, 50, 50),
    "DB-4": (5, 200, 50),
}


def db_spec(name: str, stage: int, seed: int = 0) -> StagedDatabaseSpec:
    """Spec for one of the named database shapes DB-1..DB-4."""
    n0, m, L = TABLE_DBS[name]
    return StagedDatabaseSpec(n0, m, L, stage, seed)


@dataclass
class GeneratedInstance:
    """One draw of the staged model: the labeled dictionary, the planted
    class-1 coefficients ``alpha0`` (entries in (0,1)), the clean target
    ``y0 = X alpha0``, and optionally a noisy target ``y``."""

    spec: StagedDatabaseSpec
    dictionary: Dictionary
    alpha0: CoefVector
    y0: np.ndarray
    y: Optional[np.ndarray] = None
    zeta: float = 0.0

    @property
    def class1_mask(self) -> np.ndarray:
        return self.dictionary.class_mask(1)


def _rescale(v: np.ndarray, target: float) -> np.ndarray:
    # target norm 0 means the mean collapses to the origin; skip the
    # division rather than normalize a zero-target direction
    if target == 0.0:
        return np.zeros_like(v)
    return target * v / np.linalg.norm(v)


def gen_staged(spec: StagedDatabaseSpec, k: Optional[int] = None) -> GeneratedInstance:
    """Draw one staged database instance plus its class-1 test sample.

    Stage ``i`` geometry: a cone mean drawn from N(0, I_m) and rescaled to
    norm ``mu_i``; class means drawn from N(cone_mean, (eta_i/sqrt(m))^2 I)
    and rescaled to norm ``mu_i``; samples drawn from
    N(class_mean, (eta_i/(sqrt(m) L))^2 I) and normalized to the unit
    sphere.  At stage 1 every mean is the zero vector, so the samples are
    uniform on the sphere.

    ``alpha0`` has Unif(0,1) entries on the first ``k`` class-1 columns
    (all of them by default) and zeros elsewhere; ``y0 = X alpha0``.
    """
    n0, m, L = spec.n0, spec.m, spec.n_classes
    if k is None:
        k = n0
    if not 1 <= k <= n0:
        raise ValueError(f"need 1 <= k <= n0, got k={k}")
    par = spec.params
    cone = _rescale(stream(spec.seed, "cone").standard_normal(m), par.mu)
    mean_rng = stream(spec.seed, "class_means")
    sample_rng = stream(spec.seed, "samples")
    mean_std = par.eta / math.sqrt(m)
    sample_std = mean_std / L
    X = np.empty((m, n0 * L), order="F")
    labels = np.empty(n0 * L, dtype=np.int64)
    col = 0
    for l in range(1, L + 1):
        class_mean = _rescale(cone + mean_std * mean_rng.standard_normal(m), par.mu)
        for _ in range(n0):
            v = class_mean + sample_std * sample_rng.standard_normal(m)
            X[:, col] = v
            labels[col] = l
            col += 1
    D = Dictionary(numerics.normalize_columns(X), labels)
    coefs = stream(spec.seed, "alpha0").uniform(0.0, 1.0, size=k)
    alpha0 = np.zeros(n0 * L)
    alpha0[:k] = coefs
    y0 = D.data @ alpha0
    return GeneratedInstance(spec, D, CoefVector(alpha0), y0)


def add_noise(inst: GeneratedInstance, zeta: float) -> GeneratedInstance:
    """Return a copy of ``inst`` with ``y = y0 + z``.

    The noise entries are i.i.d. Gaussian with standard deviation
    ``zeta / (2 sqrt(m))``, which makes ``E||z||_2^2 = zeta^2/4`` and puts
    ``||z||_2 <= zeta`` with probability well above 95%.
    """
    if zeta <= 0:
        raise ValueError(f"zeta must be positive, got {zeta}")
    m = inst.spec.m
    z = stream(inst.spec.seed, "noise").normal(0.0, zeta / (2.0 * math.sqrt(m)), size=m)
    return GeneratedInstance(
        inst.spec, inst.dictionary, inst.alpha0, inst.y0, inst.y0 + z, zeta
    )


def scale_spec(spec: StagedDatabaseSpec, m_new: int) -> StagedDatabaseSpec:
    """Rescale the database to dimension ``m_new`` preserving the redundancy
    ratios r1 = m/N_tr and r2 = n0/L.

    The class count becomes ``round(sqrt(m_new / (r1 r2)))`` and the class
    size ``r2 * L``.  When that class size is not integral, raises
    ``NonIntegerScaling`` whose ``nearest`` attribute carries the closest
    valid spec (class count snapped to the nearest multiple of r2's
    denominator).
    """
    if m_new < spec.m:
        raise ValueError(f"m_new must be >= m = {spec.m}, got {m_new}")
    r1 = Fraction(spec.m, spec.n_tr)
    r2 = Fraction(spec.n0, spec.n_classes)
    target = m_new / float(r1 * r2)
    L_new = int(math.floor(math.sqrt(target) + 0.5))
    n0_frac = r2 * L_new
    if n0_frac.denominator != 1:
        step = r2.denominator
        lo = (L_new // step) * step
        candidates = [c for c in (lo, lo + step) if c >= step]
        L_snap = min(candidates, key=lambda c: abs(c - math.sqrt(target)))
        nearest = replace(spec, n0=int(r2 * L_snap), m=m_new, n_classes=L_snap)
        raise NonIntegerScaling(
            f"L={L_new} gives class size {n0_frac}, not an integer; "
            f"nearest valid is (n0={nearest.n0}, m={m_new}, L={L_snap})",
            nearest,
        )
    return replace(spec, n0=int(n0_frac), m=m_new, n_classes=L_new)


def scale_spec_nearest(spec: StagedDatabaseSpec, m_new: int) -> StagedDatabaseSpec:
    """Like :func:`scale_spec` but silently accept the nearest valid spec."""
    try:
        return scale_spec(spec, m_new)
    except NonIntegerScaling as err:
        return err.nearest


def gen_toy_kernel_db(
    n0: int = 5, m: int = 50, n_classes: int = 20, eta: float = 0.1, seed: int = 0
) -> Dictionary:
    """Noisy-basis toy database for the kernel studies.

    Class ``l`` consists of ``n0`` copies of the canonical basis vector
    ``e_l`` zero-padded to dimension ``m``, plus i.i.d. N(0, eta^2) noise on
    every coordinate, unit-normalized.
    """
    if m < n_classes:
        raise ValueError(f"need m >= L, got m={m}, L={n_classes}")
    rng = stream(seed, "toy")
    X = np.zeros((m, n0 * n_classes), order="F")
    labels = np.empty(n0 * n_classes, dtype=np.int64)
    col = 0
    for l in range(1, n_classes + 1):
        for _ in range(n0):
            v = np.zeros(m)
            v[l - 1] = 1.0
            v += rng.normal(0.0, eta, size=m)
            X[:, col] = v
            labels[col] = l
            col += 1
    return Dictionary(numerics.normalize_columns(X), labels)


def gen_kernel_test_samples(kernel_model, per_class: Optional[int] = None, seed: int = 0):
    """Implicit kernel-space test samples for every class.

    Each sample is a coefficient vector ``c`` supported on one class with
    Unif(0,1) entries; the (never materialized) test point is the kernel-
    space combination of that class's training samples.  ``per_class``
    defaults to the class size, giving as many test samples as training
    samples.
    """
    from .classify import KernelTestSample  # local import to avoid a cycle

    labels = kernel_model.labels
    n = labels.shape[0]
    L = int(labels.max())
    rng = stream(seed, "kernel_tests")
    samples = []
    for l in range(1, L + 1):
        mask = labels == l
        count = int(mask.sum()) if per_class is None else per_class
        if count < 1:
            raise ValueError("per_class must be >= 1")
        for _ in range(count):
            c = np.zeros(n)
            c[mask] = rng.uniform(0.0, 1.0, size=int(mask.sum()))
            samples.append(KernelTestSample(CoefVector(c), l))
    return samples


def gen_two_class_2d(epsilon: float = 0.2) -> Dictionary:
    """Two planar classes of two unit samples each, angled so same-class
    pairs are more correlated than cross-class pairs."""
    t = math.pi / 4 - epsilon
    X = np.array(
        [
            [1.0, math.cos(t), 0.0, math.cos(math.pi / 2 + t)],
            [0.0, math.sin(t), 1.0, math.sin(math.pi / 2 + t)],
        ]
    )
    return Dictionary(X, [1, 1, 2, 2])


def gen_two_class_3d(epsilon: float = 0.2) -> Dictionary:
    """The same two classes given a third dimension to spread into, which
    lowers the overall coherence."""
    t1, t2 = math.pi / 4 - epsilon, math.pi / 4 + epsilon
    p1, p2 = 3 * math.pi / 4, math.pi / 4
    X = np.array(
        [
            [1.0, math.cos(t1) * math.sin(p1), 0.0, math.cos(t2) * math.sin(p2)],
            [0.0, math.sin(t1) * math.sin(p1), 1.0, math.sin(t2) * math.sin(p2)],
            [0.0, math.cos(p1), 0.0, math.cos(p2)],
        ]
    )
    return Dictionary(X, [1, 1, 2, 2])

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sparselab import datagen, numerics, solvers
from sparselab.coherence import Dictionary, certificate
from sparselab.errors import (
    CombinatorialBlowup,
    EmptySupport,
    Infeasible,
    NoSolution,
)
from sparselab.solvers import CoefVector, SolverConfig


def unit_cols(rng, m, n):
    return numerics.normalize_columns(rng.normal(size=(m, n)))


def test_coefvector_support_and_norms():
    a = CoefVector(np.array([0.5, 0.0, -2.0, 1e-12]))
    assert list(a.support()) == [0, 2]
    assert a.l0() == 2
    assert a.l0(0.4) == 2
    assert a.l0(1.0) == 1
    assert a.l1() == pytest.approx(2.5 + 1e-12)
    assert a.l2() == pytest.approx(np.sqrt(0.25 + 4.0), rel=1e-12)


def test_solver_config_mode_exclusivity():
    with pytest.raises(ValueError):
        SolverConfig(lam=0.1, epsilon=0.1)


@settings(deadline=None, max_examples=40)
@given(
    st.lists(st.floats(-100, 100), min_size=1, max_size=15),
    st.floats(0, 10),
    st.floats(0, 10),
)
def test_coefvector_support_shrinks_with_threshold(values, t1, t2):
    lo, hi = sorted((t1, t2))
    a = CoefVector(np.array(values))
    assert set(a.support(hi).tolist()) <= set(a.support(lo).tolist())
    assert a.l0(hi) <= a.l0(lo)


def test_lasso_orthonormal_equals_soft_threshold():
    rng = np.random.default_rng(20)
    for _ in range(5):
        Q, _ = np.linalg.qr(rng.normal(size=(8, 8)))
        y = rng.normal(size=8)
        lam = 10 ** rng.uniform(-3, -0.5)
        alpha = solvers.lasso_homotopy(Q, y, lam)
        expected = numerics.soft_threshold(Q.T @ y, lam)
        assert np.max(np.abs(alpha.entries - expected)) <= 1e-10


def test_lasso_above_lam_max_returns_zero():
    rng = np.random.default_rng(21)
    X = unit_cols(rng, 6, 10)
    y = rng.normal(size=6)
    lam_max = np.max(np.abs(X.T @ y))
    alpha = solvers.lasso_homotopy(X, y, lam_max * 1.001)
    assert np.array_equal(alpha.entries, np.zeros(10))


def test_lasso_recovers_planted_sparse_vector_against_oracle():
    inst = datagen.gen_staged(datagen.StagedDatabaseSpec(5, 20, 8, 1, seed=13), k=3)
    alpha = solvers.lasso_homotopy(inst.dictionary, inst.y0, 1e-10)
    oracle = solvers.l0_oracle(inst.dictionary, inst.y0, k_cap=3)
    assert np.max(np.abs(alpha.entries - oracle.entries)) <= 1e-6
    assert np.max(np.abs(alpha.entries - inst.alpha0.entries)) <= 1e-6


def test_lasso_kkt_conditions_on_random_instances():
    rng = np.random.default_rng(22)
    for _ in range(10):
        X = unit_cols(rng, 10, 25)
        y = rng.normal(size=10)
        lam = 10 ** rng.uniform(-4, -1)
        alpha = solvers.lasso_homotopy(X, y, lam)
        corr = X.T @ (y - X @ alpha.entries)
        tol = 1e-8
        assert np.max(np.abs(corr)) <= lam + tol
        for j in alpha.support(1e-9):
            assert corr[j] == pytest.approx(
                lam * np.sign(alpha.entries[j]), abs=tol
            )


def test_lasso_pareto_monotonicity():
    rng = np.random.default_rng(23)
    X = unit_cols(rng, 12, 30)
    y = rng.normal(size=12)
    lams = [1e-6, 1e-4, 1e-2, 1e-1]
    res, l1s = [], []
    for lam in lams:
        a = solvers.lasso_homotopy(X, y, lam)
        res.append(np.linalg.norm(X @ a.entries - y))
        l1s.append(a.l1())
    for lo, hi in zip(res, res[1:]):
        assert lo <= hi + 1e-8
    for hi, lo in zip(l1s, l1s[1:]):
        assert hi >= lo - 1e-8


def test_sign_flip_equivariance():
    rng = np.random.default_rng(24)
    for _ in range(50):
        X = unit_cols(rng, 8, 16)
        y = rng.normal(size=8)
        lam = 10 ** rng.uniform(-6, -1)
        base = solvers.lasso_homotopy(X, y, lam).entries
        j = int(rng.integers(16))
        flipped = X.copy()
        flipped[:, j] *= -1.0
        out = solvers.lasso_homotopy(flipped, y, lam).entries
        expected = base.copy()
        expected[j] *= -1.0
        assert np.max(np.abs(out - expected)) <= 1e-10


def test_basis_pursuit_single_atom():
    rng = np.random.default_rng(25)
    X = unit_cols(rng, 10, 15)
    y = 2.0 * X[:, 5]
    alpha = solvers.basis_pursuit(X, y)
    assert list(alpha.support(1e-8)) == [5]
    assert alpha.entries[5] == pytest.approx(2.0, abs=1e-8)


def test_basis_pursuit_infeasible_target():
    X = np.eye(4)[:, :2]  # spans only the first two coordinates
    y = np.array([0.0, 0.0, 1.0, 0.0])
    with pytest.raises(Infeasible):
        solvers.basis_pursuit(X, y)


def test_basis_pursuit_residual_contract():
    inst = datagen.gen_staged(datagen.db_spec("DB-2", 6, seed=3))
    alpha = solvers.basis_pursuit(inst.dictionary, inst.y0)
    res = np.linalg.norm(inst.dictionary.data @ alpha.entries - inst.y0)
    assert res <= 1e-6 * np.linalg.norm(inst.y0)


def test_bpdn_trivial_when_ball_contains_origin():
    rng = np.random.default_rng(26)
    X = unit_cols(rng, 6, 9)
    y = rng.normal(size=6)
    alpha = solvers.bpdn_constrained(X, y, np.linalg.norm(y) * 1.5)
    assert alpha.flag == "trivial_feasible"
    assert np.array_equal(alpha.entries, np.zeros(9))


def test_bpdn_small_epsilon_approaches_basis_pursuit():
    inst = datagen.gen_staged(datagen.db_spec("DB-1", 3, seed=8))
    bp = solvers.basis_pursuit(inst.dictionary, inst.y0)
    near = solvers.bpdn_constrained(inst.dictionary, inst.y0, 1e-7)
    assert np.max(np.abs(bp.entries - near.entries)) <= 1e-5


def test_bpdn_residual_lands_in_band():
    inst = datagen.add_noise(datagen.gen_staged(datagen.db_spec("DB-1", 4, seed=4)), 0.01)
    alpha = solvers.bpdn_constrained(inst.dictionary, inst.y, 0.05)
    res = np.linalg.norm(inst.dictionary.data @ alpha.entries - inst.y)
    assert abs(res - 0.05) <= 1e-6


def test_signal_error_exact_column_and_zero():
    rng = np.random.default_rng(27)
    X = unit_cols(rng, 8, 12)
    alpha, z = solvers.signal_error_bp(X, X[:, 3])
    assert list(alpha.support(1e-8)) == [3]
    assert np.max(np.abs(z)) <= 1e-8
    alpha0, z0 = solvers.signal_error_bp(X, np.zeros(8))
    assert np.array_equal(alpha0.entries, np.zeros(12))
    assert np.array_equal(z0, np.zeros(8))


def test_signal_error_locates_planted_spike():
    inst = datagen.gen_staged(datagen.db_spec("DB-1", 2, seed=12))
    y = inst.y0.copy()
    y[17] += 5.0
    _, z = solvers.signal_error_bp(inst.dictionary, y)
    assert int(np.argmax(np.abs(z))) == 17


def test_l0_oracle_single_column_and_orthonormal_pair():
    rng = np.random.default_rng(28)
    X = unit_cols(rng, 9, 12)
    alpha = solvers.l0_oracle(X, X[:, 7], k_cap=2)
    assert list(alpha.support()) == [7]
    eye = np.eye(5)
    pair = solvers.l0_oracle(eye, eye[:, 1] + eye[:, 2], k_cap=3)
    assert list(pair.support()) == [1, 2]


def test_l0_oracle_planted_support():
    inst = datagen.gen_staged(datagen.StagedDatabaseSpec(5, 10, 4, 1, seed=33), k=3)
    alpha = solvers.l0_oracle(inst.dictionary, inst.y0, k_cap=3)
    assert set(alpha.support()) == set(inst.alpha0.support())
    res = np.linalg.norm(inst.dictionary.data @ alpha.entries - inst.y0)
    assert res <= 1e-8 * np.linalg.norm(inst.y0)


def test_l0_oracle_lexicographic_tie_break():
    col = np.array([1.0, 0.0])
    X = np.column_stack([col, [0.0, 1.0], col])  # columns 0 and 2 identical
    alpha = solvers.l0_oracle(X, col, k_cap=2)
    assert list(alpha.support()) == [0]


def test_l0_oracle_failure_modes():
    X = np.eye(4)[:, :2]
    with pytest.raises(NoSolution):
        solvers.l0_oracle(X, np.array([0.0, 0.0, 1.0, 0.0]), k_cap=2)
    rng = np.random.default_rng(29)
    big = unit_cols(rng, 10, 100)
    with pytest.raises(CombinatorialBlowup):
        solvers.l0_oracle(big, rng.normal(size=10), k_cap=6)


def test_threshold_and_refit_preserves_exact_sparse():
    rng = np.random.default_rng(30)
    X = unit_cols(rng, 10, 20)
    alpha = np.zeros(20)
    alpha[[2, 5]] = [0.8, -0.6]
    y = X @ alpha
    refit = solvers.threshold_and_refit(X, y, CoefVector(alpha), 0.1)
    assert np.max(np.abs(refit.entries - alpha)) <= 1e-12


def test_threshold_and_refit_empty_support():
    rng = np.random.default_rng(31)
    X = unit_cols(rng, 6, 8)
    with pytest.raises(EmptySupport):
        solvers.threshold_and_refit(X, rng.normal(size=6), CoefVector(np.zeros(8)), 0.5)


def test_threshold_refit_reaches_ground_truth_on_staged_instance():
    inst = datagen.gen_staged(datagen.db_spec("DB-1", 9, seed=21))
    alpha = solvers.basis_pursuit(inst.dictionary, inst.y0)
    refit = solvers.threshold_and_refit(inst.dictionary, inst.y0, alpha, 1e-5)
    assert np.max(np.abs(refit.entries - inst.alpha0.entries)) <= 1e-8


def test_large_tau_zeroes_small_true_coefficients():
    # drop class-1 atoms below 0.1: support stays inside class 1 but the
    # l2 error becomes visible
    for seed in range(6):
        inst = datagen.gen_staged(datagen.db_spec("DB-1", 3, seed=seed))
        if np.min(np.abs(inst.alpha0.entries[:5])) < 0.08:
            break
    else:
        pytest.skip("no draw with a small planted coefficient")
    alpha = solvers.basis_pursuit(inst.dictionary, inst.y0)
    refit = solvers.threshold_and_refit(inst.dictionary, inst.y0, alpha, 0.1)
    err = np.linalg.norm(refit.entries - inst.alpha0.entries) / np.linalg.norm(
        inst.alpha0.entries
    )
    assert err > 1e-6
    assert set(refit.support()) <= set(np.flatnonzero(inst.class1_mask))


def test_vary_k_high_stage_off_support_mass_stays_negligible():
    from sparselab import metrics

    for t in range(5):
        inst = datagen.gen_staged(
            datagen.StagedDatabaseSpec(10, 50, 10, 10, seed=datagen.derive_seed(501, t)),
            k=5,
        )
        alpha = solvers.basis_pursuit(inst.dictionary, inst.y0)
        err = metrics.recovery_errors(alpha, inst.alpha0, inst.class1_mask, 0.0)
        assert err.err_supp_l2 <= 0.05
        assert err.err_supp_l1 <= 0.05
        assert err.err_l2 <= 1e-6


def test_threshold_refit_high_redundancy_no_support_errors_beyond_stage_one():
    from sparselab import metrics

    for stage in (2, 5, 8):
        for t in range(3):
            inst = datagen.gen_staged(
                datagen.db_spec("DB-3", stage, datagen.derive_seed(502, stage, t))
            )
            alpha = solvers.basis_pursuit(inst.dictionary, inst.y0)
            refit = solvers.threshold_and_refit(inst.dictionary, inst.y0, alpha, 0.01)
            err = metrics.recovery_errors(refit, inst.alpha0, inst.class1_mask, 0.0)
            assert err.err_supp == 0.0


def test_l0_crosscheck_agreement_on_reduced_stage1_instances():
    # at this geometry (k/m = 0.25) the path endpoint occasionally carries
    # ~1e-10 debris atoms; they sit right at the default support threshold
    # and vanish at any mild tau, where agreement becomes essentially exact
    agree_default = agree_mild = 0
    trials = 40
    for t in range(trials):
        inst = datagen.gen_staged(
            datagen.StagedDatabaseSpec(3, 12, 6, 1, datagen.derive_seed(600, t)), k=3
        )
        alpha = solvers.basis_pursuit(inst.dictionary, inst.y0)
        oracle = solvers.l0_oracle(inst.dictionary, inst.y0, k_cap=3)
        gt = set(oracle.support().tolist())
        agree_default += set(alpha.support().tolist()) == gt
        agree_mild += set(alpha.support(1e-5).tolist()) == gt
    assert agree_default / trials >= 0.85
    assert agree_mild / trials >= 0.95


def test_oracle_agreement_when_certificate_passes():
    # orthonormal-ish dictionary keeps mu low enough for the certificate
    rng = np.random.default_rng(32)
    X = unit_cols(rng, 40, 44)
    y = 1.3 * X[:, 4]
    alpha = solvers.basis_pursuit(X, y)
    cert = certificate(Dictionary(X))
    if alpha.l0() < cert.k_max_noiseless:
        oracle = solvers.l0_oracle(X, y, k_cap=max(1, alpha.l0()))
        assert set(oracle.support()) == set(alpha.support())

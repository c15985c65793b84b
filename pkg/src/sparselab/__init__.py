"""sparselab: coherence certificates, l1 solvers, staged random databases,
residual-based classification in original and Gaussian-kernel space, and a
reproducible Monte-Carlo experiment harness."""

from .coherence import (
    Dictionary,
    RecoveryCertificate,
    StabilityConstants,
    certificate,
    coherence_with_test,
    mutual_coherence,
    spark_violation_scan,
    stability_constants,
    welch_bound,
)
from .classify import (
    ClassDecision,
    KernelModel,
    KernelTestSample,
    SIGMA_CAP,
    gaussian_gram,
    kcd_lasso,
    kernel_coherence_bound,
    ksrc_classify,
    src_classify,
)
from .datagen import (
    GeneratedInstance,
    StagedDatabaseSpec,
    StageParams,
    add_noise,
    db_spec,
    gen_kernel_test_samples,
    gen_staged,
    gen_toy_kernel_db,
    scale_spec,
    scale_spec_nearest,
)
from .experiments import ExperimentConfig, run_study
from .metrics import (
    RecoveryErrors,
    SweepPoint,
    recovery_errors,
    sigma_acc_search,
    sigma_mc_search,
)
from .solvers import (
    CoefVector,
    SolverConfig,
    basis_pursuit,
    bpdn_constrained,
    l0_oracle,
    lasso_homotopy,
    signal_error_bp,
    threshold_and_refit,
)

__version__ = "0.1.0"

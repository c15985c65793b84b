"""Experiment harness: seed-managed Monte-Carlo studies emitting CSV.

Studies
-------
* ``noise_free``   — staged recovery sweep via basis pursuit.
* ``vary_k``       — same with the planted support restricted to the first
                     k class-1 columns.
* ``threshold``    — threshold-and-refit error sweep over tau values.
* ``noisy``        — residual-constrained recovery plus class residuals.
* ``asymptotic``   — stage-1 recovery as the dimension grows with the
                     redundancy ratios held fixed.
* ``kernel_sweep`` — Gaussian-width sweep of the kernel classifier.
* ``sigma_search`` — the certified-width and accuracy-plateau searches.
* ``l0_crosscheck``— basis-pursuit supports versus the exhaustive oracle
                     on reduced instances.

Per-trial seeds are derived by hashing (master_seed, stage, trial), so no
randomness is shared across stages or trials and any worker count yields
byte-identical CSV output for a fixed config.
"""

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import metrics
from .classify import KCD_CONV_TOL, KCD_MAX_SWEEPS, decide, gaussian_gram, ksrc_classify
from .coherence import mutual_coherence
from .datagen import (
    TABLE_DBS,
    StagedDatabaseSpec,
    add_noise,
    derive_seed,
    gen_kernel_test_samples,
    gen_staged,
    gen_toy_kernel_db,
    scale_spec_nearest,
)
from .errors import EmptySupport
from .solvers import (
    BP_LAMBDA,
    CoefVector,
    basis_pursuit,
    bpdn_constrained,
    l0_oracle,
    threshold_and_refit,
)

RECOVERY_COLUMNS = ["err_l2", "err_supp", "err_supp_l2", "err_supp_l1", "mu"]

_FMT = "%.17g"


@dataclass
class ExperimentConfig:
    """Everything one study run depends on; identical configs (including
    ``master_seed``) reproduce identical CSV bytes at any worker count."""

    study: str
    db: Optional[str] = "DB-1"
    n0: Optional[int] = None
    m: Optional[int] = None
    n_classes: Optional[int] = None
    stages: Sequence[int] = tuple(range(1, 12))
    trials: int = 200
    master_seed: int = 0
    zeta: float = 0.01
    c_factor: float = 5.0
    k: Optional[int] = None
    taus: Sequence[float] = (1e-5, 1e-3, 1e-2, 1e-1)
    m_list: Sequence[int] = (50, 100, 200, 400)
    eta: float = 0.1
    toy_n0: int = 5
    toy_m: int = 50
    toy_classes: int = 20
    sigma_grid: Optional[Sequence[float]] = None
    per_class: Optional[int] = None
    search_trials: int = 5
    kcd_conv_tol: float = KCD_CONV_TOL
    kcd_max_sweeps: int = KCD_MAX_SWEEPS
    out_dir: str = "."
    raw: bool = False
    workers: int = 1

    def triple(self) -> tuple[int, int, int]:
        if self.n0 is not None and self.m is not None and self.n_classes is not None:
            return self.n0, self.m, self.n_classes
        if self.db is None or self.db not in TABLE_DBS:
            raise ValueError(f"unknown database {self.db!r}; give n0/m/n_classes")
        return TABLE_DBS[self.db]

    def spec(self, stage: int, seed: int) -> StagedDatabaseSpec:
        n0, m, L = self.triple()
        return StagedDatabaseSpec(n0, m, L, stage, seed)

    def grid(self) -> np.ndarray:
        if self.sigma_grid is not None:
            return np.asarray(list(self.sigma_grid), dtype=float)
        return metrics.geometric_grid(0.2, 1.15, 12.0)


@dataclass
class TrialRecord:
    """One trial's payload, reproducible from (config, trial index) alone;
    wall time is kept for profiling but never written to CSV."""

    trial_index: int
    stage_or_sigma: float
    payload: dict
    wall_time: float = 0.0


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return _FMT % float(value)


def write_csv(path, header, rows) -> str:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return str(path)


def _map_trials(fn, arglist, workers: int):
    if workers <= 1 or len(arglist) <= 1:
        return [fn(a) for a in arglist]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, arglist, chunksize=max(1, len(arglist) // (4 * workers))))


def _recovery_payload(errors) -> dict:
    return {
        "err_l2": errors.err_l2,
        "err_supp": errors.err_supp,
        "err_supp_l2": errors.err_supp_l2,
        "err_supp_l1": errors.err_supp_l1,
        "mu": errors.mu,
    }


# --- staged recovery trials (top level so worker processes can pickle them)


def _nf_trial(args) -> TrialRecord:
    cfg, stage, trial, k = args
    t0 = time.perf_counter()
    seed = derive_seed(cfg.master_seed, stage, trial)
    inst = gen_staged(cfg.spec(stage, seed), k)
    alpha = basis_pursuit(inst.dictionary, inst.y0)
    err = metrics.recovery_errors(
        alpha, inst.alpha0, inst.class1_mask, mutual_coherence(inst.dictionary)
    )
    return TrialRecord(trial, stage, _recovery_payload(err), time.perf_counter() - t0)


def _threshold_trial(args) -> TrialRecord:
    cfg, stage, trial = args
    t0 = time.perf_counter()
    seed = derive_seed(cfg.master_seed, stage, trial)
    inst = gen_staged(cfg.spec(stage, seed))
    alpha = basis_pursuit(inst.dictionary, inst.y0)
    mu = mutual_coherence(inst.dictionary)
    payload = {}
    for tau in cfg.taus:
        try:
            refit = threshold_and_refit(inst.dictionary, inst.y0, alpha, tau)
        except EmptySupport:
            refit = CoefVector(np.zeros(alpha.entries.shape[0]))
        err = metrics.recovery_errors(refit, inst.alpha0, inst.class1_mask, mu)
        for name, value in _recovery_payload(err).items():
            payload[f"{name}@{tau:g}"] = value
        payload[f"max_err@{tau:g}"] = float(
            np.max(np.abs(refit.entries - inst.alpha0.entries))
        )
    return TrialRecord(trial, stage, payload, time.perf_counter() - t0)


def _noisy_trial(args) -> TrialRecord:
    cfg, stage, trial = args
    t0 = time.perf_counter()
    seed = derive_seed(cfg.master_seed, stage, trial)
    inst = add_noise(gen_staged(cfg.spec(stage, seed)), cfg.zeta)
    epsilon = cfg.c_factor * cfg.zeta
    alpha = bpdn_constrained(inst.dictionary, inst.y, epsilon)
    err = metrics.recovery_errors(
        alpha, inst.alpha0, inst.class1_mask, mutual_coherence(inst.dictionary)
    )
    decision = decide(inst.dictionary, inst.y, alpha)
    err_truth, min_other = metrics.class_residual_summary([decision], truth_class=1)
    payload = _recovery_payload(err)
    payload["err_truth"] = err_truth
    payload["min_other"] = min_other
    return TrialRecord(trial, stage, payload, time.perf_counter() - t0)


def _asymptotic_trial(args) -> TrialRecord:
    cfg, m_new, trial = args
    t0 = time.perf_counter()
    base = cfg.spec(stage=1, seed=0)
    scaled = scale_spec_nearest(base, m_new)
    seed = derive_seed(cfg.master_seed, "asymptotic", m_new, trial)
    inst = gen_staged(StagedDatabaseSpec(scaled.n0, scaled.m, scaled.n_classes, 1, seed))
    alpha = basis_pursuit(inst.dictionary, inst.y0)
    err = metrics.recovery_errors(
        alpha, inst.alpha0, inst.class1_mask, mutual_coherence(inst.dictionary)
    )
    return TrialRecord(trial, m_new, _recovery_payload(err), time.perf_counter() - t0)


def _l0_trial(args) -> TrialRecord:
    cfg, stage, trial, k = args
    t0 = time.perf_counter()
    seed = derive_seed(cfg.master_seed, stage, trial)
    inst = gen_staged(cfg.spec(stage, seed), k)
    alpha = basis_pursuit(inst.dictionary, inst.y0)
    oracle = l0_oracle(inst.dictionary, inst.y0, k_cap=k)
    agree = set(alpha.support().tolist()) == set(oracle.support().tolist())
    return TrialRecord(
        trial, stage, {"agreement": 1.0 if agree else 0.0}, time.perf_counter() - t0
    )


def _kernel_trial(args) -> TrialRecord:
    cfg, trial = args
    t0 = time.perf_counter()
    db = gen_toy_kernel_db(
        cfg.toy_n0,
        cfg.toy_m,
        cfg.toy_classes,
        cfg.eta,
        derive_seed(cfg.master_seed, "kernel-db", trial),
    )
    tests_seed = derive_seed(cfg.master_seed, "kernel-tests", trial)
    payload = {}
    for sigma in cfg.grid():
        K = gaussian_gram(db, sigma)
        tests = gen_kernel_test_samples(K, cfg.per_class, tests_seed)
        results = [
            (
                ksrc_classify(K, t, BP_LAMBDA, cfg.kcd_conv_tol, cfg.kcd_max_sweeps),
                t.label,
            )
            for t in tests
        ]
        point = metrics.kernel_sweep_point([results], db.labels, sigma)
        corr_gt, corr_other = metrics.correlation_diagnostics(K, tests)
        payload[f"sparsity@{sigma:.10g}"] = point.sparsity
        payload[f"accuracy@{sigma:.10g}"] = point.accuracy
        payload[f"supp_l2@{sigma:.10g}"] = point.supp_l2
        payload[f"supp_l1@{sigma:.10g}"] = point.supp_l1
        payload[f"corr_gt@{sigma:.10g}"] = corr_gt
        payload[f"corr_other@{sigma:.10g}"] = corr_other
    return TrialRecord(trial, 0.0, payload, time.perf_counter() - t0)


# --- study runners


def run_noise_free(cfg: ExperimentConfig, k: Optional[int] = None):
    args = [(cfg, stage, t, k) for stage in cfg.stages for t in range(cfg.trials)]
    records = _map_trials(_nf_trial, args, cfg.workers)
    by_stage = _group(records, cfg.stages)
    name = "vary_k" if k is not None else "noise_free"
    return _emit_recovery(cfg, name, "stage", by_stage)


def run_vary_k(cfg: ExperimentConfig, k: Optional[int] = None):
    n0 = cfg.triple()[0]
    return run_noise_free(cfg, k=n0 if k is None else k)


def run_threshold_study(cfg: ExperimentConfig):
    args = [(cfg, stage, t) for stage in cfg.stages for t in range(cfg.trials)]
    records = _map_trials(_threshold_trial, args, cfg.workers)
    by_stage = _group(records, cfg.stages)
    # unpack the per-tau payload into (tau, stage) rows
    rows = []
    for tau in cfg.taus:
        for stage, recs in by_stage:
            means = {
                name: float(np.mean([r.payload[f"{name}@{tau:g}"] for r in recs]))
                for name in RECOVERY_COLUMNS + ["max_err"]
            }
            rows.append([tau, stage] + [means[n] for n in RECOVERY_COLUMNS + ["max_err"]])
    paths = [
        write_csv(
            os.path.join(cfg.out_dir, "threshold.csv"),
            ["tau", "stage"] + RECOVERY_COLUMNS + ["max_err"],
            rows,
        )
    ]
    if cfg.raw:
        raw_rows = []
        for stage, recs in by_stage:
            for r in recs:
                raw_rows.append([stage, r.trial_index] + list(r.payload.values()))
        header = ["stage", "trial"] + list(by_stage[0][1][0].payload.keys())
        paths.append(
            write_csv(os.path.join(cfg.out_dir, "threshold_raw.csv"), header, raw_rows)
        )
    return paths


def run_noisy(cfg: ExperimentConfig):
    args = [(cfg, stage, t) for stage in cfg.stages for t in range(cfg.trials)]
    records = _map_trials(_noisy_trial, args, cfg.workers)
    by_stage = _group(records, cfg.stages)
    paths = _emit_recovery(cfg, "noisy", "stage", by_stage, extra=["err_truth", "min_other"])
    resid_rows = []
    for stage, recs in by_stage:
        resid_rows.append(
            [
                stage,
                float(np.mean([r.payload["err_truth"] for r in recs])),
                float(np.mean([r.payload["min_other"] for r in recs])),
            ]
        )
    paths.append(
        write_csv(
            os.path.join(cfg.out_dir, "noisy_residuals.csv"),
            ["stage", "err_truth", "min_other"],
            resid_rows,
        )
    )
    return paths


def run_asymptotic(cfg: ExperimentConfig):
    args = [(cfg, m_new, t) for m_new in cfg.m_list for t in range(cfg.trials)]
    records = _map_trials(_asymptotic_trial, args, cfg.workers)
    by_m = _group(records, cfg.m_list)
    return _emit_recovery(cfg, "asymptotic", "m", by_m)


def run_l0_crosscheck(cfg: ExperimentConfig):
    n0, m, L = cfg.triple()
    k = cfg.k if cfg.k is not None else min(3, n0)
    args = [(cfg, stage, t, k) for stage in cfg.stages for t in range(cfg.trials)]
    records = _map_trials(_l0_trial, args, cfg.workers)
    by_stage = _group(records, cfg.stages)
    rows = [
        [stage, float(np.mean([r.payload["agreement"] for r in recs]))]
        for stage, recs in by_stage
    ]
    paths = [
        write_csv(
            os.path.join(cfg.out_dir, "l0_crosscheck.csv"), ["stage", "agreement"], rows
        )
    ]
    if cfg.raw:
        raw = [[stage, r.trial_index, r.payload["agreement"]] for stage, recs in by_stage for r in recs]
        paths.append(
            write_csv(
                os.path.join(cfg.out_dir, "l0_crosscheck_raw.csv"),
                ["stage", "trial", "agreement"],
                raw,
            )
        )
    return paths


KERNEL_COLUMNS = ["sparsity", "accuracy", "supp_l2", "supp_l1", "corr_gt", "corr_other"]


def run_kernel_sweep(cfg: ExperimentConfig):
    args = [(cfg, t) for t in range(cfg.trials)]
    records = _map_trials(_kernel_trial, args, cfg.workers)
    grid = cfg.grid()

    db0 = gen_toy_kernel_db(
        cfg.toy_n0,
        cfg.toy_m,
        cfg.toy_classes,
        cfg.eta,
        derive_seed(cfg.master_seed, "kernel-db", 0),
    )
    mc_grid = grid[grid < metrics.SIGMA_CAP]
    if mc_grid.size:
        mc = metrics.sigma_mc_search(
            db0,
            mc_grid,
            cfg.search_trials,
            seed=cfg.master_seed,
            conv_tol=cfg.kcd_conv_tol,
            max_sweeps=cfg.kcd_max_sweeps,
        )
        sigma_mc = mc.sigma
    else:
        sigma_mc = float("nan")
    acc = metrics.sigma_acc_search(
        db0,
        grid,
        cfg.search_trials,
        seed=cfg.master_seed,
        conv_tol=cfg.kcd_conv_tol,
        max_sweeps=cfg.kcd_max_sweeps,
    )

    rows = []
    for sigma in grid:
        means = [
            float(np.mean([r.payload[f"{name}@{sigma:.10g}"] for r in records]))
            for name in KERNEL_COLUMNS
        ]
        rows.append([sigma] + means + [sigma_mc, acc.sigma])
    paths = [
        write_csv(
            os.path.join(cfg.out_dir, "kernel_sweep.csv"),
            ["sigma"] + KERNEL_COLUMNS + ["sigma_mc", "sigma_acc"],
            rows,
        )
    ]
    if cfg.raw:
        raw_rows = []
        for r in records:
            for sigma in grid:
                raw_rows.append(
                    [sigma, r.trial_index]
                    + [r.payload[f"{name}@{sigma:.10g}"] for name in KERNEL_COLUMNS]
                )
        paths.append(
            write_csv(
                os.path.join(cfg.out_dir, "kernel_sweep_raw.csv"),
                ["sigma", "trial"] + KERNEL_COLUMNS,
                raw_rows,
            )
        )
    return paths


def run_sigma_search(cfg: ExperimentConfig):
    db = gen_toy_kernel_db(
        cfg.toy_n0,
        cfg.toy_m,
        cfg.toy_classes,
        cfg.eta,
        derive_seed(cfg.master_seed, "search-db"),
    )
    grid = cfg.grid()
    mc_grid = grid[grid < metrics.SIGMA_CAP]
    if mc_grid.size == 0:
        raise ValueError("sigma grid has no member below the coherence cap")
    mc = metrics.sigma_mc_search(
        db,
        mc_grid,
        cfg.search_trials,
        seed=cfg.master_seed,
        conv_tol=cfg.kcd_conv_tol,
        max_sweeps=cfg.kcd_max_sweeps,
    )
    acc = metrics.sigma_acc_search(
        db,
        grid,
        cfg.search_trials,
        seed=cfg.master_seed,
        conv_tol=cfg.kcd_conv_tol,
        max_sweeps=cfg.kcd_max_sweeps,
    )
    return [
        write_csv(
            os.path.join(cfg.out_dir, "sigma_search.csv"),
            ["eta", "sigma_mc", "mc_qualified", "sigma_acc"],
            [[cfg.eta, mc.sigma, int(mc.qualified), acc.sigma]],
        )
    ]


STUDIES = {
    "noise_free": run_noise_free,
    "vary_k": run_vary_k,
    "threshold": run_threshold_study,
    "noisy": run_noisy,
    "asymptotic": run_asymptotic,
    "kernel_sweep": run_kernel_sweep,
    "sigma_search": run_sigma_search,
    "l0_crosscheck": run_l0_crosscheck,
}


def run_study(cfg: ExperimentConfig):
    """Dispatch a config to its study runner; returns the written paths."""
    if cfg.study not in STUDIES:
        raise ValueError(f"unknown study {cfg.study!r}; pick from {sorted(STUDIES)}")
    os.makedirs(cfg.out_dir, exist_ok=True)
    if cfg.study == "vary_k":
        return run_vary_k(cfg, cfg.k)
    return STUDIES[cfg.study](cfg)


# --- shared aggregation helpers


def _group(records, cells):
    """Group flat trial records back into their (ordered) cells."""
    per_cell = {c: [] for c in cells}
    for r in records:
        per_cell[r.stage_or_sigma].append(r)
    return [(c, per_cell[c]) for c in cells]


def _emit_recovery(cfg, name, cell_name, by_cell, extra=None):
    columns = RECOVERY_COLUMNS + (extra or [])
    rows = []
    for cell, recs in by_cell:
        rows.append(
            [cell] + [float(np.mean([r.payload[c] for r in recs])) for c in columns]
        )
    paths = [
        write_csv(os.path.join(cfg.out_dir, f"{name}.csv"), [cell_name] + columns, rows)
    ]
    if cfg.raw:
        raw_rows = [
            [cell, r.trial_index] + [r.payload[c] for c in columns]
            for cell, recs in by_cell
            for r in recs
        ]
        paths.append(
            write_csv(
                os.path.join(cfg.out_dir, f"{name}_raw.csv"),
                [cell_name, "trial"] + columns,
                raw_rows,
            )
        )
    return paths


# --- config files (plain key=value lines mirroring the CLI flags)


def _parse_stages(text: str):
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..")
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(tok) for tok in text.split(",") if tok)


def _parse_grid(text: str):
    text = text.strip()
    if ":" in text:
        start, factor, stop = (float(tok) for tok in text.split(":"))
        return tuple(metrics.geometric_grid(start, factor, stop).tolist())
    return tuple(float(tok) for tok in text.split(",") if tok)


def config_from_mapping(pairs: dict) -> ExperimentConfig:
    """Build a config from string key=value pairs (file or CLI forms)."""
    kwargs = {}
    converters = {
        "study": str,
        "db": str,
        "n0": int,
        "m": int,
        "n_classes": int,
        "stages": _parse_stages,
        "trials": int,
        "master_seed": int,
        "seed": int,
        "zeta": float,
        "c": float,
        "c_factor": float,
        "k": int,
        "taus": lambda s: tuple(float(t) for t in s.split(",") if t),
        "m_list": lambda s: tuple(int(t) for t in s.split(",") if t),
        "eta": float,
        "toy_n0": int,
        "toy_m": int,
        "toy_classes": int,
        "sigma_grid": _parse_grid,
        "per_class": int,
        "search_trials": int,
        "kcd_conv_tol": float,
        "kcd_max_sweeps": int,
        "out_dir": str,
        "out": str,
        "raw": lambda s: s.strip().lower() in ("1", "true", "yes"),
        "workers": int,
    }
    aliases = {"seed": "master_seed", "c": "c_factor", "out": "out_dir"}
    for key, value in pairs.items():
        key = key.strip().lower().replace("-", "_")
        if key not in converters:
            raise ValueError(f"unknown config key {key!r}")
        kwargs[aliases.get(key, key)] = converters[key](value)
    return ExperimentConfig(**kwargs)


def config_from_file(path) -> ExperimentConfig:
    pairs = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            pairs[key.strip()] = value.strip()
    return config_from_mapping(pairs)

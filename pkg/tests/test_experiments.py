import numpy as np
import pytest

from sparselab import experiments
from sparselab.experiments import ExperimentConfig, config_from_file, run_study


def read(path):
    with open(path, "rb") as fh:
        return fh.read()


def rows_of(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return header, data


def tiny_cfg(tmp_path, **kw):
    base = dict(
        study="noise_free",
        db="DB-1",
        stages=(1, 2),
        trials=3,
        master_seed=7,
        out_dir=str(tmp_path),
    )
    base.update(kw)
    return ExperimentConfig(**base)


def test_noise_free_schema_and_determinism(tmp_path):
    cfg = tiny_cfg(tmp_path / "a")
    paths = run_study(cfg)
    header, data = rows_of(paths[0])
    assert header == ["stage", "err_l2", "err_supp", "err_supp_l2", "err_supp_l1", "mu"]
    assert data.shape == (2, 6)
    assert list(data[:, 0]) == [1.0, 2.0]
    again = run_study(tiny_cfg(tmp_path / "b"))
    assert read(paths[0]) == read(again[0])


def test_worker_count_does_not_change_bytes(tmp_path):
    serial = run_study(tiny_cfg(tmp_path / "s", workers=1))
    parallel = run_study(tiny_cfg(tmp_path / "p", workers=2))
    assert read(serial[0]) == read(parallel[0])


def test_raw_dump_means_match_aggregate(tmp_path):
    cfg = tiny_cfg(tmp_path, raw=True, stages=(2,), trials=4)
    agg_path, raw_path = run_study(cfg)
    _, agg = rows_of(agg_path)
    header, raw = rows_of(raw_path)
    assert header[:2] == ["stage", "trial"]
    assert raw.shape[0] == 4
    for col in range(2, raw.shape[1]):
        assert abs(np.mean(raw[:, col]) - agg[0, col - 1]) <= 1e-12


def test_vary_k_full_k_reproduces_noise_free(tmp_path):
    nf = run_study(tiny_cfg(tmp_path / "nf"))
    vk = run_study(tiny_cfg(tmp_path / "vk", study="vary_k", k=5))
    assert read(nf[0]) == read(vk[0])


def test_vary_k_small_k_still_recovers_at_low_stage(tmp_path):
    cfg = tiny_cfg(tmp_path, study="vary_k", k=1, stages=(2,), trials=3)
    (path,) = run_study(cfg)
    _, data = rows_of(path)
    assert data[0, 2] <= 0.01  # err_supp: single-atom recovery


def test_threshold_study_layout(tmp_path):
    cfg = tiny_cfg(tmp_path, study="threshold", stages=(2, 3), trials=2, taus=(1e-5, 0.1))
    (path,) = run_study(cfg)
    header, data = rows_of(path)
    assert header[:2] == ["tau", "stage"]
    assert data.shape[0] == 4  # 2 taus x 2 stages
    small_tau = data[data[:, 0] == 1e-5]
    assert np.all(small_tau[:, 7] <= 1e-8)  # max_err column


def test_noisy_study_emits_residual_table(tmp_path):
    cfg = tiny_cfg(tmp_path, study="noisy", stages=(3,), trials=3, zeta=0.01, c_factor=5.0)
    paths = run_study(cfg)
    names = [p.split("/")[-1] for p in paths]
    assert "noisy.csv" in names and "noisy_residuals.csv" in names
    header, data = rows_of(paths[-1])
    assert header == ["stage", "err_truth", "min_other"]
    assert data[0, 1] == pytest.approx(0.05, abs=0.02)
    assert data[0, 2] > 1.0


def test_asymptotic_study(tmp_path):
    cfg = tiny_cfg(tmp_path, study="asymptotic", trials=2, m_list=(50, 100))
    (path,) = run_study(cfg)
    header, data = rows_of(path)
    assert header[0] == "m"
    assert list(data[:, 0]) == [50.0, 100.0]


def test_l0_crosscheck_study(tmp_path):
    cfg = tiny_cfg(
        tmp_path,
        study="l0_crosscheck",
        db=None,
        n0=3,
        m=12,
        n_classes=6,
        stages=(1,),
        trials=4,
        k=3,
    )
    (path,) = run_study(cfg)
    _, data = rows_of(path)
    assert data[0, 1] >= 0.75  # agreement rate


def test_kernel_sweep_single_point(tmp_path):
    cfg = tiny_cfg(
        tmp_path,
        study="kernel_sweep",
        trials=2,
        eta=0.1,
        toy_n0=3,
        toy_m=15,
        toy_classes=5,
        sigma_grid=(0.5,),
        per_class=1,
        search_trials=1,
        raw=True,
    )
    path, raw_path = run_study(cfg)
    header, data = rows_of(path)
    assert header[:7] == [
        "sigma",
        "sparsity",
        "accuracy",
        "supp_l2",
        "supp_l1",
        "corr_gt",
        "corr_other",
    ]
    assert data.shape == (1, 9)
    assert 0.0 <= data[0, 2] <= 1.0
    raw_header, raw = rows_of(raw_path)
    assert raw_header[:2] == ["sigma", "trial"]
    for col in range(2, raw.shape[1]):
        assert abs(np.mean(raw[:, col]) - data[0, col - 1]) <= 1e-12


def test_sigma_search_study(tmp_path):
    cfg = tiny_cfg(
        tmp_path,
        study="sigma_search",
        eta=0.1,
        toy_n0=3,
        toy_m=15,
        toy_classes=5,
        sigma_grid=(0.1, 0.3, 0.9, 2.7),
        search_trials=1,
    )
    (path,) = run_study(cfg)
    header, data = rows_of(path)
    assert header == ["eta", "sigma_mc", "mc_qualified", "sigma_acc"]
    assert data[0, 1] < 1.35


def test_unknown_study_rejected(tmp_path):
    with pytest.raises(ValueError):
        run_study(tiny_cfg(tmp_path, study="nope"))


def test_config_file_parsing(tmp_path):
    text = (
        "# comment line\n"
        "study=noisy\n"
        "db=DB-2\n"
        "stages=2..4\n"
        "trials=7\n"
        "seed=123\n"
        "zeta=0.02\n"
        "C=10\n"
        "sigma-grid=0.5,1.0,2.0\n"
        f"out={tmp_path}\n"
        "raw=true\n"
    )
    path = tmp_path / "exp.cfg"
    path.write_text(text)
    cfg = config_from_file(path)
    assert cfg.study == "noisy"
    assert cfg.db == "DB-2"
    assert cfg.stages == (2, 3, 4)
    assert cfg.trials == 7
    assert cfg.master_seed == 123
    assert cfg.c_factor == 10.0
    assert cfg.sigma_grid == (0.5, 1.0, 2.0)
    assert cfg.raw


def test_config_geometric_grid_syntax():
    cfg = experiments.config_from_mapping({"study": "kernel_sweep", "sigma_grid": "0.2:2:1.0"})
    assert np.allclose(cfg.grid(), [0.2, 0.4, 0.8])


def test_config_rejects_unknown_keys():
    with pytest.raises(ValueError):
        experiments.config_from_mapping({"study": "noisy", "bogus": "1"})

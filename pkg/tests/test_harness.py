import numpy as np
import pytest

from compest.bounds import BoundCurve
from compest.harness import (
    ConfigError,
    ExperimentConfig,
    VerificationError,
    bounds_csv,
    isometry_csv,
    rmse_csv,
    run_bounds_report,
    run_isometry_sweep,
    run_rmse_sweep,
    run_sufficiency_report,
    sufficiency_csv,
    verify_csv,
)

SMALL = dict(N=32, M_list=[8, 16], snr_min_db=-10.0, snr_max_db=10.0, snr_step_db=2.0, trials=150)


def test_default_config_matches_experiment():
    cfg = ExperimentConfig()
    assert cfg.N == 256 and cfg.M_list == [10, 25, 40, 60, 256] and cfg.trials == 2000
    grid = cfg.snr_grid()
    assert grid[0] == -30 and grid[-1] == 10 and np.allclose(np.diff(grid), 0.5)


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig(trials=0)
    with pytest.raises(ConfigError):
        ExperimentConfig(M_list=[300])
    with pytest.raises(ConfigError):
        ExperimentConfig(snr_grid_db=[1.0, 0.0])
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"nonsense": 1})


def test_toml_with_overrides(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text('N = 64\nM_list = [8]\ntrials = 10\n[estimator]\nnewton_rounds = 5\n')
    cfg = ExperimentConfig.from_toml(p, {"trials": 20, "seed": None})
    assert cfg.N == 64 and cfg.trials == 20 and cfg.newton_rounds == 5 and cfg.seed == 0
    bad = tmp_path / "bad.toml"
    bad.write_text("N = = 3")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_toml(bad)


def test_rmse_sweep_is_reproducible_and_grid_independent():
    cfg = ExperimentConfig(**SMALL)
    a = run_rmse_sweep(cfg)
    b = run_rmse_sweep(cfg)
    for x, y in zip(a, b):
        assert np.array_equal(x.rmse, y.rmse)
    # the draws at a given SNR do not depend on the rest of the grid
    sub = run_rmse_sweep(cfg.replace(snr_min_db=0.0))
    np.testing.assert_array_equal(sub[0].rmse, a[0].rmse[5:])
    assert [c.M for c in a] == [8, 16, "I"]


def test_rmse_sweep_decreases_with_snr():
    curves = run_rmse_sweep(ExperimentConfig(**SMALL))
    for c in curves:
        assert c.rmse[-1] < c.rmse[0] / 10
        assert np.all(c.trials == 150)


def test_low_trial_warning():
    with pytest.warns(RuntimeWarning):
        curves = run_rmse_sweep(ExperimentConfig(**{**SMALL, "trials": 20, "M_list": [8]}))
    assert curves[0].warning


def test_rmse_csv_verifies_and_recomputes(tmp_path):
    cfg = ExperimentConfig(**{**SMALL, "trials": 100, "M_list": [8], "include_identity": False})
    text = rmse_csv(run_rmse_sweep(cfg), cfg)
    lines = text.splitlines()
    assert lines[0].startswith("# config: ") and "# threshold_db:" in lines[1]
    assert "M,snr_db,rmse_rad,trials" in lines
    path = tmp_path / "r.csv"
    path.write_text(text)
    s = verify_csv(path, recompute=True)
    assert s["kind"] == "rmse" and s["rows"] == 11
    path.write_text(text.replace(",100\n", ",99\n", 1))
    with pytest.raises(VerificationError):
        verify_csv(path, recompute=True)


def test_bounds_report_rule_and_csv():
    cfg = ExperimentConfig(snr_step_db=1.0)
    rep = run_bounds_report(cfg)
    assert -11 <= rep.threshold_db <= -9
    assert rep.required_M[1.0] == pytest.approx(256 * 10 ** (rep.threshold_db / 10))
    assert "max{40" in rep.rule
    text = bounds_csv(rep, cfg)
    assert verify_csv(text)["rows"] == 2 * cfg.snr_grid().size
    curves = BoundCurve.from_csv(text)
    assert [c.kind.value for c in curves] == ["CRB", "ZZB"]
    assert curves[1].threshold_db == rep.threshold_db


def test_isometry_sweep_and_csv():
    cfg = ExperimentConfig(N=32, M_list=[4, 16, 32], iso_phases=4, iso_gain_ratios=3)
    reps = run_isometry_sweep(cfg)
    assert reps[-1].M == "I" and max(map(abs, reps[-1].pairwise_snr_deviation_db)) < 1e-9
    text = isometry_csv(reps, cfg)
    assert text.splitlines()[1] == "M,eps_lo,eps_hi,dev_lo_db,dev_hi_db"
    assert verify_csv(text, recompute=True)["rows"] == 4


def test_sufficiency_report():
    rows = run_sufficiency_report(256, [1], [0.5], [0.1], 0.01, window="hamming")
    modes = [r["mode"] for r in rows]
    assert modes[:2] == ["pairwise", "tangent_plane"]
    single = rows[-1]
    assert single["mode"] == "single[hamming]"
    assert single["M"] == max(rows[-3]["M"], rows[-2]["M"])
    params = {"N": 256, "K": [1], "epsilon": [0.5], "delta": [0.1], "fail_prob": 0.01, "window": "hamming"}
    assert verify_csv(sufficiency_csv(rows, params), recompute=True)["rows"] == len(rows)


def test_verify_rejects_malformed():
    with pytest.raises(VerificationError):
        verify_csv("snr_db,value,kind\n1,2,CRB\n")
    with pytest.raises(VerificationError):
        verify_csv('# config: {"kind": "bounds"}\n# threshold_db: none\nsnr_db,value,kind\n1,2,XYZ\n')
    with pytest.raises(VerificationError):
        verify_csv('# config: {"kind": "weird"}\nx\n')
    with pytest.raises(VerificationError):
        verify_csv('# config: {"kind": "bounds", "N": -3}\n# threshold_db: none\nsnr_db,value,kind\n')

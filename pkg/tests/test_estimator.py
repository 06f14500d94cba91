import numpy as np
import pytest

from compest.estimator import (
    CompressiveFrequencyEstimator,
    DegenerateMatrixError,
    EstimatorConfig,
    ProjectedColumns,
    coarse_detect,
    cost,
    cost_derivatives,
    estimate,
    estimate_batch,
    matched_filter_cost,
    newton_refine,
    periodic_error,
)
from compest.measurement import MeasurementMatrix, sample_matrix
from compest.signal_manifold import SinusoidManifold

N = 64


@pytest.fixture(scope="module")
def unit64():
    return SinusoidManifold(N, normalization="unit_modulus")


def test_periodic_error():
    assert periodic_error(0.1, 2 * np.pi - 0.1) == pytest.approx(0.2)
    assert periodic_error(np.pi, 0.0) == pytest.approx(np.pi)
    np.testing.assert_allclose(periodic_error([0.0, 6.0], [0.0, 6.0 - 2 * np.pi]), [0.0, 0.0], atol=1e-15)


def test_noiseless_identity_exact(unit64):
    rng = np.random.default_rng(0)
    for w in rng.uniform(0, 2 * np.pi, 20):
        g = np.exp(1j * rng.uniform(0, 2 * np.pi))
        res = estimate(g * unit64.atoms(w), None, unit64)
        assert periodic_error(res.omega_hat, w) < 1e-8
        assert abs(res.gain_hat - g) < 1e-6
        assert res.converged


def test_noiseless_on_grid_point(unit64):
    w = 2 * np.pi * 17 / (4 * N)
    res = estimate(unit64.atoms(w), None, unit64)
    assert res.coarse_omega == pytest.approx(w)
    assert periodic_error(res.omega_hat, w) < 1e-12


def test_noiseless_compressive(unit64):
    A = sample_matrix("qpsk", 20, N, 1)
    w = 4.321
    res = estimate(A.entries @ unit64.atoms(w), A, unit64)
    assert periodic_error(res.omega_hat, w) < 1e-8


def test_coarse_detect_picks_grid_maximum(unit64):
    cfg = EstimatorConfig()
    cache = ProjectedColumns(None, unit64, cfg.resolved_grid_size(N))
    y = unit64.atoms(1.0)
    q, g = coarse_detect(y, None, unit64, cfg)
    G = matched_filter_cost(y[None, :], cache)[0]
    assert q == cache.grid[np.argmax(G)]
    assert abs(q - 1.0) <= cache.spacing / 2 + 1e-12


def test_cost_derivatives_match_finite_differences(unit64):
    rng = np.random.default_rng(4)
    A = sample_matrix("qpsk", 16, N, 4)
    y = A.entries @ unit64.atoms(2.0) + 0.3 * (rng.standard_normal(16) + 1j * rng.standard_normal(16))
    g = 0.8 - 0.3j
    for w in (1.97, 2.0, 2.05):
        d1, d2 = cost_derivatives(y, A, unit64, g, w)
        h = 1e-5
        f = lambda t: cost(y, A, unit64, g, t)
        fd1 = (f(w + h) - f(w - h)) / (2 * h)
        fd2 = (cost_derivatives(y, A, unit64, g, w + h)[0] - cost_derivatives(y, A, unit64, g, w - h)[0]) / (2 * h)
        assert abs(d1 - fd1) <= 1e-5 * max(abs(d1), 1.0)
        assert abs(d2 - fd2) <= 1e-5 * abs(d2)


def test_newton_from_near_start_converges(unit64):
    w = 1.234
    y = unit64.atoms(w)
    res = newton_refine(y, None, unit64, (1.0, w + 0.004), rounds=4)
    assert periodic_error(res.omega_hat, w) < 1e-9
    assert len(res.newton_trace) == 4 and res.converged


def test_newton_zero_rounds(unit64):
    res = newton_refine(unit64.atoms(0.5), None, unit64, (1.0, 0.5), rounds=0)
    assert res.omega_hat == 0.5 and not res.converged


def test_clamp_is_flagged(unit64):
    # start the refinement at a point where Newton jumps far; the clamp should hold it
    y = unit64.atoms(1.0)
    res = newton_refine(y, None, unit64, (1.0, 1.0 + 3 * np.pi / N), rounds=3,
                        clamp_interval=(1.0 + 2.9 * np.pi / N, 1.0 + 3.1 * np.pi / N))
    assert res.clamped


def test_zero_measurement_raises(unit64):
    with pytest.raises(DegenerateMatrixError):
        estimate(np.zeros(5), MeasurementMatrix(np.zeros((5, N))), unit64)


def test_zero_observation_is_handled(unit64):
    res = estimate(np.zeros(N), None, unit64)
    assert np.isfinite(res.omega_hat) and res.gain_hat == 0


def test_batch_matches_scalar(unit64):
    rng = np.random.default_rng(2)
    A = sample_matrix("rademacher", 12, N, 2)
    W = rng.uniform(0, 2 * np.pi, 8)
    Y = (A.entries @ unit64.atoms(W)).T + 0.05 * (rng.standard_normal((8, 12)) + 1j * rng.standard_normal((8, 12)))
    cache = ProjectedColumns(A, unit64, 4 * N)
    out = estimate_batch(Y, cache)
    for t in range(8):
        assert out["omega"][t] == pytest.approx(estimate(Y[t], A, unit64, cache=cache).omega_hat, abs=1e-12)


def test_config_validation():
    with pytest.raises(ValueError):
        EstimatorConfig(grid_size=10).resolved_grid_size(64)
    with pytest.raises(ValueError):
        EstimatorConfig(newton_rounds=-1).resolved_grid_size(64)


def test_sklearn_wrapper(unit64):
    rng = np.random.default_rng(9)
    # alternating gain/frequency updates converge linearly when Phi couples phase and frequency
    est = CompressiveFrequencyEstimator(n_samples=N, n_measurements=24, random_state=3, newton_rounds=10).fit()
    A = sample_matrix("qpsk", 24, N, 3).entries
    W = rng.uniform(0, 2 * np.pi, 5)
    Y = (A @ unit64.atoms(W)).T
    np.testing.assert_allclose(periodic_error(est.predict(Y), W), 0, atol=1e-8)
    assert est.score(Y, W) > -1e-8
    assert est.get_params()["n_measurements"] == 24
    with pytest.raises(ValueError):
        est.predict(np.ones((2, 5)))


def test_sklearn_not_fitted():
    from sklearn.exceptions import NotFittedError
    with pytest.raises(NotFittedError):
        CompressiveFrequencyEstimator(n_samples=8).predict(np.ones((1, 8)))


def test_rmse_tracks_crb_above_threshold(unit64):
    # N=64, M=16, effective SNR 5 dB, well above threshold
    M, T, snr_db = 16, 400, 5.0
    A = sample_matrix("qpsk", M, N, 0)
    s2 = M / (N * 10 ** (snr_db / 10))
    rng = np.random.default_rng(11)
    W = rng.uniform(0, 2 * np.pi, T)
    Y = (A.entries @ unit64.atoms(W)).T
    Y = Y + np.sqrt(s2 / 2) * (rng.standard_normal((T, M)) + 1j * rng.standard_normal((T, M)))
    out = estimate_batch(Y, ProjectedColumns(A, unit64, 4 * N))
    rmse = np.sqrt(np.mean(periodic_error(out["omega"], W) ** 2))
    crb = 6 * s2 / (M * (N * N - 1))
    assert abs(20 * np.log10(rmse / np.sqrt(crb))) < 1.5

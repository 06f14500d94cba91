"""Two-stage single-sinusoid frequency estimator.

Stage one maximizes the matched-filter cost
``G(q) = 0.5 |y^H Phi x(q)|^2 / ||Phi x(q)||^2`` over a uniform grid. Stage two
alternates Newton steps on
``S(g, w) = Re{y^H g Phi x(w)} - 0.5 |g|^2 ||Phi x(w)||^2`` in ``w`` with
least-squares gain updates. The batch functions handle many observations
against one matrix at once; the scalar API wraps them.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import TWO_PI, check_complex_2d, check_complex_vector, check_positive_int, wrap_angle
from .signal_manifold import SinusoidManifold
from .measurement import as_operator, sample_matrix


class DegenerateMatrixError(ValueError):
    """The measurement operator annihilates the manifold."""


@dataclass
class EstimatorConfig:
    """Grid and refinement settings; ``grid_size=None`` means ``4N``.

    ``clamp`` keeps Newton iterates within ``clamp_spacings`` grid spacings of
    the coarse estimate; clamped steps are flagged in the result.
    """

    grid_size: int | None = None
    newton_rounds: int = 3
    clamp: bool = True
    clamp_spacings: float = 2.0

    def resolved_grid_size(self, n_samples: int) -> int:
        size = 4 * n_samples if self.grid_size is None else self.grid_size
        check_positive_int(size, "grid_size")
        if size < n_samples:
            raise ValueError(f"grid_size must be >= N={n_samples}, got {size}")
        check_positive_int(self.newton_rounds, "newton_rounds", minimum=0)
        return size


class ProjectedColumns:
    """Read-only cache of ``Phi x(q)`` and ``||Phi x(q)||^2`` on the coarse grid."""

    def __init__(self, matrix, manifold: SinusoidManifold, grid_size: int):
        self.operator = as_operator(matrix, manifold.n_samples)
        self.manifold = manifold
        self.grid = TWO_PI * np.arange(grid_size) / grid_size
        self.spacing = TWO_PI / grid_size
        cols = self.operator @ manifold.atoms(self.grid)
        norms = np.sum(np.abs(cols) ** 2, axis=0)
        if norms.max() <= 0.0:
            raise DegenerateMatrixError("measurement matrix maps every grid sinusoid to zero")
        # a matrix can miss individual grid points; they score zero instead of 0/0
        self.inv_norms = np.where(norms > 0, 1.0 / np.where(norms > 0, norms, 1.0), 0.0)
        self.columns = cols
        cols.setflags(write=False)


@dataclass
class EstimateResult:
    omega_hat: float
    gain_hat: complex
    coarse_omega: float
    newton_trace: list = field(default_factory=list)  # (omega, |d2S|) per round
    converged: bool = False
    clamped: bool = False


def matched_filter_cost(Y: np.ndarray, cache: ProjectedColumns) -> np.ndarray:
    """``G`` for every row of ``Y`` (T x M) at every grid point (T x grid)."""
    return 0.5 * np.abs(Y.conj() @ cache.columns) ** 2 * cache.inv_norms


def _derivatives(Y, Phi, manifold, omega, g):
    """``S' = Re{r^H g Phi dx}`` and ``S'' = Re{r^H g Phi d2x} - |g|^2 ||Phi dx||^2``, row-wise.

    ``r = y - g Phi x(w)`` is the residual.
    """
    p0 = Phi @ manifold.atoms(omega)
    p1 = Phi @ manifold.atoms(omega, 1)
    p2 = Phi @ manifold.atoms(omega, 2)
    r = Y.T - g * p0
    d1 = np.real(np.sum(r.conj() * g * p1, axis=0))
    d2 = np.real(np.sum(r.conj() * g * p2, axis=0)) - np.abs(g) ** 2 * np.sum(np.abs(p1) ** 2, axis=0)
    return d1, d2


def cost(y, matrix, manifold: SinusoidManifold, gain: complex, omega: float) -> float:
    """``S(g, w)``, the log-likelihood up to constants."""
    Phi = as_operator(matrix, manifold.n_samples)
    p0 = Phi @ manifold.atoms(float(omega))
    y = check_complex_vector(y, "y", Phi.shape[0])
    return float(np.real(np.vdot(y, gain * p0)) - 0.5 * abs(gain) ** 2 * np.vdot(p0, p0).real)


def cost_derivatives(y, matrix, manifold: SinusoidManifold, gain: complex, omega: float) -> tuple[float, float]:
    """First and second partial derivatives of ``S`` in ``w``."""
    Phi = as_operator(matrix, manifold.n_samples)
    Y = check_complex_vector(y, "y", Phi.shape[0])[None, :]
    d1, d2 = _derivatives(Y, Phi, manifold, np.array([float(omega)]), np.array([complex(gain)]))
    return float(d1[0]), float(d2[0])


def _gain(Y, Phi, manifold, omega):
    p0 = Phi @ manifold.atoms(omega)
    nrm = np.sum(np.abs(p0) ** 2, axis=0)
    num = np.sum(p0.conj() * Y.T, axis=0)
    return np.where(nrm > 0, num / np.where(nrm > 0, nrm, 1.0), 0.0)


def estimate_batch(Y, cache: ProjectedColumns, rounds: int = 3, clamp: bool = True,
                   clamp_spacings: float = 2.0) -> dict:
    """Vectorized two-stage estimate for the rows of ``Y`` (T x M).

    Returns a dict of arrays: ``omega``, ``gain``, ``coarse``, ``converged``,
    ``clamped``, and ``trace`` of shape (rounds, 2, T).
    """
    Y = np.asarray(Y, dtype=np.complex128)
    Phi, manifold = cache.operator, cache.manifold
    G = matched_filter_cost(Y, cache)
    k = np.argmax(G, axis=1)  # first maximizer on ties
    coarse = cache.grid[k]
    gain = np.sum(cache.columns[:, k].conj() * Y.T, axis=0) * cache.inv_norms[k]
    omega = coarse.copy()
    lo = coarse - clamp_spacings * cache.spacing
    hi = coarse + clamp_spacings * cache.spacing
    clamped = np.zeros(len(omega), dtype=bool)
    skipped = np.zeros(len(omega), dtype=bool)
    trace = np.empty((rounds, 2, len(omega)))
    d2 = np.full(len(omega), np.nan)
    for i in range(rounds):
        d1, d2 = _derivatives(Y, Phi, manifold, omega, gain)
        ok = np.abs(d2) >= 1e-14 * np.abs(d1)
        ok &= ~((d1 == 0) & (d2 == 0))
        skipped |= ~ok & (d1 != 0)
        step = np.where(ok, d1 / np.where(ok, d2, 1.0), 0.0)
        omega = omega - step
        if clamp:
            out = (omega < lo) | (omega > hi)
            clamped |= out
            omega = np.clip(omega, lo, hi)
        gain = _gain(Y, Phi, manifold, omega)
        trace[i, 0] = omega
        trace[i, 1] = np.abs(d2)
    if rounds:
        _, d2 = _derivatives(Y, Phi, manifold, omega, gain)
    converged = (d2 < 0) & ~skipped if rounds else np.zeros(len(omega), dtype=bool)
    return {"omega": wrap_angle(omega), "gain": gain, "coarse": coarse,
            "converged": converged, "clamped": clamped, "trace": trace}


def _setup(y, matrix, manifold, config):
    config = config or EstimatorConfig()
    size = config.resolved_grid_size(manifold.n_samples)
    cache = ProjectedColumns(matrix, manifold, size)
    y = check_complex_vector(y, "y", cache.operator.shape[0])
    return y, cache, config


def coarse_detect(y, matrix, manifold: SinusoidManifold, config: EstimatorConfig | None = None,
                  cache: ProjectedColumns | None = None) -> tuple[float, complex]:
    """Grid maximizer ``q*`` of ``G`` and the gain ``(Phi x(q*))^H y / ||Phi x(q*)||^2``."""
    if cache is None:
        y, cache, _ = _setup(y, matrix, manifold, config)
    else:
        y = check_complex_vector(y, "y", cache.operator.shape[0])
    G = matched_filter_cost(y[None, :], cache)[0]
    k = int(np.argmax(G))
    gain = complex(np.vdot(cache.columns[:, k], y) * cache.inv_norms[k])
    return float(cache.grid[k]), gain


def newton_refine(y, matrix, manifold: SinusoidManifold, start: tuple[complex, float],
                  rounds: int = 3, clamp_interval: tuple[float, float] | None = None) -> EstimateResult:
    """Run ``rounds`` Newton frequency steps, each followed by a gain update.

    ``clamp_interval`` optionally confines iterates; :func:`estimate` passes
    the coarse estimate plus or minus two grid spacings.
    """
    rounds = check_positive_int(rounds, "rounds", minimum=0)
    Phi = as_operator(matrix, manifold.n_samples)
    Y = check_complex_vector(y, "y", Phi.shape[0])[None, :]
    g0, w0 = start
    if not (np.isfinite(g0) and np.isfinite(w0)):
        raise ValueError("start values must be finite")
    omega = np.array([float(w0)])
    gain = np.array([complex(g0)])
    trace, converged, clamped = [], False, False
    skipped = False
    for _ in range(rounds):
        d1, d2 = _derivatives(Y, Phi, manifold, omega, gain)
        if abs(d2[0]) < 1e-14 * abs(d1[0]):
            skipped = True
        elif d1[0] != 0.0:
            omega = omega - d1 / d2
        if clamp_interval is not None:
            lo, hi = clamp_interval
            if not lo <= omega[0] <= hi:
                clamped = True
                omega = np.clip(omega, lo, hi)
        gain = _gain(Y, Phi, manifold, omega)
        trace.append((float(omega[0]), float(abs(d2[0]))))
    if rounds:
        _, d2 = _derivatives(Y, Phi, manifold, omega, gain)
        converged = bool(d2[0] < 0) and not skipped
    return EstimateResult(wrap_angle(float(omega[0])), complex(gain[0]), float(w0), trace, converged, clamped)


def estimate(y, matrix, manifold: SinusoidManifold, config: EstimatorConfig | None = None,
             cache: ProjectedColumns | None = None) -> EstimateResult:
    """Coarse grid detection followed by Newton refinement."""
    config = config or EstimatorConfig()
    if cache is None:
        y, cache, config = _setup(y, matrix, manifold, config)
    q, g = coarse_detect(y, None, manifold, config, cache=cache)
    interval = None
    if config.clamp:
        interval = (q - config.clamp_spacings * cache.spacing, q + config.clamp_spacings * cache.spacing)
    res = newton_refine(y, cache.operator, manifold, (g, q), config.newton_rounds, interval)
    res.coarse_omega = q
    return res


def periodic_error(omega_hat, omega_true):
    """Distance on the circle, in ``[0, pi]``."""
    d = np.mod(np.abs(np.asarray(omega_hat, dtype=float) - np.asarray(omega_true, dtype=float)), TWO_PI)
    out = np.minimum(d, TWO_PI - d)
    return float(out) if out.ndim == 0 else out


class CompressiveFrequencyEstimator(BaseEstimator):
    """scikit-learn style wrapper around the two-stage estimator.

    ``fit`` builds the projected-column cache for a measurement matrix (or
    draws one from ``distribution``/``random_state`` when ``matrix`` is None);
    ``predict`` maps each row of measurements to a frequency estimate.

    Parameters
    ----------
    n_samples : int
        Signal length N.
    window, normalization : str
        Passed to :class:`SinusoidManifold`.
    grid_factor : int
        Coarse grid size as a multiple of N.
    newton_rounds : int
    clamp : bool
    matrix : MeasurementMatrix or array, optional
        Measurement operator; ``None`` with ``n_measurements=None`` means identity.
    n_measurements : int, optional
        Rows of a random matrix drawn at fit time when ``matrix`` is None.
    distribution : str
    random_state : int
    """

    def __init__(self, n_samples: int = 256, window: str = "ones", normalization: str = "unit_modulus",
                 grid_factor: int = 4, newton_rounds: int = 3, clamp: bool = True, matrix=None,
                 n_measurements: int | None = None, distribution: str = "qpsk", random_state: int = 0):
        self.n_samples = n_samples
        self.window = window
        self.normalization = normalization
        self.grid_factor = grid_factor
        self.newton_rounds = newton_rounds
        self.clamp = clamp
        self.matrix = matrix
        self.n_measurements = n_measurements
        self.distribution = distribution
        self.random_state = random_state

    def _operator(self):
        if self.matrix is not None:
            return as_operator(self.matrix, self.n_samples)
        if self.n_measurements is None:
            return np.eye(self.n_samples, dtype=np.complex128)
        return sample_matrix(self.distribution, self.n_measurements, self.n_samples, self.random_state).entries

    def fit(self, X=None, y=None):
        """Build the cache. ``X`` is ignored apart from a width check."""
        self.manifold_ = SinusoidManifold(self.n_samples, self.window, self.normalization)
        op = self._operator()
        cfg = EstimatorConfig(self.grid_factor * self.n_samples, self.newton_rounds, self.clamp)
        self.cache_ = ProjectedColumns(op, self.manifold_, cfg.resolved_grid_size(self.n_samples))
        self.n_features_in_ = op.shape[0]
        if X is not None:
            check_complex_2d(X, n_features=self.n_features_in_)
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "cache_")
        Y = check_complex_2d(X, n_features=self.n_features_in_)
        out = estimate_batch(Y, self.cache_, self.newton_rounds, self.clamp)
        self.frequencies_ = out["omega"]
        self.gains_ = out["gain"]
        self.converged_ = out["converged"]
        return out["omega"]

    def score(self, X, y) -> float:
        """Negative root mean squared periodic error against true frequencies ``y``."""
        err = periodic_error(self.predict(X), np.asarray(y, dtype=float))
        return -float(np.sqrt(np.mean(np.square(err))))

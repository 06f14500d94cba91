"""Isometry analysis of random projections on the sinusoid manifold.

Closed forms for the singular values of tangent-plane and two-tone matrices,
empirical isometry constants of a given measurement matrix, and the explicit
(very conservative) sufficient-measurement counts from the covering argument.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import NamedTuple

import numpy as np
import scipy.linalg
from scipy.optimize import minimize_scalar

from ._validation import TWO_PI, check_positive, check_positive_int, check_probability
from .signal_manifold import Normalization, SinusoidManifold, window_spectrum, window_spectrum_derivatives
from .measurement import MeasurementMatrix, concentration_rate, philox


def _require_unit_energy(manifold: SinusoidManifold) -> None:
    if manifold.normalization is not Normalization.UNIT_ENERGY:
        raise ValueError("this operation is defined for unit_energy manifolds")


@dataclass(frozen=True, eq=False)
class TangentPlaneMatrix:
    """``T = [x(w_1) .. x(w_K), tau dx(w_1) .. tau dx(w_K)]`` (N x 2K)."""

    entries: np.ndarray
    omega: np.ndarray
    tau: float

    @property
    def n_components(self) -> int:
        return self.omega.shape[0]


def tangent_matrix(manifold: SinusoidManifold, omega) -> TangentPlaneMatrix:
    _require_unit_energy(manifold)
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    tau = window_spectrum_derivatives(manifold).tau
    T = np.hstack([manifold.atoms(w), tau * manifold.atoms(w, 1)])
    T.setflags(write=False)
    return TangentPlaneMatrix(T, w, float(tau))


def mixture_matrix(manifold: SinusoidManifold, omega) -> np.ndarray:
    """``X(w) = [x(w_1) .. x(w_K)]``."""
    return manifold.atoms(np.atleast_1d(np.asarray(omega, dtype=float)))


def smallest_singular_value(matrix) -> float:
    """Smallest singular value from LAPACK's divide-and-conquer SVD (``numpy.linalg.svd``)."""
    a = np.asarray(matrix)
    if a.ndim != 2 or a.shape[0] < a.shape[1]:
        raise ValueError(f"expected a tall N x L matrix with N >= L, got shape {a.shape}")
    return float(np.linalg.svd(a, compute_uv=False)[-1])


def pair_singular_value_closed_form(manifold: SinusoidManifold, omega1: float, omega2: float) -> float:
    """``sqrt(1 - |H(w1 - w2)|)``, the smallest singular value of ``[x(w1) x(w2)]``."""
    _require_unit_energy(manifold)
    return float(np.sqrt(max(1.0 - abs(window_spectrum(manifold, omega1 - omega2)), 0.0)))


def tangent_singular_value_closed_form(manifold: SinusoidManifold) -> float:
    """``sqrt(1 - tau chi)``, the smallest singular value of ``T(w)`` for one tone."""
    c = window_spectrum_derivatives(manifold)
    return float(np.sqrt(1.0 - c.tau * c.chi))


# -- empirical isometry -------------------------------------------------------

class SamplerMode(str, Enum):
    PAIRWISE = "pairwise"
    TANGENT = "tangent"
    MIXTURE = "mixture"


@dataclass(frozen=True)
class SamplerSpec:
    """Sampling set for :func:`empirical_isometry`.

    ``pairwise`` visits pairs ``(x(w_i), c x(w_k))`` over a frequency grid of
    ``grid_factor * N`` points, ``n_phases`` relative phases and
    ``n_gain_ratios`` log-spaced gain ratios in ``gain_ratio_range``.
    ``tangent`` takes the exact extremes of the ratio over the whole complex
    span of ``T(w)`` at each grid frequency (or at ``frequencies`` if given).
    ``mixture`` draws ``n_random`` pairs of K-tone mixtures with complex normal gains.
    """

    mode: SamplerMode = SamplerMode.PAIRWISE
    grid_factor: int = 4
    n_phases: int = 16
    n_gain_ratios: int = 8
    gain_ratio_range: tuple[float, float] = (0.25, 4.0)
    frequencies: tuple | None = None
    n_components: int = 1
    n_random: int = 10000
    seed: int = 0
    degenerate_tol: float = 1e-9

    def __post_init__(self):
        object.__setattr__(self, "mode", SamplerMode(self.mode))
        if self.frequencies is not None:
            object.__setattr__(self, "frequencies", tuple(float(w) for w in np.ravel(self.frequencies)))

    def describe(self) -> dict:
        d = asdict(self)
        d["mode"] = self.mode.value
        return d


@dataclass(eq=False)
class IsometryReport:
    """Extremes of ``r = sqrt(N/M) ||A v|| / ||v||`` over a sampled set."""

    M: int
    epsilon_lower: float
    epsilon_upper: float
    pairwise_snr_deviation_db: tuple[float, float]
    samples_evaluated: int
    degenerate_filtered: int = 0
    config: dict = field(default_factory=dict)

    @property
    def epsilon(self) -> float:
        """Symmetric constant ``max(-eps_lo, eps_hi)``."""
        return max(-self.epsilon_lower, self.epsilon_upper)

    CSV_HEADER = "M,eps_lo,eps_hi,dev_lo_db,dev_hi_db"

    def csv_row(self) -> str:
        lo, hi = self.pairwise_snr_deviation_db
        return f"{self.M},{float(self.epsilon_lower)!r},{float(self.epsilon_upper)!r},{float(lo)!r},{float(hi)!r}"


def _report(M, r_lo, r_hi, n, degenerate, sampler) -> IsometryReport:
    with np.errstate(divide="ignore"):
        dev = (float(20 * np.log10(r_lo)), float(20 * np.log10(r_hi)))
    return IsometryReport(M, float(r_lo - 1.0), float(r_hi - 1.0), dev, int(n), int(degenerate),
                          sampler.describe())


def _grid(manifold, sampler) -> np.ndarray:
    if sampler.frequencies is not None:
        return np.asarray(sampler.frequencies, dtype=float)
    n = sampler.grid_factor * manifold.n_samples
    return TWO_PI * np.arange(n) / n


def _pairwise_extremes(A, manifold, sampler, gram_scale):
    w = _grid(manifold, sampler)
    X = manifold.atoms(w)
    P = A @ X
    GA = P.conj().T @ P
    GX = X.conj().T @ X
    da, dx = np.real(np.diag(GA)), np.real(np.diag(GX))
    lo_g, hi_g = sampler.gain_ratio_range
    ratios = np.geomspace(lo_g, hi_g, sampler.n_gain_ratios)
    phases = TWO_PI * np.arange(sampler.n_phases) / sampler.n_phases
    tol2 = sampler.degenerate_tol**2
    r2_lo, r2_hi, n, degenerate = np.inf, -np.inf, 0, 0
    for g in ratios:
        for ph in phases:
            c = g * np.exp(1j * ph)
            # ||B(x_i - c x_k)||^2 = G_ii + |c|^2 G_kk - 2 Re(c G_ik)
            num = da[:, None] + g * g * da[None, :] - 2.0 * np.real(c * GA)
            den = dx[:, None] + g * g * dx[None, :] - 2.0 * np.real(c * GX)
            ok = den > tol2
            n_ok = int(np.count_nonzero(ok))
            degenerate += den.size - n_ok
            n += n_ok
            if n_ok:
                q = num[ok] / den[ok]
                r2_lo = min(r2_lo, q.min())
                r2_hi = max(r2_hi, q.max())
    r_lo = np.sqrt(max(r2_lo, 0.0) * gram_scale)
    r_hi = np.sqrt(r2_hi * gram_scale)
    return r_lo, r_hi, n, degenerate


def _tangent_extremes(A, manifold, sampler, gram_scale):
    """Exact min/max of ||A T q||^2 / ||T q||^2 over complex q, per frequency."""
    if sampler.frequencies is not None and sampler.n_components > 1:
        sets = np.asarray(sampler.frequencies, dtype=float).reshape(-1, sampler.n_components)
    elif sampler.n_components > 1:
        rng = philox(sampler.seed, manifold.n_samples, sampler.n_components, 7)
        sets = rng.uniform(0.0, TWO_PI, (sampler.n_random, sampler.n_components))
    else:
        sets = _grid(manifold, sampler)[:, None]
    r2_lo, r2_hi, degenerate = np.inf, -np.inf, 0
    for w in sets:
        T = tangent_matrix(manifold, w).entries
        GT = T.conj().T @ T
        if np.linalg.eigvalsh(GT)[0] <= sampler.degenerate_tol**2:
            degenerate += 1
            continue
        AT = A @ T
        ev = scipy.linalg.eigh(AT.conj().T @ AT, GT, eigvals_only=True)
        r2_lo = min(r2_lo, ev[0])
        r2_hi = max(r2_hi, ev[-1])
    n = len(sets) - degenerate
    if n == 0:
        raise ValueError("every sampled tangent plane was degenerate")
    return np.sqrt(max(r2_lo, 0.0) * gram_scale), np.sqrt(r2_hi * gram_scale), n, degenerate


def _mixture_extremes(A, manifold, sampler, gram_scale):
    K = check_positive_int(sampler.n_components, "n_components")
    rng = philox(sampler.seed, manifold.n_samples, K, 11)
    n = sampler.n_random
    w = rng.uniform(0.0, TWO_PI, (n, 2 * K))
    g = rng.standard_normal((n, 2 * K)) + 1j * rng.standard_normal((n, 2 * K))
    g[:, K:] *= -1.0  # x(theta_1) - x(theta_2)
    num, den = np.empty(n), np.empty(n)
    for s in range(0, n, 1000):
        ws, gs = w[s:s + 1000], g[s:s + 1000]
        V = np.einsum("ntk,tk->nt", manifold.atoms(ws.ravel()).reshape(manifold.n_samples, *ws.shape), gs)
        num[s:s + 1000] = np.sum(np.abs(A @ V) ** 2, axis=0)
        den[s:s + 1000] = np.sum(np.abs(V) ** 2, axis=0)
    ok = den > sampler.degenerate_tol**2
    q = num[ok] / den[ok]
    return (np.sqrt(max(q.min(), 0.0) * gram_scale), np.sqrt(q.max() * gram_scale),
            int(ok.sum()), int(n - ok.sum()))


def empirical_isometry(matrix: MeasurementMatrix, manifold: SinusoidManifold,
                       sampler: SamplerSpec | None = None) -> IsometryReport:
    """Empirical isometry extremes of ``matrix`` on a sampled subset of the manifold.

    The extremes are over a finite sample, so they are lower bounds on the true
    isometry constants and depend on the chosen grid.
    """
    sampler = sampler or SamplerSpec()
    if matrix.cols != manifold.n_samples:
        raise ValueError(f"matrix has {matrix.cols} columns, manifold has N={manifold.n_samples}")
    A = matrix.entries
    gram_scale = manifold.n_samples / matrix.rows
    if sampler.mode is SamplerMode.PAIRWISE:
        out = _pairwise_extremes(A, manifold, sampler, gram_scale)
    elif sampler.mode is SamplerMode.TANGENT:
        out = _tangent_extremes(A, manifold, sampler, gram_scale)
    else:
        out = _mixture_extremes(A, manifold, sampler, gram_scale)
    return _report(matrix.rows, *out, sampler)


# -- sufficient measurement counts --------------------------------------------

class IsometryMode(str, Enum):
    PAIRWISE = "pairwise"
    TANGENT_PLANE = "tangent_plane"


def sufficient_measurements_mixture(N: int, K: int, epsilon: float, delta: float,
                                    fail_prob: float, mode="pairwise") -> int:
    """Measurement count guaranteeing the K-tone isometry with probability ``1 - fail_prob``.

    Follows the covering construction: with ``eps0 = epsilon/3.5`` and ``K'`` equal
    to ``K`` (pairwise) or ``2K`` (tangent plane), a grid of spacing set by
    ``R = 4 pi N sqrt(N K') / (eps0 delta)`` and ``S = R^K' (6/eps0)^(2K')``
    points, and a union bound with concentration at ``32 epsilon / 49``. The
    result is sufficient, and far larger than what works in practice.

    Returns
    -------
    int
        Smallest ``M`` with ``4 S exp(-M c(32 epsilon/49)) <= fail_prob``.
    """
    N = check_positive_int(N, "N")
    K = check_positive_int(K, "K")
    check_probability(epsilon, "epsilon")
    check_positive(delta, "delta")
    check_probability(fail_prob, "fail_prob")
    mode = IsometryMode(mode)
    k_eff = K if mode is IsometryMode.PAIRWISE else 2 * K
    eps0 = epsilon / 3.5
    rate = concentration_rate(32.0 * epsilon / 49.0)
    if rate <= 0:
        raise ValueError("concentration rate c(32 eps/49) must be positive")
    log_R = np.log(4.0 * np.pi) + np.log(N) + 0.5 * np.log(N * k_eff) - np.log(eps0) - np.log(delta)
    log_S = k_eff * (log_R + 2.0 * np.log(6.0 / eps0))
    m = (np.log(4.0) + log_S - np.log(fail_prob)) / rate
    return int(np.ceil(m - 1e-9))


# -- single-sinusoid constants ------------------------------------------------

class WindowHypothesisError(ValueError):
    pass


class WindowHypotheses(NamedTuple):
    sidelobe_peak: float  # D, largest |H|^2 local max outside the main lobe
    main_lobe_edge: float  # first local minimum of |H|^2
    monotone_near_zero: bool


def _refined_sidelobe_peak(manifold, w, P, start, n_refine=5):
    """Largest ``|H|^2`` beyond ``w[start]``, polishing the tallest sampled peaks."""
    tail = np.arange(max(start, 1), len(w) - 1)
    peaks = tail[(P[tail] >= P[tail - 1]) & (P[tail] >= P[tail + 1])]
    best = float(P[start:].max())
    for i in peaks[np.argsort(P[peaks])[::-1][:n_refine]]:
        res = minimize_scalar(lambda t: -abs(window_spectrum(manifold, t)) ** 2,
                              bounds=(w[i - 1], w[i + 1]), method="bounded",
                              options={"xatol": 1e-12 / manifold.n_samples})
        best = max(best, float(-res.fun))
    return best


def check_window_hypotheses(manifold: SinusoidManifold, oversample: int = 64) -> WindowHypotheses:
    """Numerically check the side-lobe conditions on ``|H|^2``.

    (i) every local maximum of ``|H|^2`` away from zero is below ``D < 1``;
    (ii) ``|H|^2`` is non-increasing on ``(0, pi/(2N))``.
    Raises :class:`WindowHypothesisError` naming the violated condition.
    """
    _require_unit_energy(manifold)
    N = manifold.n_samples
    w = np.linspace(0.0, np.pi, oversample * N // 2 + 1)
    P = np.abs(window_spectrum(manifold, w)) ** 2
    d = np.diff(P)
    rising = np.flatnonzero(d > 1e-15)
    if rising.size == 0:
        edge_idx, D = len(w) - 1, 0.0
    else:
        edge_idx = int(rising[0])
        D = _refined_sidelobe_peak(manifold, w, P, edge_idx)
    near = np.linspace(0.0, np.pi / (2 * N), 257)
    Pn = np.abs(window_spectrum(manifold, near)) ** 2
    monotone = bool(np.all(np.diff(Pn) <= 1e-14))
    if not monotone:
        raise WindowHypothesisError("condition (ii) violated: |H|^2 increases on (0, pi/(2N))")
    if D >= 1.0 - 1e-12:
        raise WindowHypothesisError(f"condition (i) violated: side-lobe peak D = {D:.6g} is not < 1")
    return WindowHypotheses(D, float(w[edge_idx]), monotone)


class RegimeConstants(NamedTuple):
    mu: float
    sigma_signal_bound: float
    close_regime_cutoff: float


def single_sinusoid_regime_constants(manifold: SinusoidManifold, epsilon: float) -> RegimeConstants:
    """Constants splitting frequency pairs into close and far regimes.

    ``mu = 4 alpha (eps/2) sqrt(1 - tau chi) / 5``; pairs closer than
    ``mu / N^1.5`` are covered by the tangent-plane argument, farther ones by
    the two-tone mixture bound with ``delta = sqrt(0.4 zeta mu^2 / N)``.
    """
    check_positive(epsilon, "epsilon")
    check_window_hypotheses(manifold)
    c = window_spectrum_derivatives(manifold)
    N = manifold.n_samples
    mu = 4.0 * c.alpha * (epsilon / 2.0) * np.sqrt(1.0 - c.tau * c.chi) / 5.0
    return RegimeConstants(float(mu), float(np.sqrt(0.4 * c.zeta * mu * mu / N)), float(mu / N**1.5))


class TaylorBounds(NamedTuple):
    e_norm_bound: float
    v_norm_lower: float
    e_norm: float  # exact ||e||
    v_norm: float  # exact ||v||


def taylor_error_bounds(manifold: SinusoidManifold, omega_pair, gains) -> TaylorBounds:
    """First-order expansion of ``g1 x(w1) + g2 x(w2)`` about the midpoint.

    With ``q = (w1 + w2)/2`` and ``Delta = w2 - w1``, the sum equals ``v + e`` where
    ``v = (g1 + g2) x(q) + (Delta/2)(g2 - g1) dx(q)``. Returns the bounds
    ``||e|| <= N^2 Delta^2 / (4 sqrt 2)`` and
    ``||v|| >= sqrt(1 - tau chi) |Delta| / (sqrt 2 tau)`` together with the
    exact norms. The lower bound on ``||v||`` needs ``|Delta| <= 2 tau``.
    """
    _require_unit_energy(manifold)
    w1, w2 = (float(w) for w in omega_pair)
    g = np.asarray(gains, dtype=np.complex128)
    if g.shape != (2,) or abs(np.linalg.norm(g) - 1.0) > 1e-10:
        raise ValueError("gains must be two complex numbers with unit norm")
    c = window_spectrum_derivatives(manifold)
    delta = w2 - w1
    if abs(delta) > 2.0 * c.tau * (1 + 1e-12):
        raise ValueError(f"|Delta| = {abs(delta):.3g} exceeds 2 tau = {2 * c.tau:.3g}")
    q = 0.5 * (w1 + w2)
    v = (g[0] + g[1]) * manifold.atoms(q) + 0.5 * delta * (g[1] - g[0]) * manifold.atoms(q, 1)
    e = g[0] * manifold.atoms(w1) + g[1] * manifold.atoms(w2) - v
    N = manifold.n_samples
    return TaylorBounds(
        N * N * delta * delta / (4.0 * np.sqrt(2.0)),
        float(np.sqrt(1.0 - c.tau * c.chi) * abs(delta) / (np.sqrt(2.0) * c.tau)),
        float(np.linalg.norm(e)),
        float(np.linalg.norm(v)),
    )

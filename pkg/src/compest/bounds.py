"""Fisher information, Cramer-Rao and Ziv-Zakai bounds for sinusoid frequency.

SNR conventions: curves are tabulated against the effective per-measurement
SNR ``M / (N sigma^2)`` in dB. In those units both the CRB and the periodic
ZZB of a single sinusoid depend on ``N`` only, so one curve serves every ``M``.
"""
from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

import numpy as np
from scipy.special import erfc

from ._validation import check_positive, check_positive_int
from .signal_manifold import MixtureParams, SinusoidManifold
from .measurement import as_operator

CRB_SLOPE_PER_DB = -0.1  # log10(MSE) falls by 1/10 per dB when MSE ~ sigma^2


class Parametrization(str, Enum):
    FREQ_PHASE = "freq_phase"  # (omega_1..K, phi_1..K), |g_l| held fixed
    FREQ_GAIN_RE_IM = "freq_gain_re_im"  # (omega_1..K, Re g_1..K, Im g_1..K)


class BoundKind(str, Enum):
    CRB = "CRB"
    ZZB = "ZZB"


class SingularFisherError(np.linalg.LinAlgError):
    def __init__(self, smallest: float, message: str | None = None):
        super().__init__(message or f"Fisher matrix is singular (smallest eigenvalue {smallest:.3e})")
        self.smallest_eigenvalue = smallest


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class FisherMatrix:
    """Real symmetric Fisher information matrix with its noise variance."""

    entries: np.ndarray
    sigma2: float
    parametrization: Parametrization | None = None

    def __post_init__(self):
        F = np.array(self.entries, dtype=float)
        if F.ndim != 2 or F.shape[0] != F.shape[1] or F.size == 0:
            raise ValueError("Fisher matrix must be square and nonempty")
        scale = max(np.max(np.abs(F)), 1e-300)
        if np.max(np.abs(F - F.T)) > 1e-10 * scale:
            raise ValueError("Fisher matrix must be symmetric")
        F = 0.5 * (F + F.T)
        F.setflags(write=False)
        object.__setattr__(self, "entries", F)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.entries)

    def quadratic_form(self, a) -> float:
        a = np.asarray(a, dtype=float)
        return float(a @ self.entries @ a)

    def condition_number(self) -> float:
        ev = self.eigenvalues()
        return float(np.inf) if ev[0] <= 0 else float(ev[-1] / ev[0])


def _tangent_columns(manifold: SinusoidManifold, params: MixtureParams,
                     parametrization: Parametrization) -> np.ndarray:
    """Columns ``d x / d theta_m`` in parameter order."""
    w = params.frequencies
    g = params.gains
    X0 = manifold.atoms(w)
    X1 = manifold.atoms(w, 1)
    dfreq = X1 * g
    if parametrization is Parametrization.FREQ_PHASE:
        return np.hstack([dfreq, 1j * X0 * g])
    return np.hstack([dfreq, X0, 1j * X0])


def fisher_matrix(manifold: SinusoidManifold, params: MixtureParams, matrix=None,
                  sigma2: float = 1.0, parametrization="freq_phase") -> FisherMatrix:
    """FIM of ``theta`` from ``y = Phi x(theta) + z`` with ``z ~ CN(0, sigma2 I)``.

    ``F = (2/sigma2) Re{J^H J}`` where ``J`` stacks the projected partial
    derivatives ``Phi dx/dtheta_m``. ``matrix=None`` means ``Phi = I_N``.

    Parameter order is the K frequencies first, then either the K phases
    (``freq_phase``, dim 2K) or the K real parts followed by the K imaginary
    parts of the gains (``freq_gain_re_im``, dim 3K).
    """
    sigma2 = check_positive(sigma2, "sigma2")
    parametrization = Parametrization(parametrization)
    if np.any(params.gains == 0):
        raise ValueError("zero gain makes the frequency unidentifiable (singular parametrization)")
    Phi = as_operator(matrix, manifold.n_samples)
    J = Phi @ _tangent_columns(manifold, params, parametrization)
    F = (2.0 / sigma2) * np.real(J.conj().T @ J)
    return FisherMatrix(F, sigma2, parametrization)


def crb_frequency(fim: FisherMatrix, index: int = 0) -> float:
    """``e^T F^{-1} e`` for the coordinate ``index`` (a frequency under default ordering)."""
    if not 0 <= index < fim.dim:
        raise IndexError(f"index {index} out of range for a {fim.dim}-dim FIM")
    ev = fim.eigenvalues()
    if ev[0] <= 1e-12 * max(ev[-1], 1e-300):
        raise SingularFisherError(float(ev[0]))
    e = np.zeros(fim.dim)
    e[index] = 1.0
    return float(np.linalg.solve(fim.entries, e)[index])


def bayesian_information_matrix(fims: Iterable, prior_score_outer=None) -> FisherMatrix:
    """``B = E_theta[F(theta)] + E_theta[s s^T]`` with ``s`` the prior score.

    ``fims`` holds Fisher matrices evaluated at prior samples. The prior term
    defaults to zero, which is exact for a uniform prior on the circle.
    """
    fims = list(fims)
    mats = [f.entries if isinstance(f, FisherMatrix) else np.asarray(f, dtype=float) for f in fims]
    if not mats:
        raise ValueError("need at least one FIM sample")
    B = np.mean(mats, axis=0)
    if prior_score_outer is not None:
        P = np.asarray(prior_score_outer, dtype=float)
        if P.shape != B.shape:
            raise ValueError(f"prior term has shape {P.shape}, expected {B.shape}")
        B = B + P
    sigma2 = fims[0].sigma2 if isinstance(fims[0], FisherMatrix) else float("nan")
    return FisherMatrix(B, sigma2)


def q_function(x):
    """Standard normal tail probability ``Q(x) = erfc(x/sqrt2)/2``."""
    return 0.5 * erfc(np.asarray(x, dtype=float) / np.sqrt(2.0))


def detection_error_probability(d: float, p1: float, p2: float, sigma2: float) -> float:
    """Minimum error probability for deciding between two signals at distance ``d``.

    Signals observed in ``CN(0, sigma2 I)`` noise with prior weights ``p1, p2``.
    """
    if d < 0:
        raise ValueError("d must be nonnegative")
    check_positive(p1, "p1")
    check_positive(p2, "p2")
    sigma = np.sqrt(check_positive(sigma2, "sigma2"))
    w1 = p1 / (p1 + p2)
    w2 = p2 / (p1 + p2)
    if d == 0:
        return min(w1, w2)
    a = d / (np.sqrt(2.0) * sigma)
    b = sigma / (np.sqrt(2.0) * d) * np.log(p1 / p2)
    return float(w1 * q_function(a + b) + w2 * q_function(a - b))


# -- periodic Ziv-Zakai bound --------------------------------------------------

@dataclass(frozen=True)
class QuadratureSpec:
    """Composite Simpson settings; ``initial_panels=None`` means ``max(4096, 16N)``."""

    initial_panels: int | None = None
    rel_tol: float = 1e-8
    max_panels: int = 1 << 22


def _dirichlet_abs(N: int, h: np.ndarray) -> np.ndarray:
    with np.errstate(invalid="ignore", divide="ignore"):
        D = np.sin(N * h / 2.0) / (N * np.sin(h / 2.0))
    return np.abs(np.where(h == 0.0, 1.0, D))


def _zzb_simpson(N: int, snr_scale: float, panels: int) -> float:
    h = np.linspace(0.0, np.pi, panels + 1)
    f = q_function(np.sqrt(np.maximum(snr_scale * (1.0 - _dirichlet_abs(N, h)), 0.0))) * h
    w = np.ones(panels + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return float((np.pi / panels) / 3.0 * np.dot(w, f))


def zzb_single_sinusoid(N: int, effective_M: float, sigma2: float,
                        quadrature: QuadratureSpec | None = None) -> float:
    """Periodic-MSE ZZB on the frequency of one unit-modulus sinusoid.

    Integrates ``Q(sqrt((M/sigma2)(1 - |D_N(h)|))) h`` over ``[0, pi]`` with
    ``D_N`` the normalized Dirichlet kernel. ``effective_M = N`` is the
    uncompressed bound; ``effective_M = M`` its compressive counterpart.
    Panels are doubled until two successive Simpson estimates agree.
    """
    N = check_positive_int(N, "N", minimum=2)
    effective_M = check_positive(effective_M, "effective_M")
    sigma2 = check_positive(sigma2, "sigma2")
    if effective_M > N * (1 + 1e-12):
        raise ValueError(f"effective_M must lie in (0, N], got {effective_M}")
    q = quadrature or QuadratureSpec()
    panels = q.initial_panels or max(4096, 16 * N)
    panels += panels % 2
    scale = effective_M / sigma2
    prev = _zzb_simpson(N, scale, panels)
    while panels < q.max_panels:
        panels *= 2
        cur = _zzb_simpson(N, scale, panels)
        if abs(cur - prev) <= q.rel_tol * abs(cur):
            return cur
        prev = cur
    raise QuadratureError(f"ZZB quadrature did not converge within {q.max_panels} panels "
                          f"(last change {abs(cur - prev) / abs(cur):.2e})")


def valley_fill(values) -> np.ndarray:
    """Suffix maximum: ``out[i] = max(values[i:])``."""
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("values must be a nonempty 1-D array")
    return np.maximum.accumulate(v[::-1])[::-1]


@dataclass(eq=False)
class BoundCurve:
    snr_grid_db: np.ndarray
    values: np.ndarray
    kind: BoundKind
    threshold_db: float | None = None
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        self.snr_grid_db = np.asarray(self.snr_grid_db, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.kind = BoundKind(self.kind)
        if self.snr_grid_db.ndim != 1 or self.snr_grid_db.shape != self.values.shape:
            raise ValueError("snr grid and values must be 1-D arrays of equal length")
        if np.any(np.diff(self.snr_grid_db) <= 0):
            raise ValueError("snr grid must be strictly ascending")
        if np.any(self.values <= 0) or not np.all(np.isfinite(self.values)):
            raise ValueError("bound values must be finite and strictly positive")

    def to_csv(self, path=None) -> str:
        """CSV with header ``snr_db,value,kind``; config and threshold in ``#`` lines."""
        buf = io.StringIO()
        buf.write(f"# config: {json.dumps(self.config, sort_keys=True)}\n")
        thr = "none" if self.threshold_db is None else repr(float(self.threshold_db))
        buf.write(f"# threshold_db: {thr}\n")
        buf.write("snr_db,value,kind\n")
        for s, v in zip(self.snr_grid_db, self.values):
            buf.write(f"{float(s)!r},{float(v)!r},{self.kind.value}\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, text_or_path) -> list["BoundCurve"]:
        """Parse one or more curves (grouped by ``kind``) from CSV text or a path."""
        text = str(text_or_path)
        if "\n" not in text:
            with open(text, "r") as fh:
                text = fh.read()
        config, threshold, rows = {}, None, []
        header_seen = False
        for line in text.splitlines():
            if line.startswith("# config:"):
                config = json.loads(line.split(":", 1)[1])
            elif line.startswith("# threshold_db:"):
                raw = line.split(":", 1)[1].strip()
                threshold = None if raw == "none" else float(raw)
            elif line.startswith("#") or not line.strip():
                continue
            elif not header_seen:
                if line.strip() != "snr_db,value,kind":
                    raise ValueError(f"unexpected bounds CSV header {line!r}")
                header_seen = True
            else:
                s, v, k = line.split(",")
                rows.append((float(s), float(v), k.strip()))
        if not header_seen:
            raise ValueError("bounds CSV has no header row")
        curves = []
        for kind in dict.fromkeys(r[2] for r in rows):
            sel = [r for r in rows if r[2] == kind]
            thr = threshold if kind == BoundKind.ZZB.value else None
            curves.append(cls([r[0] for r in sel], [r[1] for r in sel], kind, thr, config))
        return curves


def zzb_curve(N: int, snr_grid_db, quadrature: QuadratureSpec | None = None) -> BoundCurve:
    """Periodic ZZB against effective SNR ``M/(N sigma^2)`` (M-independent)."""
    snr = np.asarray(snr_grid_db, dtype=float)
    vals = [zzb_single_sinusoid(N, N, 10.0 ** (-s / 10.0), quadrature) for s in snr]
    return BoundCurve(snr, vals, BoundKind.ZZB, config={"N": int(N)})


def crb_curve(N: int, snr_grid_db) -> BoundCurve:
    """``6 sigma^2/(M(N^2-1))`` at effective SNR, i.e. ``6/(N snr (N^2-1))``."""
    snr = np.asarray(snr_grid_db, dtype=float)
    lin = 10.0 ** (snr / 10.0)
    return BoundCurve(snr, 6.0 / (N * lin * (N * N - 1.0)), BoundKind.CRB, config={"N": int(N)})


def window_slopes(snr_db, values, window_db: float) -> np.ndarray:
    """Least-squares slope of ``log10(values)`` over ``[s, s + window_db]`` for each grid ``s``.

    Entries whose window would run past the end of the grid are NaN.
    """
    snr = np.asarray(snr_db, dtype=float)
    ly = np.log10(np.asarray(values, dtype=float))
    eps = 1e-9 * max(1.0, window_db)
    out = np.full(snr.shape, np.nan)
    for i, s in enumerate(snr):
        if s + window_db > snr[-1] + eps:
            continue
        m = (snr >= s - eps) & (snr <= s + window_db + eps)
        if np.count_nonzero(m) < 2:
            continue
        out[i] = np.polyfit(snr[m], ly[m], 1)[0]
    return out


def slope_threshold(snr_db, values, slope_tolerance: float = 0.01,
                    window_db: float = 6.0) -> float | None:
    """Smallest grid SNR from which every window slope stays near ``-0.1``/dB.

    Returns None when the last evaluable window already fails, or when no
    window fits in the grid.
    """
    snr = np.asarray(snr_db, dtype=float)
    slopes = window_slopes(snr, values, window_db)
    evaluable = np.flatnonzero(np.isfinite(slopes))
    threshold = None
    for i in evaluable[::-1]:
        if abs(slopes[i] - CRB_SLOPE_PER_DB) <= slope_tolerance:
            threshold = float(snr[i])
        else:
            break
    return threshold


def zzb_threshold(curve: BoundCurve, slope_tolerance: float = 0.01,
                  window_db: float = 6.0) -> float | None:
    """Asymptotic threshold of a bound curve, or None if it never reaches the CRB slope."""
    span = curve.snr_grid_db[-1] - curve.snr_grid_db[0]
    if span < 20.0 - 1e-9:
        raise ValueError(f"threshold detection needs a grid spanning >= 20 dB, got {span:g} dB")
    return slope_threshold(curve.snr_grid_db, curve.values, slope_tolerance, window_db)


def required_measurements(N: int, sigma2: float, threshold_snr_db: float) -> float:
    """Measurements needed to operate above the threshold: ``N sigma2 10^(thr/10)``."""
    if not (np.isfinite(N) and np.isfinite(sigma2) and np.isfinite(threshold_snr_db)):
        raise ValueError("inputs must be finite")
    check_positive(N, "N")
    check_positive(sigma2, "sigma2")
    return float(N * sigma2 * 10.0 ** (threshold_snr_db / 10.0))

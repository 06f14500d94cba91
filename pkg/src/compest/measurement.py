"""Random compressive measurement matrices.

Matrices are drawn with numpy's Philox4x64 counter-based generator keyed by
``SeedSequence([seed, M, N, distribution_code])``, so a matrix is a pure function
of ``(distribution, seed, M, N)`` and regenerates bit-identically on any platform
numpy supports.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import (
    check_complex_2d,
    check_complex_vector,
    check_positive,
    check_positive_int,
)

MATRIX_FORMAT = "compest-matrix"
MATRIX_FORMAT_VERSION = 1


class Distribution(str, Enum):
    QPSK = "qpsk"  # uniform on {+-1, +-j} / sqrt(N)
    RADEMACHER = "rademacher"  # uniform on {+-1} / sqrt(N)
    GAUSSIAN = "gaussian"  # real N(0, 1/N)


_DIST_CODES = {Distribution.QPSK: 1, Distribution.RADEMACHER: 2, Distribution.GAUSSIAN: 3}
_QPSK_SYMBOLS = np.array([1.0, 1j, -1.0, -1j])


class CovarianceKind(str, Enum):
    WHITE = "white"
    PER_PROJECTION = "per_projection"  # K1 = diag(||w_l||^2)
    FOLDED = "folded"  # K2 = A A^H


class SingularCovarianceError(ValueError):
    def __init__(self, smallest: float):
        super().__init__(f"noise covariance is singular (smallest singular value {smallest:.3e})")
        self.smallest = smallest


def philox(*key: int) -> np.random.Generator:
    """A Philox generator keyed by a tuple of nonnegative integers."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in key])))


@dataclass(frozen=True, eq=False)
class MeasurementMatrix:
    """An ``M x N`` measurement operator ``A`` (or a scaled identity)."""

    entries: np.ndarray
    distribution: Distribution | None = None
    seed: int | None = None
    kind: str = "random"
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("random", "identity"):
            raise ValueError(f"kind must be 'random' or 'identity', got {self.kind!r}")
        entries = np.asarray(self.entries, dtype=np.complex128)
        if entries.ndim != 2:
            raise ValueError("entries must be a 2-D matrix")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def rows(self) -> int:
        return self.entries.shape[0]

    @property
    def cols(self) -> int:
        return self.entries.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    def header(self) -> dict:
        return {
            "format": MATRIX_FORMAT,
            "version": MATRIX_FORMAT_VERSION,
            "rows": self.rows,
            "cols": self.cols,
            "distribution": None if self.distribution is None else self.distribution.value,
            "seed": self.seed,
            "kind": self.kind,
            "scale": self.scale,
        }


def sample_matrix(dist, M: int, N: int, seed: int) -> MeasurementMatrix:
    """Draw an ``M x N`` matrix with i.i.d. zero-mean, variance ``1/N`` entries."""
    dist = Distribution(dist)
    M = check_positive_int(M, "M")
    N = check_positive_int(N, "N")
    seed = check_positive_int(seed, "seed", minimum=0)
    rng = philox(seed, M, N, _DIST_CODES[dist])
    if dist is Distribution.QPSK:
        entries = _QPSK_SYMBOLS[rng.integers(0, 4, size=(M, N))] / np.sqrt(N)
    elif dist is Distribution.RADEMACHER:
        entries = (2.0 * rng.integers(0, 2, size=(M, N)) - 1.0) / np.sqrt(N)
    else:
        entries = rng.standard_normal((M, N)) / np.sqrt(N)
    return MeasurementMatrix(entries.astype(np.complex128), dist, seed, "random")


def identity_matrix(N: int, scale: float = 1.0) -> MeasurementMatrix:
    """``scale * I_N``; ``scale = sqrt(M/N)`` gives the SNR-penalty reference."""
    N = check_positive_int(N, "N")
    return MeasurementMatrix(scale * np.eye(N, dtype=np.complex128), None, None, "identity", float(scale))


def as_operator(matrix, n_samples: int | None = None) -> np.ndarray:
    """Dense complex array for a ``MeasurementMatrix``, raw array, or ``None`` (identity)."""
    if matrix is None:
        if n_samples is None:
            raise ValueError("n_samples is required when matrix is None")
        return np.eye(n_samples, dtype=np.complex128)
    arr = matrix.entries if isinstance(matrix, MeasurementMatrix) else np.asarray(matrix, dtype=np.complex128)
    if arr.ndim != 2:
        raise ValueError("measurement matrix must be 2-D")
    if n_samples is not None and arr.shape[1] != n_samples:
        raise ValueError(f"measurement matrix has {arr.shape[1]} columns, signal has {n_samples} samples")
    return arr


def apply(matrix: MeasurementMatrix, v) -> np.ndarray:
    """Noiseless measurement ``A v``; ``v`` may be a vector or an ``(N, T)`` stack."""
    arr = np.asarray(v, dtype=np.complex128)
    if arr.ndim not in (1, 2) or arr.shape[0] != matrix.cols:
        raise ValueError(f"expected leading dimension {matrix.cols}, got shape {arr.shape}")
    if matrix.kind == "identity":
        return matrix.scale * arr
    return matrix.entries @ arr


def concentration_rate(delta: float) -> float:
    """Exponent ``c(delta) = delta^2/4 - delta^3/6``."""
    return delta**2 / 4.0 - delta**3 / 6.0


def concentration_bound(M: int, delta: float) -> float:
    """Tail bound ``4 exp(-M c(delta))`` on ``|N/M ||Av||^2 - ||v||^2| > delta``."""
    if not 0.0 < delta < 1.5:
        raise ValueError(f"delta must lie in (0, 3/2) so that c(delta) > 0, got {delta}")
    return float(4.0 * np.exp(-M * concentration_rate(delta)))


def concentration_audit(dist, M: int, N: int, delta: float, trials: int, seed: int,
                        vector=None, chunk: int = 1000) -> tuple[float, float]:
    """Monte Carlo check of the concentration inequality for a fixed unit vector.

    Draws ``trials`` fresh matrices and counts how often
    ``|N/M ||Av||^2 - 1| > delta``. Trial chunks use independent Philox streams
    keyed by ``(seed, M, N, distribution, chunk index)``, so the result does not depend on how the
    work is scheduled.

    Returns
    -------
    (empirical_tail, bound)
    """
    dist = Distribution(dist)
    bound = concentration_bound(M, delta)
    M = check_positive_int(M, "M")
    N = check_positive_int(N, "N")
    trials = check_positive_int(trials, "trials")
    if vector is None:
        rng = philox(seed, N, 0)
        vector = rng.standard_normal(N) + 1j * rng.standard_normal(N)
    v = check_complex_vector(vector, "vector", N)
    v = v / np.linalg.norm(v)

    violations = 0
    for ci, start in enumerate(range(0, trials, chunk)):
        n = min(chunk, trials - start)
        rng = philox(seed, M, N, _DIST_CODES[dist], ci)
        if dist is Distribution.QPSK:
            rows = _QPSK_SYMBOLS[rng.integers(0, 4, size=(n * M, N))]
        elif dist is Distribution.RADEMACHER:
            rows = 2.0 * rng.integers(0, 2, size=(n * M, N)) - 1.0
        else:
            rows = rng.standard_normal((n * M, N))
        energy = np.abs(rows @ v) ** 2 / N  # |w_l^T v|^2 with w_l = row/sqrt(N)
        stat = (N / M) * energy.reshape(n, M).sum(axis=1)
        violations += int(np.count_nonzero(np.abs(stat - 1.0) > delta))
    return violations / trials, float(bound)


def whitened_effective_matrix(matrix: MeasurementMatrix, kind) -> tuple[np.ndarray, np.ndarray]:
    """Effective matrix ``K^{-1/2} A`` for the per-projection or folded noise model.

    ``K1 = diag(||w_l||^2)`` arises when every projection sees its own noise;
    ``K2 = A A^H`` when a single noisy snapshot is projected. The singular values
    of ``K`` are returned so callers can check that they sit near one.
    """
    kind = CovarianceKind(kind)
    A = matrix.entries
    if kind is CovarianceKind.WHITE:
        return A.copy(), np.ones(matrix.rows)
    if kind is CovarianceKind.PER_PROJECTION:
        k = np.sum(np.abs(A) ** 2, axis=1)
        if k.min() <= 1e-12:
            raise SingularCovarianceError(float(k.min()))
        return A / np.sqrt(k)[:, None], np.sort(k)[::-1]
    if matrix.rows > matrix.cols:
        raise ValueError("folded noise model needs M <= N")
    K = A @ A.conj().T
    evals, evecs = np.linalg.eigh(K)
    if evals.min() <= 1e-12:
        raise SingularCovarianceError(float(max(evals.min(), 0.0)))
    evals = np.maximum(evals, 1e-12)
    inv_sqrt = (evecs / np.sqrt(evals)) @ evecs.conj().T
    return inv_sqrt @ A, np.sort(evals)[::-1]


@dataclass(frozen=True)
class NoiseModel:
    variance: float
    covariance_kind: CovarianceKind = CovarianceKind.WHITE

    def __post_init__(self):
        check_positive(self.variance, "variance")
        object.__setattr__(self, "covariance_kind", CovarianceKind(self.covariance_kind))

    def covariance(self, matrix: MeasurementMatrix) -> np.ndarray:
        """Covariance ``sigma^2 K`` of the measurement noise."""
        A = matrix.entries
        if self.covariance_kind is CovarianceKind.WHITE:
            K = np.eye(matrix.rows)
        elif self.covariance_kind is CovarianceKind.PER_PROJECTION:
            K = np.diag(np.sum(np.abs(A) ** 2, axis=1))
        else:
            K = A @ A.conj().T
        return self.variance * K


# -- file format -------------------------------------------------------------

def save_matrix(path, matrix: MeasurementMatrix) -> None:
    """Write ``matrix`` as an ``.npz`` archive with a JSON header.

    Keys: ``header`` (JSON text: format, version, rows, cols, distribution,
    seed, kind, scale) and ``entries`` (complex128, ``rows x cols``).
    """
    with open(path, "wb") as fh:
        np.savez(fh, header=np.array(json.dumps(matrix.header())), entries=matrix.entries)


def _matrix_from_archive(data) -> MeasurementMatrix:
    header = json.loads(str(data["header"]))
    if header.get("format") != MATRIX_FORMAT:
        raise ValueError(f"not a {MATRIX_FORMAT} file (format={header.get('format')!r})")
    entries = data["entries"]
    if entries.shape != (header["rows"], header["cols"]):
        raise ValueError("matrix header does not match stored entries")
    dist = header["distribution"]
    return MeasurementMatrix(
        entries,
        None if dist is None else Distribution(dist),
        header["seed"],
        header["kind"],
        float(header["scale"]),
    )


def load_matrix(path) -> MeasurementMatrix:
    with np.load(Path(path), allow_pickle=False) as data:
        return _matrix_from_archive(data)


def save_measurements(path, y, matrix: MeasurementMatrix, **meta) -> None:
    """Measurement file: a matrix archive plus ``y`` and a JSON ``meta`` record."""
    y = check_complex_vector(y, "y", matrix.rows)
    with open(path, "wb") as fh:
        np.savez(fh, header=np.array(json.dumps(matrix.header())), entries=matrix.entries,
                 y=y, meta=np.array(json.dumps(meta)))


def load_measurements(path) -> tuple[np.ndarray, MeasurementMatrix, dict]:
    with np.load(Path(path), allow_pickle=False) as data:
        if "y" not in data:
            raise ValueError("measurement file has no 'y' array")
        matrix = _matrix_from_archive(data)
        meta = json.loads(str(data["meta"])) if "meta" in data else {}
        return check_complex_vector(data["y"], "y", matrix.rows), matrix, meta


class CompressiveProjection(TransformerMixin, BaseEstimator):
    """Random projection of N-sample signals onto M compressive measurements.

    ``transform`` maps each row ``x`` of ``X`` to ``A x``.
    """

    def __init__(self, n_components: int = 40, distribution: str = "qpsk", random_state: int = 0):
        self.n_components = n_components
        self.distribution = distribution
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_complex_2d(X)
        self.n_features_in_ = X.shape[1]
        self.matrix_ = sample_matrix(self.distribution, self.n_components, self.n_features_in_,
                                     self.random_state)
        return self

    def transform(self, X):
        check_is_fitted(self, "matrix_")
        X = check_complex_2d(X, n_features=self.n_features_in_)
        return X @ self.matrix_.entries.T

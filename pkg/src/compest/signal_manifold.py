"""Windowed complex sinusoids and their geometry.

A sinusoid of frequency ``omega`` has entries ``h[n] * exp(1j*omega*c[n])`` with
centred sample offsets ``c[n] = n - (N+1)/2`` (1-based ``n``), so the offsets run
``-(N-1)/2 ... (N-1)/2``. Everything downstream (bounds, isometry analysis,
the estimator) consumes vectors built here.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

import numpy as np
from scipy.signal import windows as _sigwin

from ._validation import check_positive_int, wrap_angle

WINDOW_FAMILIES = ("ones", "hamming", "hanning", "triangular", "blackman")


class Normalization(str, Enum):
    UNIT_MODULUS = "unit_modulus"
    UNIT_ENERGY = "unit_energy"


def window_values(name: str, n_samples: int) -> np.ndarray:
    """Return the named window as nonnegative weights on ``|h_n|^2``."""
    if name == "ones":
        w = np.ones(n_samples)
    elif name == "hamming":
        w = _sigwin.hamming(n_samples, sym=True)
    elif name == "hanning":
        w = _sigwin.hann(n_samples, sym=True)
    elif name == "triangular":
        w = _sigwin.triang(n_samples, sym=True)
    elif name == "blackman":
        w = _sigwin.blackman(n_samples, sym=True)
    else:
        raise ValueError(f"unknown window family {name!r}; choose from {WINDOW_FAMILIES}")
    # blackman endpoints come out as -1e-17
    return np.clip(w, 0.0, None)


class SinusoidManifold:
    """The manifold ``{x(omega)}`` of windowed sinusoids of length ``n_samples``.

    Parameters
    ----------
    n_samples : int
        Signal length N (at least 2).
    window : str or array-like
        Either a family name from ``WINDOW_FAMILIES`` (interpreted as the
        squared taps ``|h_n|^2``; taps are its square root) or an explicit
        length-N vector of nonnegative taps ``h_n``.
    normalization : {"unit_modulus", "unit_energy"}
        ``unit_modulus`` uses ``h_n = 1`` for every sample (only the "ones"
        window is accepted); ``unit_energy`` rescales so ``sum h_n^2 = 1``.
    """

    def __init__(self, n_samples: int, window="ones", normalization="unit_energy"):
        self.n_samples = check_positive_int(n_samples, "n_samples", minimum=2)
        self.normalization = Normalization(normalization)
        if isinstance(window, str):
            self.window_name = window
            taps = np.sqrt(window_values(window, self.n_samples))
        else:
            self.window_name = "custom"
            taps = np.asarray(window, dtype=float)
            if taps.shape != (self.n_samples,):
                raise ValueError(f"window must have shape ({self.n_samples},), got {taps.shape}")
            if np.any(taps < 0) or not np.all(np.isfinite(taps)):
                raise ValueError("window taps must be finite and nonnegative")
        if np.count_nonzero(taps) < 2:
            raise ValueError("window must have at least two nonzero taps")

        if self.normalization is Normalization.UNIT_MODULUS:
            if not np.allclose(taps, taps[0]):
                raise ValueError("unit_modulus normalization requires the all-ones window")
            taps = np.ones(self.n_samples)
        else:
            taps = taps / np.sqrt(np.sum(taps**2))
        taps.setflags(write=False)
        self.taps = taps
        offsets = np.arange(1, self.n_samples + 1) - (self.n_samples + 1) / 2.0
        offsets.setflags(write=False)
        self.offsets = offsets

    def __repr__(self):
        return (f"SinusoidManifold(n_samples={self.n_samples}, window={self.window_name!r}, "
                f"normalization={self.normalization.value!r})")

    @property
    def energy(self) -> float:
        """Squared norm of every ``x(omega)``."""
        return float(np.sum(self.taps**2))

    def atoms(self, omega, order: int = 0) -> np.ndarray:
        """Columns ``d^order x / d omega^order`` at each frequency.

        Scalar ``omega`` gives a length-N vector; an array gives an
        ``(N, len(omega))`` matrix.
        """
        if order not in (0, 1, 2):
            raise ValueError(f"order must be 0, 1 or 2, got {order}")
        om = np.asarray(omega, dtype=float)
        scalar = om.ndim == 0
        # x(omega + 2pi) = (-1)**(N-1) x(omega), so only a 4pi reduction is exact
        om = np.mod(np.atleast_1d(om), 4.0 * np.pi)
        c = self.offsets
        phase = np.exp(1j * np.outer(c, om))
        scale = self.taps * (1j * c) ** order if order else self.taps.astype(complex)
        out = scale[:, None] * phase
        return out[:, 0] if scalar else out


def sinusoid(manifold: SinusoidManifold, omega) -> np.ndarray:
    """Windowed sinusoid ``x(omega)``."""
    return manifold.atoms(omega, 0)


def sinusoid_derivative(manifold: SinusoidManifold, omega, order: int = 1) -> np.ndarray:
    """First or second frequency derivative of ``x(omega)``."""
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order}")
    return manifold.atoms(omega, order)


def window_spectrum(manifold: SinusoidManifold, omega):
    """``H(omega) = sum_n |h_n|^2 exp(1j*omega*c_n)``.

    ``|<x(w1), x(w2)>| = |H(w1 - w2)|`` for every pair of frequencies.
    """
    om = np.asarray(omega, dtype=float)
    p = manifold.taps**2
    H = np.exp(1j * np.multiply.outer(om, manifold.offsets)) @ p
    return complex(H) if om.ndim == 0 else H


class WindowConstants(NamedTuple):
    chi: float
    zeta: float
    tau: float
    alpha: float


def window_spectrum_derivatives(manifold: SinusoidManifold) -> WindowConstants:
    """Window constants that govern single-sinusoid isometry.

    With ``p_n = h_n^2`` (summing to one), first moment ``m1 = sum p_n c_n`` and
    second moment ``m2 = sum p_n c_n^2``::

        chi   = |dH(0)/domega|              = |m1|
        tau   = 1/||dx/domega||             = 1/sqrt(m2)
        alpha = 1/(N tau)
        zeta  = -(1/(2 N^2)) d^2|H|^2(0)     = (m2 - m1^2) / N^2

    All are exact moment sums, so they can serve as oracles.
    """
    if manifold.normalization is not Normalization.UNIT_ENERGY:
        raise ValueError("window constants are defined for unit_energy manifolds")
    p = manifold.taps**2
    c = manifold.offsets
    m1 = float(np.dot(p, c))
    m2 = float(np.dot(p, c * c))
    n = manifold.n_samples
    chi = abs(m1)
    tau = 1.0 / np.sqrt(m2)
    if tau * chi >= 1.0 - 1e-15:
        raise ValueError("degenerate window: tau*chi = 1 (single effective tap)")
    return WindowConstants(chi=chi, zeta=(m2 - m1 * m1) / n**2, tau=tau, alpha=1.0 / (n * tau))


@dataclass(frozen=True, eq=False)
class MixtureParams:
    """Gains and frequencies of a K-sinusoid mixture ``sum_l g_l x(omega_l)``."""

    gains: np.ndarray
    frequencies: np.ndarray

    def __post_init__(self):
        g = np.atleast_1d(np.asarray(self.gains, dtype=np.complex128))
        w = np.atleast_1d(np.asarray(self.frequencies, dtype=float))
        if g.ndim != 1 or w.ndim != 1 or g.shape != w.shape or g.size == 0:
            raise ValueError("gains and frequencies must be 1-D with equal length K >= 1")
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(w))):
            raise ValueError("gains and frequencies must be finite")
        object.__setattr__(self, "gains", g)
        object.__setattr__(self, "frequencies", wrap_angle(w))

    @property
    def n_components(self) -> int:
        return self.gains.shape[0]


def mixture(manifold: SinusoidManifold, params: MixtureParams) -> np.ndarray:
    """``X(omega) g`` for the given mixture."""
    return manifold.atoms(params.frequencies) @ params.gains


def inner_magnitude(manifold: SinusoidManifold, omega1: float, omega2: float) -> float:
    """``|<x(omega1), x(omega2)>|`` by direct summation."""
    return float(abs(np.vdot(sinusoid(manifold, omega1), sinusoid(manifold, omega2))))

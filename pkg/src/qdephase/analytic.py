"""Closed-form reference solutions: stationary spectra, the quenched diffusion
correlation and its two-frequency spectrum, the pulsed-noise (harmonic-well)
eigensystem, and the Markovianity criterion.

These are the package's internal ground truth; the grid pipeline is tested
against them and the spectroscopy fitter consumes them as model classes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .core import (
    DenseKernel,
    KernelSpec,
    LocalInTimeKernel,
    StationaryPolynomialKernel,
)
from .errors import DomainError, InvalidModelError

__all__ = [
    "QuenchedOUParams",
    "HarmonicNoiseParams",
    "stationary_spectrum",
    "quenched_ou_correlation",
    "quenched_ou_bispectrum",
    "QuenchedOUBispectrumValue",
    "quenched_cw_attenuation",
    "CWAttenuation",
    "harmonic_mode",
    "harmonic_spectrum",
    "is_markovian",
    "MarkovVerdict",
]


@dataclass(frozen=True)
class QuenchedOUParams:
    """Diffusion suddenly released at t = 0, pinned to zero before."""

    d0: float
    d1: float

    def __post_init__(self):
        if self.d0 <= 0 or self.d1 <= 0:
            raise InvalidModelError("quenched diffusion needs d0 > 0 and d1 > 0")

    @property
    def tau_c(self) -> float:
        return math.sqrt(self.d1 / self.d0)


@dataclass(frozen=True)
class HarmonicNoiseParams:
    """Pulsed noise confined near t = 0 by a quadratic well."""

    d0: float
    d1: float
    alpha: float

    def __post_init__(self):
        if self.alpha <= 0 or self.d1 <= 0:
            raise InvalidModelError("harmonic confinement needs alpha > 0 and d1 > 0")
        if not self.omega0 > -2.0 * self.d0:
            raise InvalidModelError("model ill defined: lowest kernel eigenvalue not positive")

    @property
    def omega0(self) -> float:
        return math.sqrt(4.0 * self.alpha * self.d1)

    def level(self, n: int) -> float:
        return (n + 0.5) * self.omega0


def stationary_spectrum(spec: StationaryPolynomialKernel, omega) -> np.ndarray | float:
    """Spectrum ``S(w) = [sum_k D_k^H w^{2k} + i sum_k D_k^A w^{2k-1}]^{-1}``.

    Scalar kernels accept arrays of frequencies and return arrays.
    """
    if not isinstance(spec, StationaryPolynomialKernel):
        raise DomainError("stationary spectrum needs a constant-coefficient kernel")
    if spec.n == 1:
        om = np.asarray(omega, dtype=float)
        poly = np.zeros_like(om)
        for k in range(spec.order + 1):
            poly = poly + spec.h_matrix(k)[0, 0] * om ** (2 * k)
        if np.any(poly == 0):
            raise DomainError("kernel polynomial singular at a requested frequency")
        out = 1.0 / poly
        return float(out) if np.isscalar(omega) else out
    mat = spec.frequency_matrix(float(omega))
    try:
        return np.linalg.inv(mat)
    except np.linalg.LinAlgError:
        raise DomainError(f"kernel polynomial singular at omega={omega}") from None


def quenched_ou_correlation(p: QuenchedOUParams, t, t_prime) -> np.ndarray | float:
    """Correlation of the quenched diffusion; zero whenever either time is <= 0."""
    tau = p.tau_c
    ta = np.asarray(t, dtype=float)
    tb = np.asarray(t_prime, dtype=float)
    val = (
        (np.exp(-np.abs(ta - tb) / tau) - np.exp(-(ta + tb) / tau))
        / (2.0 * p.d0 * tau)
        * (ta > 0)
        * (tb > 0)
    )
    return float(val) if np.isscalar(t) and np.isscalar(t_prime) else val


class QuenchedOUBispectrumValue(NamedTuple):
    """Regular (quench) part plus the Lorentzian profile multiplying the
    stationary diagonal delta."""

    regular: complex
    diagonal_profile: float


def quenched_ou_bispectrum(p: QuenchedOUParams, omega1: float, omega2: float) -> QuenchedOUBispectrumValue:
    """Two-frequency spectrum of the quenched diffusion.

    The full spectrum is ``delta(w1 - w2) * diagonal_profile + regular``;
    the delta factor cannot be tabulated pointwise, so the two parts are
    returned separately.  ``diagonal_profile`` is evaluated at ``omega1``.
    """
    tau = p.tau_c
    regular = -(tau / (4.0 * math.pi * p.d0)) / (
        (1.0 - 1j * omega1 * tau) * (1.0 + 1j * omega2 * tau)
    )
    diagonal = 1.0 / (p.d0 * (1.0 + (omega1 * tau) ** 2))
    return QuenchedOUBispectrumValue(regular=complex(regular), diagonal_profile=float(diagonal))


@dataclass(frozen=True)
class CWAttenuation:
    """Attenuation of a windowed cosine control after the quench.

    ``stationary_quad`` and ``quench_quad`` are the two contributions to the
    full quadratic form (f|G|f); ``chi`` is half their sum.
    """

    chi: float
    stationary_quad: float
    quench_quad: float


def quenched_cw_attenuation(
    p: QuenchedOUParams,
    g: float,
    omega: float,
    t0: float,
    duration: float,
    resolution: int = 20000,
) -> CWAttenuation:
    """Attenuation for ``f = g cos(omega (t - t0))`` on ``[t0, t0 + duration]``.

    The stationary double integral is evaluated by high-resolution quadrature
    of the exponential correlation (no closed form is assumed); the quench
    correction enters through the exact exponential-overlap square.
    """
    if t0 < 0 or duration <= 0:
        raise DomainError("control must start at or after the quench with positive duration")
    tau, d0 = p.tau_c, p.d0
    s = np.linspace(0.0, duration, resolution + 1)
    f = g * np.cos(omega * s)
    # (f|G0|f) = 2 int_0^T ds f(s) e^{-s/tau} int_0^s du f(u) e^{u/tau} / (2 d0 tau)
    inner = cumulative_trapezoid(f * np.exp((s - duration) / tau), s, initial=0.0)
    outer = np.trapezoid(f * np.exp(-(s - duration) / tau) * inner, s)
    stationary = outer / (d0 * tau)
    # quench overlap: int f(t) e^{-t/tau} dt over the window, squared
    overlap = (
        g
        * math.exp(-t0 / tau)
        * tau
        * (1.0 + (omega * tau * math.sin(omega * duration) - math.cos(omega * duration)) * math.exp(-duration / tau))
        / (1.0 + (omega * tau) ** 2)
    )
    quench = -(overlap**2) / (2.0 * d0 * tau)
    return CWAttenuation(
        chi=0.5 * (stationary + quench),
        stationary_quad=float(stationary),
        quench_quad=float(quench),
    )


def harmonic_mode(p: HarmonicNoiseParams, n: int, t) -> np.ndarray | float:
    """n-th eigenmode of the harmonic-well kernel in the time basis.

    Evaluated with the stable three-term recurrence for orthonormal Hermite
    functions, so high orders neither overflow nor lose orthonormality:
    ``psi_0 = pi^{-1/4} e^{-x^2/2}``,
    ``psi_{k+1} = x sqrt(2/(k+1)) psi_k - sqrt(k/(k+1)) psi_{k-1}``
    on the scaled variable ``x = (alpha/d1)^{1/4} t``.
    """
    if n < 0:
        raise DomainError("mode index must be non-negative")
    beta = (p.alpha / p.d1) ** 0.25
    x = beta * np.asarray(t, dtype=float)
    prev = np.zeros_like(x)
    cur = np.pi**-0.25 * np.exp(-(x**2) / 2.0)
    for k in range(n):
        nxt = x * math.sqrt(2.0 / (k + 1)) * cur - math.sqrt(k / (k + 1)) * prev
        prev, cur = cur, nxt
    out = math.sqrt(beta) * cur
    return float(out) if np.isscalar(t) else out


def harmonic_spectrum(p: HarmonicNoiseParams, n: int) -> float:
    """Discrete spectrum value ``1/((n + 1/2) omega0 + d0)``."""
    if n < 0:
        raise DomainError("mode index must be non-negative")
    return 1.0 / (p.level(n) + p.d0)


class MarkovVerdict(NamedTuple):
    markovian: bool
    reason: str


def is_markovian(spec: KernelSpec) -> MarkovVerdict:
    """A noise process is Markovian exactly when its kernel is local in time
    with no constraints beyond the first derivative."""
    if isinstance(spec, DenseKernel):
        return MarkovVerdict(False, "not local-in-time")
    if not isinstance(spec, LocalInTimeKernel):
        return MarkovVerdict(False, f"unknown kernel class {type(spec).__name__}")
    times = np.linspace(-1.0, 1.0, 5)
    for k in range(2, spec.order + 1):
        if np.any(spec.h_values(times, k)) or np.any(spec.a_values(times, k)):
            return MarkovVerdict(
                False,
                f"order-{k} derivative constraint stores history in the field derivatives",
            )
    return MarkovVerdict(True, "local-in-time with constraints of order <= 1")

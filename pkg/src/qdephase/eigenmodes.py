"""Noise eigenmodes of the correlation operator and the two-frequency spectrum.

The weighted operator ``sqrt(w) G sqrt(w)`` is diagonalized so that the mode
functions come out orthonormal in the trapezoid inner product; its eigenvalues
are the generalized spectrum values ``S``.  For any control, the overlap
``sum_j S_j |(mode_j|f)|^2`` equals the time-basis quadratic form exactly
(up to truncation), which is the basis-invariance property tests rely on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ControlModulation, TimeGrid
from .errors import DomainError, GridMismatchError
from .gridops import BoundaryCondition, CorrelationMatrix

__all__ = [
    "EigenmodeDecomposition",
    "Bispectrum",
    "decompose",
    "filter_coefficient",
    "bispectrum_from_correlation",
    "reconstruct_correlation",
]

DEFAULT_TRUNCATION = 1e-10
DEGENERACY_RTOL = 1e-10


@dataclass
class EigenmodeDecomposition:
    """Noise eigenmodes sorted by descending spectral weight.

    ``modes[:, j]`` is the j-th mode function on the flattened grid; modes are
    orthonormal under the weighted inner product.  ``dominant_frequencies``
    are metadata only: the mode label is its index, since any monotone
    reparametrization of the eigenvalue axis is equally valid.  Within a
    degenerate group (equal eigenvalues at relative tolerance 1e-10) the
    individual mode functions are solver-dependent; only their span is
    contractual.
    """

    grid: TimeGrid
    n: int
    eigenvalues: np.ndarray  # shape (J,), descending, > 0
    modes: np.ndarray  # shape (n_points * n, J)
    dominant_frequencies: np.ndarray  # shape (J,)
    degenerate_groups: np.ndarray  # shape (J,) int group ids
    truncation: float
    dropped_weight: float  # sum of discarded eigenvalues (reconstruction bound)
    bc: BoundaryCondition | None = None

    @property
    def n_modes(self) -> int:
        return len(self.eigenvalues)

    def mode_function(self, j: int) -> np.ndarray:
        v = self.modes[:, j]
        return v if self.n == 1 else v.reshape(self.grid.n_points, self.n)

    def mode_control(self, j: int) -> ControlModulation:
        """The j-th mode function as a (unit-norm) control modulation."""
        from .core import control_custom

        return control_custom(self.grid, self.mode_function(j))


def _flat_weights(grid: TimeGrid, n: int) -> np.ndarray:
    w = grid.weights
    return w if n == 1 else np.repeat(w, n)


def _dominant_frequency(
    values: np.ndarray, times: np.ndarray, weights: np.ndarray, pad_factor: int = 16
) -> float:
    """Location of the peak of |sum_i w_i v(t_i) e^{-i w t_i}| over w >= 0.

    Zero-padded FFT peak with parabolic refinement; good to a small fraction
    of the padded bin width.
    """
    m = len(times)
    dt = times[1] - times[0]
    wf = weights * values if values.ndim == 1 else weights[:, None] * values
    npad = pad_factor * m
    if wf.ndim == 1:
        amp = np.abs(np.fft.rfft(wf, n=npad))
    else:
        amp = np.linalg.norm(np.fft.rfft(wf, n=npad, axis=0), axis=1)
    k = int(np.argmax(amp))
    if 0 < k < len(amp) - 1:
        a, b, c = np.log(amp[k - 1] + 1e-300), np.log(amp[k] + 1e-300), np.log(amp[k + 1] + 1e-300)
        denom = a - 2 * b + c
        shift = 0.5 * (a - c) / denom if denom != 0 else 0.0
        k = k + np.clip(shift, -0.5, 0.5)
    return float(2 * np.pi * k / (npad * dt))


def decompose(
    corr: CorrelationMatrix,
    truncation: float = DEFAULT_TRUNCATION,
) -> EigenmodeDecomposition:
    """Symmetric eigendecomposition of the weighted correlation operator.

    Modes with eigenvalue below ``truncation`` times the largest one are
    dropped; their total weight is recorded as the reconstruction error bound.
    """
    w = _flat_weights(corr.grid, corr.n)
    sw = np.sqrt(w)
    sym = sw[:, None] * corr.mat * sw[None, :]
    sym = 0.5 * (sym + sym.T)
    vals, vecs = np.linalg.eigh(sym)
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    smax = vals[0] if len(vals) else 0.0
    keep = vals > max(truncation * smax, 0.0)
    dropped_weight = float(np.sum(np.abs(vals[~keep])))
    vals, vecs = vals[keep], vecs[:, keep]
    modes = vecs / sw[:, None]
    # canonical sign: largest-magnitude component positive
    for j in range(modes.shape[1]):
        i = np.argmax(np.abs(modes[:, j]))
        if modes[i, j] < 0:
            modes[:, j] = -modes[:, j]
    times = corr.grid.times
    wgrid = corr.grid.weights
    freqs = np.empty(len(vals))
    for j in range(len(vals)):
        v = modes[:, j] if corr.n == 1 else modes[:, j].reshape(-1, corr.n)
        freqs[j] = _dominant_frequency(v, times, wgrid)
    groups = np.zeros(len(vals), dtype=int)
    gid = 0
    for j in range(1, len(vals)):
        if abs(vals[j] - vals[j - 1]) > DEGENERACY_RTOL * max(vals[j - 1], 1e-300):
            gid += 1
        groups[j] = gid
    return EigenmodeDecomposition(
        grid=corr.grid,
        n=corr.n,
        eigenvalues=vals,
        modes=modes,
        dominant_frequencies=freqs,
        degenerate_groups=groups,
        truncation=truncation,
        dropped_weight=dropped_weight,
        bc=corr.bc,
    )


def filter_coefficient(dec: EigenmodeDecomposition, f: ControlModulation) -> np.ndarray:
    """Generalized filter values ``F_j = (mode_j | f)`` for each retained mode."""
    if f.grid != dec.grid:
        raise GridMismatchError("control and decomposition live on different grids")
    if f.n != dec.n:
        raise GridMismatchError(f"control has {f.n} channels, decomposition {dec.n}")
    v = f.weighted_values
    flat = v if v.ndim == 1 else v.reshape(-1)
    return dec.modes.T @ flat


def reconstruct_correlation(dec: EigenmodeDecomposition) -> CorrelationMatrix:
    """Rebuild ``sum_j S_j v_j v_j^T`` from the retained modes."""
    mat = (dec.modes * dec.eigenvalues[None, :]) @ dec.modes.T
    return CorrelationMatrix(
        grid=dec.grid,
        n=dec.n,
        mat=mat,
        bc=dec.bc if dec.bc is not None else BoundaryCondition.DECAY_AT_INFINITY,
        meta={"reconstructed_from_modes": dec.n_modes, "truncation_bound": dec.dropped_weight},
    )


@dataclass
class Bispectrum:
    """Two-frequency spectrum ``S(w1, w2)`` on a uniform frequency grid."""

    omegas: np.ndarray
    values: np.ndarray  # complex, shape (len(omegas), len(omegas))

    def at(self, omega1: float, omega2: float) -> complex:
        i = int(np.argmin(np.abs(self.omegas - omega1)))
        j = int(np.argmin(np.abs(self.omegas - omega2)))
        return complex(self.values[i, j])


def bispectrum_from_correlation(
    corr: CorrelationMatrix,
    omegas: np.ndarray | None = None,
) -> Bispectrum:
    """Double Fourier transform of the correlation matrix.

    Convention: ``S(w1, w2) = (1/2pi) int dt dt' e^{+i w1 t} G(t, t') e^{-i w2 t'}``
    with trapezoid quadrature, so a symmetric real correlation gives a matrix
    with exact swap-conjugation symmetry.
    """
    if corr.n != 1:
        raise DomainError("bispectrum currently supports single-channel correlations")
    grid = corr.grid
    if omegas is None:
        omegas = np.fft.fftshift(np.fft.fftfreq(grid.n_points, d=grid.dt)) * 2 * np.pi
    omegas = np.asarray(omegas, dtype=float)
    w = grid.weights
    phase = np.exp(1j * omegas[:, None] * grid.times[None, :]) * w[None, :] / np.sqrt(2 * np.pi)
    values = phase @ corr.mat @ phase.conj().T
    return Bispectrum(omegas=omegas, values=values)

"""
Fidelities, phase-space maps and depth-robustness sweeps.

Phase-space quadratures use the vacuum-variance-1/2 convention of the GKP
module: ``X = x / a_ho`` with ``a_ho = sqrt(hbar/(m omega))``, so the harmonic
vacuum has ``W(0, 0) = 1/pi`` and ``W`` integrates to one over ``dX dP``.
Multiplying ``X`` (``P``) by ``sqrt(2)`` gives the axes in units of the vacuum
widths ``Delta X_0`` (``Delta P_0``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft
from scipy.signal import find_peaks

from .lattice import QuantumState
from .units import HBAR, UnitSystem, harmonic_frequency, oscillator_length


class InsufficientWindowError(ValueError):
    """The requested phase-space window clips too much probability."""


def fidelity(a: QuantumState, b: QuantumState) -> float:
    """``|<a|b>|^2`` for two states in the same representation."""
    return float(abs(a.inner(b)) ** 2)


def vacuum_widths(depth: float, units: UnitSystem) -> tuple[float, float]:
    """Harmonic vacuum widths ``(Delta X_0 [m], Delta P_0 [kg m/s])`` of one site."""
    if not depth > 0:
        raise ValueError("depth must be positive")
    omega = harmonic_frequency(depth) * units.recoil_energy / HBAR
    m = units.species.mass
    return float(np.sqrt(HBAR / (2 * m * omega))), float(np.sqrt(HBAR * m * omega / 2))


def to_quadrature(state: QuantumState, depth: float) -> tuple[np.ndarray, np.ndarray]:
    """Grid state as a quadrature wavefunction ``psi(X)`` normalised in ``dX``."""
    if state.representation != "grid":
        state = state.to_grid()
    a = oscillator_length(depth)
    return state.grid.x / a, state.amplitudes * np.sqrt(a)


@dataclass
class WignerMap:
    """Wigner function sampled on a rectangular ``(X, P)`` grid.

    ``W[i, k]`` is the value at ``(X[i], P[k])``.
    """

    X: np.ndarray
    P: np.ndarray
    W: np.ndarray
    clipped: float = 0.0

    @property
    def dX(self) -> float:
        return float(self.X[1] - self.X[0])

    @property
    def dP(self) -> float:
        return float(self.P[1] - self.P[0])

    @property
    def X_vacuum_units(self) -> np.ndarray:
        """Axis in units of ``Delta X_0``."""
        return np.sqrt(2.0) * self.X

    @property
    def P_vacuum_units(self) -> np.ndarray:
        return np.sqrt(2.0) * self.P

    def normalization(self) -> float:
        return float(self.W.sum() * self.dX * self.dP)

    def marginal_x(self) -> np.ndarray:
        return self.W.sum(axis=1) * self.dP

    def marginal_p(self) -> np.ndarray:
        return self.W.sum(axis=0) * self.dX

    def value(self, X0: float, P0: float) -> float:
        i = int(np.argmin(np.abs(self.X - X0)))
        k = int(np.argmin(np.abs(self.P - P0)))
        return float(self.W[i, k])

    def negative_volume(self) -> float:
        return float(-self.W[self.W < 0].sum() * self.dX * self.dP)

    def crop(self, x_max: float, p_max: float, stride: int = 1) -> WignerMap:
        ix = np.abs(self.X) <= x_max
        ip = np.abs(self.P) <= p_max
        return WignerMap(self.X[ix][::stride], self.P[ip][::stride],
                         self.W[np.ix_(ix, ip)][::stride, ::stride], self.clipped)

    def header(self, **extra) -> dict:
        return {
            "convention": "vacuum variance 1/2: W(0,0)=1/pi for the harmonic vacuum",
            "axes": "X, P dimensionless; multiply by sqrt(2) for units of Delta X_0 / Delta P_0",
            "n_x": int(self.X.size),
            "n_p": int(self.P.size),
            "dX": self.dX,
            "dP": self.dP,
            "normalization": self.normalization(),
            "clipped_probability": self.clipped,
            **extra,
        }

    def to_csv(self, path, header_path=None, **extra) -> None:
        """Long-format CSV ``X, P, W`` plus an optional JSON header."""
        XX, PP = np.meshgrid(self.X, self.P, indexing="ij")
        data = np.column_stack([XX.ravel(), PP.ravel(), self.W.ravel()])
        np.savetxt(path, data, delimiter=",", header="X,P,W", comments="", fmt="%.10g")
        if header_path is not None:
            with open(header_path, "w") as fh:
                json.dump(self.header(**extra), fh, indent=2)


def wigner_quadrature(X, psi, window: tuple[float, float] | None = None,
                      tol: float = 1e-6) -> WignerMap:
    """Wigner function of ``psi(X)`` on a uniform quadrature grid.

    ``W(X, P) = (1/pi) sum_y psi*(X+y) psi(X-y) exp(2iPy) dX`` is evaluated with
    one FFT per row over ``y = m dX``; the momentum grid is the conjugate FFT
    grid ``P_k = pi k / (2 n dX)``. Values outside the sampled range are zero.
    """
    X = np.asarray(X, dtype=float)
    psi = np.asarray(psi, dtype=complex)
    n = X.size
    dX = X[1] - X[0]
    ny = 2 * n
    m = np.arange(-n, n)
    i = np.arange(n)[:, None]
    plus, minus = i + m[None, :], i - m[None, :]
    ok = (plus >= 0) & (plus < n) & (minus >= 0) & (minus < n)
    corr = np.zeros((n, ny), dtype=complex)
    corr[ok] = np.conj(psi[plus[ok]]) * psi[minus[ok]]
    # W_k = (dX/pi) sum_m c_m exp(2 i P_k m dX) with P_k m dX * 2 = 2 pi k m / ny
    W = (dX / np.pi) * ny * sfft.ifft(sfft.ifftshift(corr, axes=1), axis=1)
    W = sfft.fftshift(W, axes=1).real
    P = np.pi * np.arange(-n, n) / (ny * dX)
    wmap = WignerMap(X, P, W)
    if window is None:
        return wmap
    x_max, p_max = window
    prob_x = np.abs(psi) ** 2 * dX
    phi = _momentum_probability(X, psi, P)
    clipped = float(prob_x[np.abs(X) > x_max].sum() + phi[np.abs(P) > p_max].sum())
    if clipped > tol:
        raise InsufficientWindowError(f"window (|X|<={x_max}, |P|<={p_max}) clips {clipped:.2e} of the probability")
    out = wmap.crop(x_max, p_max)
    out.clipped = clipped
    return out


def _momentum_probability(X, psi, P) -> np.ndarray:
    """``|phi(P)|^2 dP`` on the given momentum grid."""
    dX = X[1] - X[0]
    dP = P[1] - P[0]
    phase = np.exp(-1j * np.outer(P, X))
    phi = phase @ psi * dX / np.sqrt(2 * np.pi)
    return np.abs(phi) ** 2 * dP


def momentum_density(X, psi, P) -> np.ndarray:
    """``|phi(P)|^2`` with ``phi(P) = (2 pi)^{-1/2} int psi(X) exp(-iPX) dX``."""
    return _momentum_probability(X, psi, P) / (P[1] - P[0])


def wigner(state: QuantumState, depth: float, window: tuple[float, float] | None = None,
           tol: float = 1e-6) -> WignerMap:
    """Wigner map of a lattice grid state in scaled quadratures."""
    X, psi = to_quadrature(state, depth)
    return wigner_quadrature(X, psi, window, tol)


def comb_peaks(X, density, rel_height: float = 0.05) -> np.ndarray:
    """Positions of local maxima above ``rel_height`` of the global maximum."""
    density = np.asarray(density, dtype=float)
    idx, _ = find_peaks(density, height=rel_height * density.max())
    X = np.asarray(X, dtype=float)
    # parabolic refinement on the three samples around each maximum
    out = []
    for j in idx:
        y0, y1, y2 = density[j - 1], density[j], density[j + 1]
        den = y0 - 2 * y1 + y2
        shift = 0.5 * (y0 - y2) / den if den != 0 else 0.0
        out.append(X[j] + shift * (X[1] - X[0]))
    return np.array(out)


# ---------------------------------------------------------------------------
# robustness


@dataclass
class RobustnessCurve:
    scales: np.ndarray
    fidelities: np.ndarray

    def quadratic_fit(self, half_width: float = 0.002) -> tuple[np.ndarray, float]:
        """Least-squares parabola in ``scale - 1`` over ``|scale - 1| <= half_width``; returns (coeffs, R^2)."""
        s = self.scales - 1.0
        sel = np.abs(s) <= half_width + 1e-12
        if sel.sum() < 3:
            raise ValueError("need at least three points inside the fit window")
        coeffs = np.polyfit(s[sel], self.fidelities[sel], 2)
        resid = self.fidelities[sel] - np.polyval(coeffs, s[sel])
        ss_tot = np.sum((self.fidelities[sel] - self.fidelities[sel].mean()) ** 2)
        r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
        return coeffs, float(r2)

    def at(self, scale: float) -> float:
        i = int(np.argmin(np.abs(self.scales - scale)))
        if abs(self.scales[i] - scale) > 1e-12:
            raise KeyError(f"scale {scale} not sampled")
        return float(self.fidelities[i])

    def to_csv(self, path) -> None:
        np.savetxt(path, np.column_stack([self.scales, self.fidelities]), delimiter=",",
                   header="depth_scale,fidelity", comments="", fmt="%.15g")


def depth_robustness(waveform, problem, scales) -> RobustnessCurve:
    """Fidelity of a fixed waveform when the lattice depth is scaled by each factor.

    The initial and target states stay those of the nominal depth; only the
    propagation Hamiltonian changes.
    """
    from .propagator import evolve

    scales = np.asarray(scales, dtype=float)
    fids = np.empty_like(scales)
    for i, s in enumerate(scales):
        final, _ = evolve(problem.initial, waveform, problem.depth * s, problem.grid)
        fids[i] = fidelity(problem.target, final)
    return RobustnessCurve(scales, fids)

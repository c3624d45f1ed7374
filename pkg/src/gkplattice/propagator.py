"""
Symmetrised split-step propagation under the phase-modulated lattice.

One step of length ``dt`` with control value ``u_j`` applies

    exp(-i p^2 dt/2) exp(-i V(x, u_j) dt) exp(-i p^2 dt/2)

on the periodic grid, with the kinetic factor applied in momentum space. The
control is piecewise constant: ``u_j`` holds for the whole potential sub-step.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft

from .lattice import FockBasis, QuantumState, SimGrid, potential
from .units import UnitSystem, harmonic_frequency


class PropagationDiverged(FloatingPointError):
    pass


@dataclass
class ControlWaveform:
    """Piecewise-constant control samples ``u_j`` (lattice lengths) with step ``dt``."""

    samples: np.ndarray
    dt: float

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 1 or self.samples.size < 1:
            raise ValueError("waveform needs at least one sample")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform samples must be finite")
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size * self.dt

    @property
    def times(self) -> np.ndarray:
        """Midpoint of each step."""
        return (np.arange(self.samples.size) + 0.5) * self.dt

    @classmethod
    def zeros(cls, n_steps: int, dt: float) -> ControlWaveform:
        return cls(np.zeros(n_steps), dt)

    def reversed(self) -> ControlWaveform:
        return ControlWaveform(self.samples[::-1].copy(), self.dt)

    def to_csv(self, path, units: UnitSystem | None = None) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            if units is None:
                w.writerow(["t", "u"])
                for t, u in zip(self.times, self.samples):
                    w.writerow([f"{t:.12g}", f"{u:.15g}"])
            else:
                w.writerow(["t_us", "u_nm", "t", "u"])
                t_us = units.from_lattice_units(self.times, "time") * 1e6
                u_nm = units.from_lattice_units(self.samples, "length") * 1e9
                for row in zip(t_us, u_nm, self.times, self.samples):
                    w.writerow([f"{v:.15g}" for v in row])


def default_dt(depth: float, phase_per_step: float = 0.05) -> float:
    """Step size resolving the trap period: ``hbar*omega*dt = phase_per_step``."""
    return phase_per_step / harmonic_frequency(depth)


class SplitStepPropagator:
    """Precomputed split-step factors for one grid, depth and step size.

    Parameters
    ----------
    grid : SimGrid
    depth : float
        Peak-to-peak lattice depth in recoil units.
    dt : float
        Step in units of ``hbar/E_R``. Negative values run time backwards.
    boundary_fraction : float
        On multi-period grids, population found in this outer fraction of the
        grid is tracked in :attr:`boundary_population` instead of being allowed
        to wrap around silently.
    """

    def __init__(self, grid: SimGrid, depth: float, dt: float, boundary_fraction: float = 0.05):
        if dt == 0 or not np.isfinite(dt):
            raise ValueError("dt must be finite and non-zero")
        self.grid = grid
        self.depth = float(depth)
        self.dt = float(dt)
        k2 = grid.k**2
        self.half_kinetic = np.exp(-0.5j * dt * k2)
        self.full_kinetic = self.half_kinetic**2
        x = grid.x
        self._cos2x = np.cos(2 * x)
        self._sin2x = np.sin(2 * x)
        if grid.periods > 1:
            edge = boundary_fraction * grid.span
            self._edge_mask = (x < grid.x_min + edge) | (x >= grid.x_max - edge)
        else:
            self._edge_mask = None
        self.boundary_population = 0.0

    def potential(self, u: float) -> np.ndarray:
        # cos(2(x+u)) expanded so no per-step trig over the grid is needed
        c, s = np.cos(2 * u), np.sin(2 * u)
        return -0.5 * self.depth * (self._cos2x * c - self._sin2x * s)

    def potential_derivative(self, u: float) -> np.ndarray:
        """``dV/du = U_r sin(2(x+u))``."""
        c, s = np.cos(2 * u), np.sin(2 * u)
        return self.depth * (self._sin2x * c + self._cos2x * s)

    def potential_phase(self, u: float) -> np.ndarray:
        return np.exp(-1j * self.dt * self.potential(u))

    def kinetic(self, psi: np.ndarray, half: bool = True) -> np.ndarray:
        factor = self.half_kinetic if half else self.full_kinetic
        return sfft.ifft(factor * sfft.fft(psi))

    def step(self, psi: np.ndarray, u: float) -> np.ndarray:
        psi = self.kinetic(psi)
        psi = psi * self.potential_phase(u)
        return self.kinetic(psi)

    def _check(self, psi: np.ndarray) -> None:
        if not np.all(np.isfinite(psi)):
            raise PropagationDiverged("non-finite amplitudes during propagation")
        if self._edge_mask is not None:
            edge = float(np.sum(np.abs(psi[self._edge_mask]) ** 2) * self.grid.dx)
            self.boundary_population = max(self.boundary_population, edge)

    def run(self, psi: np.ndarray, samples, stride: int | None = None):
        """Propagate through all samples.

        Consecutive half kinetic factors are fused, so each step costs two FFTs.
        Returns the final amplitudes and, if ``stride`` is given, the states at
        every ``stride``-th step boundary (including t=0 and the final time).
        """
        samples = np.asarray(samples, dtype=float)
        stored = [psi.copy()] if stride else None
        phi = self.kinetic(psi)
        n = samples.size
        for j, u in enumerate(samples):
            phi = phi * self.potential_phase(u)
            if stride and ((j + 1) % stride == 0 or j + 1 == n):
                out = self.kinetic(phi)
                stored.append(out)
                if j + 1 < n:
                    phi = self.kinetic(out)
            elif j + 1 < n:
                phi = self.kinetic(phi, half=False)
            else:
                phi = self.kinetic(phi)
            if (j & 255) == 0:
                self._check(phi)
        psi_final = stored[-1] if stride else phi
        self._check(psi_final)
        return psi_final, stored


def step(state: QuantumState, u: float, dt: float, depth: float, grid: SimGrid | None = None) -> QuantumState:
    """Single symmetrised split step."""
    grid = grid or state.grid
    if state.representation != "grid":
        raise ValueError("propagation needs a grid state")
    if not dt > 0:
        raise ValueError("dt must be positive")
    prop = SplitStepPropagator(grid, depth, dt)
    psi = prop.step(state.amplitudes, u)
    prop._check(psi)
    return QuantumState(psi, "grid", grid=grid)


@dataclass
class Trajectory:
    times: np.ndarray
    states: list[np.ndarray]
    grid: SimGrid
    boundary_population: float = 0.0
    extras: dict = field(default_factory=dict)

    @property
    def final(self) -> QuantumState:
        return QuantumState(self.states[-1], "grid", grid=self.grid)

    def observables(self, basis: FockBasis | None = None, n_levels: int = 5):
        """Per stored time: lowest level populations, ``<x>`` and ``<p>``."""
        g = self.grid
        rows = []
        for t, psi in zip(self.times, self.states):
            xm = float(np.sum(g.x * np.abs(psi) ** 2) * g.dx)
            phik = sfft.fft(psi)
            pm = float(np.sum(g.k * np.abs(phik) ** 2) / np.sum(np.abs(phik) ** 2))
            pops = []
            if basis is not None:
                c = basis.states[:n_levels].conj() @ psi * g.dx
                pops = list(np.abs(c) ** 2)
            rows.append([t, *pops, xm, pm])
        return np.array(rows)

    def to_csv(self, path, basis: FockBasis | None = None, n_levels: int = 5) -> None:
        data = self.observables(basis, n_levels)
        m = data.shape[1] - 3
        header = ["t"] + [f"pop_{n}" for n in range(m)] + ["mean_x", "mean_p"]
        np.savetxt(path, data, delimiter=",", header=",".join(header), comments="")


def evolve(
    state: QuantumState,
    waveform: ControlWaveform,
    depth: float,
    grid: SimGrid | None = None,
    stride: int | None = None,
) -> tuple[QuantumState, Trajectory | None]:
    """Evolve ``state`` through every step of ``waveform``.

    With ``stride`` set, intermediate states every ``stride`` steps are kept in
    the returned :class:`Trajectory`.
    """
    grid = grid or state.grid
    if state.representation != "grid":
        raise ValueError("propagation needs a grid state")
    prop = SplitStepPropagator(grid, depth, waveform.dt)
    psi, stored = prop.run(state.amplitudes, waveform.samples, stride=stride)
    final = QuantumState(psi, "grid", grid=grid)
    traj = None
    if stride:
        n = len(waveform)
        idx = list(range(0, n + 1, stride))
        if idx[-1] != n:
            idx.append(n)
        traj = Trajectory(np.array(idx) * waveform.dt, stored, grid, prop.boundary_population)
    return final, traj

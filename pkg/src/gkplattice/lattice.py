"""
Single-site optical-lattice model in lattice units.

The phase-modulated lattice potential is ``V(x, u) = -(U_r / 2) cos(2 (x + u))``
with ``U_r`` the peak-to-peak depth in recoil units. Sites are centred on
``x = m*pi``; the barrier tops sit at ``+U_r/2``. Grids built here are centred on
the site at the origin, so their edges coincide with barrier tops.
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import fft as sfft
from scipy.linalg import eigh

logger = logging.getLogger(__name__)


class GridMismatchError(ValueError):
    pass


class BoundStateShortfall(UserWarning):
    """Fewer bound levels exist than were requested."""


@dataclass(frozen=True)
class SimGrid:
    """Uniform grid over an odd number of lattice periods.

    Sample ``j`` sits at ``x_min + j*dx`` for ``j = 0 .. n_points-1``; the point
    ``x_max = x_min + n_points*dx`` is the periodic image of ``x_min``. For
    hard-wall problems ``x_min`` and ``x_max`` are the walls and the wavefunction
    vanishes on sample 0.
    """

    n_points: int
    periods: int

    def __post_init__(self):
        if self.n_points < 64 or self.n_points & (self.n_points - 1):
            raise ValueError("n_points must be a power of two >= 64")
        if self.periods < 1 or self.periods % 2 == 0:
            raise ValueError("periods must be a positive odd integer")

    @property
    def span(self) -> float:
        return self.periods * np.pi

    @property
    def x_min(self) -> float:
        return -0.5 * self.span

    @property
    def x_max(self) -> float:
        return 0.5 * self.span

    @property
    def dx(self) -> float:
        return self.span / self.n_points

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_points)

    @property
    def k(self) -> np.ndarray:
        """Angular wavenumbers conjugate to ``x`` in FFT order."""
        return 2.0 * np.pi * sfft.fftfreq(self.n_points, d=self.dx)

    def central_mask(self) -> np.ndarray:
        """Samples inside the central site ``[-pi/2, pi/2)``."""
        x = self.x
        return (x >= -0.5 * np.pi - 1e-12) & (x < 0.5 * np.pi - 1e-12)


def build_grid(periods: int = 1, points_per_period: int = 256) -> SimGrid:
    """Site-centred grid; total points rounded up to a power of two."""
    if periods % 2 == 0:
        raise ValueError("periods must be odd so the grid is centred on a site")
    if points_per_period < 64:
        raise ValueError("points_per_period must be at least 64")
    total = periods * points_per_period
    n = 1 << int(np.ceil(np.log2(total)))
    return SimGrid(n_points=n, periods=periods)


def potential(grid: SimGrid, depth: float, u: float = 0.0) -> np.ndarray:
    """Lattice potential shifted by the control displacement ``u``."""
    if not np.isfinite(u):
        raise ValueError("control displacement must be finite")
    return -0.5 * depth * np.cos(2.0 * (grid.x + u))


@dataclass
class QuantumState:
    """Pure state in grid or Fock representation.

    Grid amplitudes are normalised as ``sum |psi|^2 dx = 1``; Fock amplitudes as
    ``sum |c_n|^2 = 1``.
    """

    amplitudes: np.ndarray
    representation: str = "grid"
    grid: SimGrid | None = None
    basis: FockBasis | None = None

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.representation == "grid":
            if self.grid is None:
                raise ValueError("grid states need a grid")
            if self.amplitudes.shape != (self.grid.n_points,):
                raise GridMismatchError("amplitude length does not match the grid")
        elif self.representation == "fock":
            if self.basis is None:
                raise ValueError("Fock states need a basis")
        else:
            raise ValueError(f"unknown representation {self.representation!r}")

    @classmethod
    def from_grid(cls, values, grid: SimGrid, normalize: bool = True) -> QuantumState:
        psi = np.asarray(values, dtype=complex)
        if normalize:
            psi = psi / np.sqrt(np.sum(np.abs(psi) ** 2) * grid.dx)
        return cls(psi, "grid", grid=grid)

    @property
    def weight(self) -> float:
        """``dx`` for grid states, 1 for Fock states."""
        return self.grid.dx if self.representation == "grid" else 1.0

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2) * self.weight))

    def inner(self, other: QuantumState) -> complex:
        """``<self|other>``."""
        _check_compatible(self, other)
        return complex(np.vdot(self.amplitudes, other.amplitudes) * self.weight)

    def to_grid(self) -> QuantumState:
        if self.representation == "grid":
            return self
        return self.basis.reconstruct(self.amplitudes)

    def copy(self) -> QuantumState:
        return QuantumState(self.amplitudes.copy(), self.representation, self.grid, self.basis)


def _check_compatible(a: QuantumState, b: QuantumState) -> None:
    if a.representation != b.representation:
        raise ValueError("states are in different representations")
    if a.representation == "grid" and a.grid != b.grid:
        raise GridMismatchError("states live on different grids")
    if a.representation == "fock" and a.amplitudes.shape != b.amplitudes.shape:
        raise ValueError("Fock states have different basis sizes")


@dataclass
class FockBasis:
    """Vibrational eigenstates of one lattice site.

    ``states[n]`` samples the n-th level on ``grid`` (real, unit norm with ``dx``
    weighting). ``n_bound`` counts levels below the barrier top ``+depth/2``; the
    arrays may hold extra unbound levels when more were requested.
    """

    depth: float
    grid: SimGrid
    energies: np.ndarray
    states: np.ndarray
    n_bound: int
    boundary: str = "hardwall"
    shortfall: int = 0
    central_weight: np.ndarray = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.energies)

    def truncate(self, n: int) -> FockBasis:
        """Basis restricted to the lowest ``n`` levels."""
        n = min(n, len(self))
        return FockBasis(
            self.depth, self.grid, self.energies[:n], self.states[:n],
            min(self.n_bound, n), self.boundary, max(0, n - self.n_bound),
            None if self.central_weight is None else self.central_weight[:n],
        )

    def state(self, n: int) -> QuantumState:
        return QuantumState(self.states[n].astype(complex), "grid", grid=self.grid)

    def gram(self) -> np.ndarray:
        return self.states @ self.states.conj().T * self.grid.dx

    def project(self, state: QuantumState) -> tuple[np.ndarray, float]:
        return project_to_fock(state, self)

    def reconstruct(self, coefficients) -> QuantumState:
        c = np.asarray(coefficients, dtype=complex)
        psi = c @ self.states[: c.size]
        return QuantumState(psi, "grid", grid=self.grid)

    def fock_state(self, coefficients) -> QuantumState:
        return QuantumState(np.asarray(coefficients, dtype=complex), "fock", basis=self)

    def to_csv(self, energies_path, states_path=None) -> None:
        """Write energies (one row per level) and optionally the sampled eigenstates."""
        with open(energies_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "energy_recoil", "bound", "central_weight"])
            for n, e in enumerate(self.energies):
                cw = "" if self.central_weight is None else f"{self.central_weight[n]:.12g}"
                w.writerow([n, f"{e:.12g}", int(n < self.n_bound and e < 0.5 * self.depth), cw])
        if states_path is not None:
            header = "x," + ",".join(f"psi_{n}" for n in range(len(self)))
            np.savetxt(states_path, np.column_stack([self.grid.x, self.states.real.T]),
                       delimiter=",", header=header, comments="")


def _kinetic_matrix(grid: SimGrid, boundary: str) -> np.ndarray:
    """Dense spectral representation of ``p^2`` on the grid."""
    n = grid.n_points
    if boundary == "periodic":
        k2 = grid.k**2
        # p^2 psi = ifft(k^2 fft(psi)); real symmetric for even n
        return sfft.ifft(k2[:, None] * sfft.fft(np.eye(n), axis=0), axis=0).real
    if boundary == "hardwall":
        m = n - 1  # interior points, walls at samples 0 and n
        S = sfft.dst(np.eye(m), type=1, norm="ortho", axis=0)
        k2 = (np.pi * np.arange(1, m + 1) / grid.span) ** 2
        return (S * k2) @ S
    raise ValueError(f"unknown boundary {boundary!r}")


def _fix_sign(vec: np.ndarray, x: np.ndarray) -> np.ndarray:
    # first sample with x > 0 carrying appreciable amplitude is made positive
    mask = (x > 0) & (np.abs(vec) > 1e-3 * np.abs(vec).max())
    idx = np.argmax(mask) if mask.any() else np.argmax(np.abs(vec))
    return vec if vec[idx] >= 0 else -vec


def _localize_clusters(E, V, H, weights_op, tol):
    """Rotate near-degenerate eigenvector clusters onto maximal central-site weight.

    Within a cluster of nearly degenerate levels (one per site of a multi-period
    grid) the eigensolver returns arbitrary mixtures; the rotation picks the
    site-localised combinations. Energies are replaced by their Rayleigh
    quotients, which stay inside the cluster width.
    """
    E = E.copy()
    V = V.copy()
    i = 0
    while i < len(E):
        j = i + 1
        while j < len(E) and E[j] - E[j - 1] < tol:
            j += 1
        if j - i > 1:
            block = V[:, i:j]
            P = block.T @ (weights_op[:, None] * block)
            w, R = np.linalg.eigh(P)
            block = block @ R[:, np.argsort(w)[::-1]]
            V[:, i:j] = block
            E[i:j] = np.einsum("ij,ij->j", block, H @ block)
        i = j
    order = np.argsort(E, kind="stable")
    return E[order], V[:, order]


def eigensolve(
    grid: SimGrid,
    depth: float,
    n_states: int | None = None,
    boundary: str = "hardwall",
    central_fraction: float = 0.9,
) -> FockBasis:
    """Lowest vibrational levels of ``p^2 - (U_r/2) cos(2x)`` on ``grid``.

    Parameters
    ----------
    grid : SimGrid
        Site-centred grid. For multi-period grids, states are localised onto the
        central site and only those with at least ``central_fraction`` of their
        probability there are kept.
    depth : float
        Peak-to-peak lattice depth in recoil units.
    n_states : int, optional
        Number of levels wanted. Defaults to all bound levels. Asking for more
        than are bound returns the extra (unbound) levels and records the
        ``shortfall`` on the result, with a :class:`BoundStateShortfall` warning.
    boundary : {"hardwall", "periodic"}
        ``"hardwall"`` puts Dirichlet walls at the grid edges (sine-transform
        kinetic term); ``"periodic"`` uses the FFT kinetic term that the
        split-step propagator applies.
    """
    if not depth > 0:
        raise ValueError("depth must be positive")
    if n_states is not None and n_states < 1:
        raise ValueError("n_states must be at least 1")
    x = grid.x
    T = _kinetic_matrix(grid, boundary)
    V = potential(grid, depth)
    if boundary == "hardwall":
        H = T + np.diag(V[1:])
        xs = x[1:]
    else:
        H = T + np.diag(V)
        xs = x

    top = 0.5 * depth
    # the bound spectrum of a site holds ~ (2/pi) sqrt(U_r) levels per period
    guess = int((2 / np.pi) * np.sqrt(depth) + 4) * grid.periods
    want = max(guess, (n_states or 0) * grid.periods + 2 * grid.periods)
    want = min(want, H.shape[0])
    E, vecs = eigh(H, subset_by_index=[0, want - 1], driver="evr")

    inside = ((xs >= -0.5 * np.pi) & (xs < 0.5 * np.pi)).astype(float)
    if grid.periods > 1:
        # tunnel splittings stay well below the level spacing for bound levels
        E, vecs = _localize_clusters(E, vecs, H, inside, tol=0.1 * 2.0 * np.sqrt(depth))
        cw = np.sum(inside[:, None] * np.abs(vecs) ** 2, axis=0)
        keep = cw >= central_fraction
        E, vecs, cw = E[keep], vecs[:, keep], cw[keep]
    else:
        cw = np.ones_like(E)

    n_bound = int(np.sum(E < top))
    n_out = n_bound if n_states is None else n_states
    shortfall = max(0, n_out - n_bound)
    if shortfall:
        warnings.warn(
            f"requested {n_out} levels but only {n_bound} are bound at depth {depth:g} E_R",
            BoundStateShortfall, stacklevel=2,
        )
    n_out = min(n_out, len(E))

    states = np.zeros((n_out, grid.n_points))
    offset = 1 if boundary == "hardwall" else 0
    for n in range(n_out):
        v = _fix_sign(vecs[:, n], xs) / np.sqrt(grid.dx)
        states[n, offset:] = v
    return FockBasis(depth, grid, E[:n_out].copy(), states, n_bound, boundary, shortfall, cw[:n_out].copy())


def count_bound(depth: float, grid: SimGrid | None = None, boundary: str = "hardwall") -> int:
    """Number of levels below the barrier top."""
    if depth <= 0:
        return 0
    grid = grid or build_grid(1, 256)
    return eigensolve(grid, depth, boundary=boundary).n_bound


def project_to_fock(state: QuantumState, basis: FockBasis) -> tuple[np.ndarray, float]:
    """Fock coefficients ``c_n = <n|psi>`` and the leakage ``1 - sum |c_n|^2``."""
    if state.representation != "grid":
        raise ValueError("project_to_fock expects a grid state")
    if state.grid != basis.grid:
        raise GridMismatchError("state and basis live on different grids")
    c = basis.states.conj() @ state.amplitudes * basis.grid.dx
    leak = 1.0 - float(np.sum(np.abs(c) ** 2))
    return c, leak


def harmonic_state(grid: SimGrid, depth: float, n: int = 0) -> QuantumState:
    """n-th harmonic-oscillator eigenfunction with the site's oscillator length."""
    from .units import oscillator_length

    a = oscillator_length(depth)
    X = grid.x / a
    h_prev = np.pi**-0.25 * np.exp(-0.5 * X**2)
    if n == 0:
        return QuantumState.from_grid(h_prev, grid)
    h = np.sqrt(2.0) * X * h_prev
    for m in range(2, n + 1):
        h, h_prev = np.sqrt(2.0 / m) * X * h - np.sqrt((m - 1) / m) * h_prev, h
    return QuantumState.from_grid(h, grid)


def write_energies(path: Path, basis: FockBasis) -> None:
    basis.to_csv(path)

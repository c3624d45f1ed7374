"""
Finitely squeezed, quadrature-symmetric GKP code states.

Quadrature convention: dimensionless ``X`` with vacuum variance 1/2, so the
vacuum wavefunction is ``pi**-0.25 exp(-X**2/2)`` and the squeeze operator
``S(r)`` maps ``psi(X) -> exp(r/2) psi(X exp(r))``. Each comb tooth
``D(x_t) S(Delta)|0>`` is then a closed-form Gaussian centred on
``x_t = sqrt(pi) (2s + k)`` with width ``exp(-Delta)``; the envelope weight is
``exp(-sigma^2 x_t^2 / 2)`` and the symmetrising squeeze ``S(r0)`` acts last on
the whole comb.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import erf

from .lattice import FockBasis, QuantumState, SimGrid, build_grid, eigensolve, project_to_fock
from .units import oscillator_length

logger = logging.getLogger(__name__)

SQRT_PI = np.sqrt(np.pi)


class InsufficientDomainError(ValueError):
    """The sampling window misses a non-negligible part of the state."""


class UnreachableTargetError(RuntimeError):
    """No basis size within the depth cap reaches the reconstruction target."""


def sigma_from_db(zeta: float) -> float:
    """Envelope parameter ``sigma = 10**(-zeta/20)`` from the squeezing in dB."""
    if not zeta > 0:
        raise ValueError("squeezing level must be positive (sigma < 1)")
    return 10.0 ** (-zeta / 20.0)


def delta_from_sigma(sigma: float) -> tuple[float, float]:
    """Tooth squeezing ``Delta`` and symmetrising squeeze ``r0`` for a given ``sigma``."""
    if not 0 < sigma < 1:
        raise ValueError("sigma must lie in (0, 1)")
    s2 = sigma**2
    delta = -np.log(np.sqrt(s2 / (1.0 - s2**2)))
    r0 = np.log(np.sqrt(1.0 + s2 * delta**2))
    return float(delta), float(r0)


def default_s_max(sigma: float, tol: float = 1e-12) -> int:
    """Comb half-width so that the first dropped envelope weight is below ``tol``."""
    # exp(-sigma^2 pi (2s)^2 / 2) < tol
    s = np.sqrt(-np.log(tol) / (2.0 * np.pi * sigma**2))
    return int(np.ceil(s)) + 1


@dataclass(frozen=True)
class GkpSpec:
    k: int
    zeta: float
    s_max: int | None = None

    def __post_init__(self):
        if self.k not in (0, 1):
            raise ValueError("code index k must be 0 or 1")
        sigma_from_db(self.zeta)
        if self.s_max is not None and self.s_max < self.required_s_max:
            raise ValueError(
                f"s_max={self.s_max} drops envelope weight above 1e-12; need >= {self.required_s_max}"
            )

    @property
    def sigma(self) -> float:
        return sigma_from_db(self.zeta)

    @property
    def delta(self) -> float:
        return delta_from_sigma(self.sigma)[0]

    @property
    def r0(self) -> float:
        return delta_from_sigma(self.sigma)[1]

    @property
    def required_s_max(self) -> int:
        return default_s_max(self.sigma) - 1

    @property
    def comb_s_max(self) -> int:
        return self.s_max if self.s_max is not None else default_s_max(self.sigma)

    def tooth_indices(self) -> np.ndarray:
        """Comb indices ``s``; for ``k = 1`` one extra index keeps the comb mirror-symmetric."""
        return np.arange(-self.comb_s_max - self.k, self.comb_s_max + 1)

    def tooth_positions(self) -> np.ndarray:
        """Tooth centres after the final ``S(r0)``."""
        return SQRT_PI * (2 * self.tooth_indices() + self.k) * np.exp(-self.r0)

    @property
    def spacing(self) -> float:
        """Distance between neighbouring teeth of one codeword."""
        return 2.0 * SQRT_PI * np.exp(-self.r0)


def _comb_terms(spec: GkpSpec):
    s = spec.tooth_indices()
    xt = SQRT_PI * (2 * s + spec.k)
    w = np.exp(-0.5 * spec.sigma**2 * xt**2)
    return xt, w


def _interval_probability(spec: GkpSpec, a: float, b: float) -> float:
    """Unnormalised probability of the comb between ``X = a`` and ``X = b``."""
    xt, w = _comb_terms(spec)
    c = np.exp(2.0 * spec.delta)
    # S(r0) rescales the integration limits
    A, B = a * np.exp(spec.r0), b * np.exp(spec.r0)
    xi, xj = np.meshgrid(xt, xt, indexing="ij")
    mid = 0.5 * (xi + xj)
    cross = np.exp(-0.25 * c * (xi - xj) ** 2)
    sc = np.sqrt(c)
    part = 0.5 * np.sqrt(np.pi / c) * (erf(sc * (B - mid)) - erf(sc * (A - mid)))
    return float(np.sum(np.outer(w, w) * cross * part))


def gkp_norm_squared(spec: GkpSpec) -> float:
    """Full-line ``<psi|psi>`` of the unnormalised comb (analytic)."""
    xt, w = _comb_terms(spec)
    c = np.exp(2.0 * spec.delta)
    d = xt[:, None] - xt[None, :]
    return float(np.sum(np.outer(w, w) * np.sqrt(np.pi / c) * np.exp(-0.25 * c * d**2)))


def gkp_wavefunction(spec: GkpSpec, X) -> np.ndarray:
    """Analytic GKP wavefunction on quadrature points ``X``, normalised on the real line."""
    X = np.asarray(X, dtype=float)
    xt, w = _comb_terms(spec)
    c = np.exp(2.0 * spec.delta)
    Y = X * np.exp(spec.r0)
    psi = np.zeros_like(Y)
    for xs, ws in zip(xt, w):
        psi += ws * np.exp(-0.5 * c * (Y - xs) ** 2)
    # S(r0) Jacobian; divide by the analytic norm of the unsqueezed comb
    psi *= np.exp(0.5 * spec.r0) / np.sqrt(gkp_norm_squared(spec))
    return psi.astype(complex)


@dataclass
class GkpWavefunction:
    X: np.ndarray
    amplitudes: np.ndarray
    spec: GkpSpec

    @property
    def dX(self) -> float:
        return float(self.X[1] - self.X[0])

    def probability(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["X", "re_psi", "im_psi"])
            for x, a in zip(self.X, self.amplitudes):
                w.writerow([f"{x:.10g}", f"{a.real:.12g}", f"{a.imag:.12g}"])


def build_gkp(spec: GkpSpec, X, tol: float = 1e-10) -> GkpWavefunction:
    """Sample the GKP state on a uniform quadrature grid and normalise it there.

    Raises :class:`InsufficientDomainError` if more than ``tol`` of the
    probability falls outside ``[X[0], X[-1]]``.
    """
    X = np.asarray(X, dtype=float)
    dX = X[1] - X[0]
    inside = _interval_probability(spec, X[0] - 0.5 * dX, X[-1] + 0.5 * dX) / gkp_norm_squared(spec)
    if 1.0 - inside > tol:
        raise InsufficientDomainError(
            f"quadrature window [{X[0]:.3g}, {X[-1]:.3g}] misses {1 - inside:.2e} of the probability"
        )
    psi = gkp_wavefunction(spec, X)
    psi /= np.sqrt(np.sum(np.abs(psi) ** 2) * dX)
    return GkpWavefunction(X, psi, spec)


def gkp_on_grid(spec: GkpSpec, grid: SimGrid, depth: float) -> QuantumState:
    """GKP wavefunction mapped onto lattice coordinates, ``x = X * a_ho``.

    The amplitude carries the ``1/sqrt(a_ho)`` Jacobian but is not renormalised:
    its norm on the grid is the fraction of the state that fits in the window.
    """
    a = oscillator_length(depth)
    psi = gkp_wavefunction(spec, grid.x / a) / np.sqrt(a)
    return QuantumState(psi, "grid", grid=grid)


def gkp_in_lattice(
    spec: GkpSpec, basis: FockBasis, n_states: int | None = None
) -> tuple[QuantumState, float]:
    """Project the target onto the lowest vibrational levels of a site.

    Returns the renormalised Fock-representation state and the reconstruction
    fidelity ``sum |<n|GKP>|^2`` before renormalisation.
    """
    if basis.n_bound < 1:
        raise ValueError("basis has no bound levels")
    n = basis.n_bound if n_states is None else n_states
    sub = basis.truncate(n)
    psi = gkp_on_grid(spec, basis.grid, basis.depth)
    c, leak = project_to_fock(psi, sub)
    fid = 1.0 - leak
    return sub.fock_state(c / np.sqrt(fid)), fid


# ---------------------------------------------------------------------------
# basis size / depth curve


def _default_curve_grid() -> SimGrid:
    # three periods so that only site-localised levels count as bound
    return build_grid(3, 256)


@lru_cache(maxsize=512)
def _threshold_depth(n_levels: int, grid: SimGrid, depth_step: float, depth_cap: float) -> float:
    """Smallest depth on the search grid that binds ``n_levels`` levels."""

    def margin(depth):
        b = eigensolve(grid, depth)
        return -1.0 if b.n_bound >= n_levels else 1.0

    # WKB: a site binds about (2/pi) sqrt(U) + 1/2 levels
    guess = (np.pi / 2 * (n_levels - 0.5)) ** 2
    lo = max(depth_step, depth_step * np.floor(0.8 * guess / depth_step))
    hi = depth_step * np.ceil(1.2 * guess / depth_step) + depth_step
    while margin(lo) < 0 and lo > depth_step:
        lo = max(depth_step, lo / 2)
    while margin(hi) > 0:
        hi *= 1.5
        if hi > 2 * depth_cap:
            return np.inf
    # bisection over grid indices
    i_lo, i_hi = int(round(lo / depth_step)), int(np.ceil(hi / depth_step))
    if margin(i_lo * depth_step) < 0:
        return i_lo * depth_step
    while i_hi - i_lo > 1:
        mid = (i_lo + i_hi) // 2
        if margin(mid * depth_step) < 0:
            i_hi = mid
        else:
            i_lo = mid
    return i_hi * depth_step


@lru_cache(maxsize=4096)
def _reconstruction_fidelity(k: int, zeta: float, n_levels: int, depth: float, grid: SimGrid) -> float:
    basis = eigensolve(grid, depth, n_states=n_levels)
    _, fid = gkp_in_lattice(GkpSpec(k, zeta), basis, n_levels)
    return fid


def min_basis_for_squeezing(
    zeta: float,
    fidelity_target: float = 0.99,
    k: int = 0,
    grid: SimGrid | None = None,
    depth_step: float = 1.0,
    depth_cap: float = 5000.0,
    max_levels: int = 60,
) -> tuple[int, float]:
    """Smallest basis size reconstructing the GKP state, and the depth binding it.

    For ``N = 1, 2, ...`` the lattice depth is set to the smallest value on a
    ``depth_step`` grid that binds ``N`` levels; the target is mapped onto that
    site and projected onto its ``N`` lowest levels. The first ``N`` whose
    reconstruction fidelity reaches ``fidelity_target`` is returned with its
    depth (recoil units).
    """
    if not 0 < fidelity_target < 1:
        raise ValueError("fidelity_target must lie in (0, 1)")
    grid = grid or _default_curve_grid()
    for n in range(1, max_levels + 1):
        depth = _threshold_depth(n, grid, float(depth_step), float(depth_cap))
        if not np.isfinite(depth) or depth > depth_cap:
            break
        fid = _reconstruction_fidelity(k, float(zeta), n, depth, grid)
        logger.debug("zeta=%.2f N=%d depth=%.1f fidelity=%.5f", zeta, n, depth, fid)
        if fid >= fidelity_target:
            return n, depth
    raise UnreachableTargetError(
        f"no basis up to depth {depth_cap:g} E_R reconstructs {zeta:g} dB GKP{k} to {fidelity_target}"
    )


def squeezing_curve(zetas, fidelity_target: float = 0.99, k: int = 0, **kwargs) -> np.ndarray:
    """Rows of ``(zeta, N, depth)`` over the requested squeezing levels."""
    rows = []
    for z in zetas:
        n, d = min_basis_for_squeezing(float(z), fidelity_target, k, **kwargs)
        rows.append((float(z), n, d))
    return np.array(rows)

"""
Two-line alkali dipole-trap model for lattice depth and photon-scattering lifetime.

Between the D1 and D2 lines the rotating-wave dipole potential and scattering
rate of a linearly polarised beam are

    U(I)    = sum_i  3 pi c^2 Gamma_i / (2 omega_i^3) * (w_i/3) * I / Delta_i
    R_sc(I) = sum_i  3 pi c^2 / (2 hbar omega_i^3) * (w_i/3) * (Gamma_i/Delta_i)^2 * I

with ``Delta_i = omega - omega_i`` and line weights ``w = 2`` (D2) and ``1``
(D1). The lattice depth is ``|U(I_max)|`` in recoil units of the lattice
wavelength. The lifetime is ``1/R_sc`` at the intensity maximum. Both are
linear in power, so iso-depth and iso-lifetime contours follow in closed form.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize as sopt

from .units import C_LIGHT, HBAR, AtomSpecies, load_species, recoil_energy


class OutOfWindowError(ValueError):
    """Wavelength outside the open interval between the D2 and D1 lines."""


_LINE_WEIGHTS = {"d2": 2.0, "d1": 1.0}


@dataclass(frozen=True)
class FeasibilitySpec:
    """Beam and species parameters for a 1D lattice between the D lines.

    Parameters
    ----------
    species : AtomSpecies or str
    waist : float
        Gaussian beam waist in metres.
    power_range : (float, float)
        Power limits in watts used for maps.
    wavelength_range : (float, float), optional
        Must lie strictly inside ``(d2_wavelength, d1_wavelength)``. The
        default trims 0.2 % of the window at each end.
    retro_reflected : bool
        Standing wave from a retro-reflected beam: four times the single-beam
        peak intensity. Otherwise two counter-propagating beams of half the
        power each are assumed to add incoherently to ``2P/(pi w0^2)``.
    """

    species: AtomSpecies
    waist: float = 150e-6
    power_range: tuple[float, float] = (1e-3, 1.0)
    wavelength_range: tuple[float, float] | None = None
    retro_reflected: bool = True

    def __post_init__(self):
        if isinstance(self.species, str):
            object.__setattr__(self, "species", load_species(self.species))
        if not self.waist > 0:
            raise ValueError("waist must be positive")
        p0, p1 = self.power_range
        if not (0 < p0 <= p1):
            raise ValueError("power range must be positive and ordered")
        lo, hi = self.window
        if self.wavelength_range is None:
            pad = 2e-3 * (hi - lo)
            object.__setattr__(self, "wavelength_range", (lo + pad, hi - pad))
        a, b = self.wavelength_range
        if not (lo < a <= b < hi):
            raise OutOfWindowError(
                f"wavelength range ({a:.6e}, {b:.6e}) m must lie strictly inside ({lo:.6e}, {hi:.6e}) m"
            )

    @property
    def window(self) -> tuple[float, float]:
        return self.species.window

    def peak_intensity(self, power):
        """Peak lattice intensity in W/m^2."""
        single = 2 * np.asarray(power, dtype=float) / (np.pi * self.waist**2)
        return 4 * single if self.retro_reflected else single

    def metadata(self) -> dict:
        return {
            "species": self.species.name,
            "waist_m": self.waist,
            "geometry": "retro-reflected 1D lattice" if self.retro_reflected else "incoherent 1D pair",
            "intensity_factor": 4 if self.retro_reflected else 1,
            "power_range_W": list(self.power_range),
            "wavelength_range_m": list(self.wavelength_range),
            "model": "two-line RWA, D2:D1 weights 2:1, lifetime = 1/scattering rate at peak intensity",
        }


def _lines(species: AtomSpecies):
    out = []
    for key, lam, gamma in (("d2", species.d2_wavelength, species.d2_linewidth),
                            ("d1", species.d1_wavelength, species.d1_linewidth)):
        out.append((2 * np.pi * C_LIGHT / lam, gamma, _LINE_WEIGHTS[key]))
    return out


def _check_window(wavelength, spec: FeasibilitySpec):
    lam = np.asarray(wavelength, dtype=float)
    lo, hi = spec.window
    if np.any(lam <= lo) or np.any(lam >= hi):
        raise OutOfWindowError(f"wavelength must lie strictly between {lo:.6e} and {hi:.6e} m")
    return lam


def potential_per_intensity(wavelength, species: AtomSpecies):
    """Signed dipole potential per unit intensity, J m^2 / W."""
    omega = 2 * np.pi * C_LIGHT / np.asarray(wavelength, dtype=float)
    total = 0.0
    for w0, gamma, weight in _lines(species):
        total = total + 3 * np.pi * C_LIGHT**2 * gamma / (2 * w0**3) * (weight / 3) / (omega - w0)
    return total


def scattering_per_intensity(wavelength, species: AtomSpecies):
    """Photon scattering rate per unit intensity, 1/s per W/m^2."""
    omega = 2 * np.pi * C_LIGHT / np.asarray(wavelength, dtype=float)
    total = 0.0
    for w0, gamma, weight in _lines(species):
        total = total + 3 * np.pi * C_LIGHT**2 / (2 * HBAR * w0**3) * (weight / 3) * (gamma / (omega - w0)) ** 2
    return total


def depth_per_watt(wavelength, spec: FeasibilitySpec):
    """Lattice depth magnitude in recoil units per watt of power."""
    lam = _check_window(wavelength, spec)
    u = np.abs(potential_per_intensity(lam, spec.species)) * spec.peak_intensity(1.0)
    return u / recoil_energy(spec.species, lam)


def rate_per_watt(wavelength, spec: FeasibilitySpec):
    lam = _check_window(wavelength, spec)
    return scattering_per_intensity(lam, spec.species) * spec.peak_intensity(1.0)


def dipole_depth(power, wavelength, spec: FeasibilitySpec):
    """Peak-to-peak lattice depth ``|U|`` in recoil units at the given power and wavelength."""
    return np.asarray(power, dtype=float) * depth_per_watt(wavelength, spec)


def dipole_sign(wavelength, spec: FeasibilitySpec):
    """+1 for repulsive (blue-dominated), -1 for attractive (red-dominated) light."""
    return np.sign(potential_per_intensity(_check_window(wavelength, spec), spec.species))


def scattering_rate(power, wavelength, spec: FeasibilitySpec):
    return np.asarray(power, dtype=float) * rate_per_watt(wavelength, spec)


def scattering_lifetime(power, wavelength, spec: FeasibilitySpec):
    """Inverse photon-scattering rate at peak intensity, in seconds."""
    return 1.0 / scattering_rate(power, wavelength, spec)


# ---------------------------------------------------------------------------
# maps


@dataclass
class FeasibilityMap:
    """Depth and lifetime sampled on a ``power x wavelength`` grid.

    ``depth[i, j]`` and ``lifetime[i, j]`` refer to ``powers[i]``, ``wavelengths[j]``.
    """

    powers: np.ndarray
    wavelengths: np.ndarray
    depth: np.ndarray
    lifetime: np.ndarray
    spec: FeasibilitySpec
    contours: dict = field(default_factory=dict)

    def depth_contour(self, level: float) -> np.ndarray:
        """Rows ``(wavelength, power)`` on the iso-depth line inside the power range."""
        p = level / depth_per_watt(self.wavelengths, self.spec)
        sel = (p >= self.powers.min()) & (p <= self.powers.max())
        return np.column_stack([self.wavelengths[sel], p[sel]])

    def lifetime_contour(self, level: float) -> np.ndarray:
        p = 1.0 / (level * rate_per_watt(self.wavelengths, self.spec))
        sel = (p >= self.powers.min()) & (p <= self.powers.max())
        return np.column_stack([self.wavelengths[sel], p[sel]])

    def to_csv(self, path, metadata_path=None) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["power_W", "wavelength_m", "depth_recoil", "lifetime_s"])
            for i, p in enumerate(self.powers):
                for j, lam in enumerate(self.wavelengths):
                    w.writerow([f"{p:.10g}", f"{lam:.12g}", f"{self.depth[i, j]:.10g}", f"{self.lifetime[i, j]:.10g}"])
        if metadata_path is not None:
            meta = self.spec.metadata()
            meta["contours"] = {
                name: {"kind": kind, "level": level, "wavelength_m": c[:, 0].tolist(), "power_W": c[:, 1].tolist()}
                for name, (kind, level, c) in self.contours.items()
            }
            with open(metadata_path, "w") as fh:
                json.dump(meta, fh, indent=2)


def feasibility_map(spec: FeasibilitySpec, n_power: int = 101, n_wavelength: int = 201,
                    depth_levels=(1500.0,), lifetime_levels=(1e-3, 5e-3, 10e-3, 50e-3)) -> FeasibilityMap:
    """Sample depth and lifetime over the configured ranges; powers are log-spaced."""
    p0, p1 = spec.power_range
    powers = np.geomspace(p0, p1, n_power) if n_power > 1 else np.array([p0])
    a, b = spec.wavelength_range
    lams = np.linspace(a, b, n_wavelength) if n_wavelength > 1 else np.array([a])
    dpw = depth_per_watt(lams, spec)
    rpw = rate_per_watt(lams, spec)
    depth = np.outer(powers, dpw)
    lifetime = 1.0 / np.outer(powers, rpw)
    fmap = FeasibilityMap(powers, lams, depth, lifetime, spec)
    for lv in depth_levels:
        fmap.contours[f"depth_{lv:g}"] = ("depth", lv, fmap.depth_contour(lv))
    for lv in lifetime_levels:
        fmap.contours[f"lifetime_{lv:g}"] = ("lifetime", lv, fmap.lifetime_contour(lv))
    return fmap


# ---------------------------------------------------------------------------
# operating points


@dataclass(frozen=True)
class OperatingPoint:
    species: str
    wavelength: float
    power: float
    depth: float
    lifetime: float

    def as_dict(self) -> dict:
        return {"species": self.species, "wavelength_m": self.wavelength, "power_W": self.power,
                "depth_recoil": self.depth, "lifetime_s": self.lifetime}


def _fixed_depth_lifetime(lam, spec, depth):
    # at fixed depth the required power is depth/dpw, so tau = dpw / (depth * rpw)
    return depth_per_watt(lam, spec) / (depth * rate_per_watt(lam, spec))


def best_lifetime(spec: FeasibilitySpec, depth: float = 1500.0, max_power: float | None = None,
                  n_samples: int = 4001) -> OperatingPoint:
    """Longest lifetime on the iso-depth line, over wavelengths in range, with power at most ``max_power``.

    Raises
    ------
    ValueError
        If no wavelength in range reaches ``depth`` within the power cap.
    """
    cap = spec.power_range[1] if max_power is None else max_power
    a, b = spec.wavelength_range
    lams = np.linspace(a, b, n_samples)
    power = depth / depth_per_watt(lams, spec)
    tau = np.where(power <= cap, _fixed_depth_lifetime(lams, spec, depth), -np.inf)
    j = int(np.argmax(tau))
    if not np.isfinite(tau[j]):
        raise ValueError(f"depth {depth} not reachable with power <= {cap} W")
    # refine inside the neighbouring samples; the cap is enforced by a penalty
    lo, hi = lams[max(j - 1, 0)], lams[min(j + 1, n_samples - 1)]

    def neg(lam):
        p = depth / depth_per_watt(lam, spec)
        return -_fixed_depth_lifetime(lam, spec, depth) if p <= cap else 0.0

    if hi > lo:
        res = sopt.minimize_scalar(neg, bounds=(lo, hi), method="bounded", options={"xatol": 1e-16})
        if -res.fun > tau[j]:
            lam_best = float(res.x)
        else:
            lam_best = float(lams[j])
    else:
        lam_best = float(lams[j])
    p_best = float(depth / depth_per_watt(lam_best, spec))
    return OperatingPoint(spec.species.name, lam_best, p_best, depth,
                          float(_fixed_depth_lifetime(lam_best, spec, depth)))


def lifetime_ratio(spec_a: FeasibilitySpec, spec_b: FeasibilitySpec, depth: float = 1500.0,
                   max_power: float | None = None) -> tuple[float, OperatingPoint, OperatingPoint]:
    """``tau_b / tau_a`` of the best operating points under a common power cap."""
    pa = best_lifetime(spec_a, depth, max_power)
    pb = best_lifetime(spec_b, depth, max_power)
    return pb.lifetime / pa.lifetime, pa, pb


def sites_within_tolerance(waist: float, wavelength: float, tolerance: float) -> int:
    """Lattice sites along one axis whose depth is within ``tolerance`` of the centre value.

    With ``U(x) = U0 exp(-2 x^2 / w0^2)`` the deviation stays below ``tolerance``
    for ``|x| <= w0 sqrt(-ln(1 - tol)/2)``; sites sit at multiples of ``lambda/2``.
    """
    if not 0 < tolerance < 0.1:
        raise ValueError("tolerance must lie in (0, 0.1)")
    if not (waist > 0 and wavelength > 0):
        raise ValueError("waist and wavelength must be positive")
    x_max = waist * np.sqrt(-np.log1p(-tolerance) / 2)
    return 2 * int(np.floor(x_max / (wavelength / 2) + 1e-12)) + 1

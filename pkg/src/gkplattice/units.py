"""
Physical constants, alkali species data and lattice unit conversions.

Dimensionless lattice units are used throughout the package:

* lengths in ``1/k_L`` (one lattice site spans ``pi``),
* energies in the recoil energy ``E_R = hbar^2 k_L^2 / (2 m)``,
* times in ``hbar / E_R``.

In these units the undriven single-particle Hamiltonian is ``p^2 + V(x)`` with
``p = -i d/dx``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np
from scipy import constants

HBAR = constants.hbar
H_PLANCK = constants.h
C_LIGHT = constants.c


@dataclass(frozen=True)
class AtomSpecies:
    """Mass and D-line data of an alkali atom (SI units, linewidths in rad/s)."""

    name: str
    mass: float
    d1_wavelength: float
    d2_wavelength: float
    d1_linewidth: float
    d2_linewidth: float

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError(f"{self.name}: mass must be positive")
        if not self.d1_wavelength > self.d2_wavelength > 0:
            raise ValueError(f"{self.name}: expected d1_wavelength > d2_wavelength > 0")
        if not (self.d1_linewidth > 0 and self.d2_linewidth > 0):
            raise ValueError(f"{self.name}: linewidths must be positive")

    @property
    def window(self) -> tuple[float, float]:
        """Open wavelength interval between the D2 and D1 lines."""
        return self.d2_wavelength, self.d1_wavelength


@lru_cache(maxsize=None)
def _species_table() -> dict[str, AtomSpecies]:
    raw = resources.files("gkplattice").joinpath("data/species.json").read_text()
    records = json.loads(raw)["species"]
    return {rec["name"]: AtomSpecies(**rec) for rec in records}


def load_species(name: str) -> AtomSpecies:
    """Look up a species by name (``"Rb87"``, ``"Cs133"``, ...).

    ``"Rb"`` and ``"Cs"`` are accepted as aliases for the stable isotopes
    usually used in lattice experiments.
    """
    aliases = {"Rb": "Rb87", "Cs": "Cs133", "Na": "Na23", "K": "K39"}
    table = _species_table()
    key = aliases.get(name, name)
    if key not in table:
        raise KeyError(f"unknown species {name!r}; known: {sorted(table)}")
    return table[key]


def available_species() -> list[str]:
    return sorted(_species_table())


def recoil_energy(species: AtomSpecies, wavelength):
    """Photon recoil energy ``hbar^2 k_L^2 / 2m`` in joules (scalar or array)."""
    wavelength = np.asarray(wavelength, dtype=float)
    if not np.all(wavelength > 0):
        raise ValueError("wavelength must be positive")
    k = 2.0 * np.pi / wavelength
    return HBAR**2 * k**2 / (2.0 * species.mass)


@dataclass(frozen=True)
class UnitSystem:
    """Conversion factors between SI and lattice units for one species and wavelength."""

    species: AtomSpecies
    wavelength: float

    def __post_init__(self):
        if not self.wavelength > 0:
            raise ValueError("wavelength must be positive")

    @property
    def wavenumber(self) -> float:
        return 2.0 * np.pi / self.wavelength

    @property
    def recoil_energy(self) -> float:
        return recoil_energy(self.species, self.wavelength)

    @property
    def length_unit(self) -> float:
        return 1.0 / self.wavenumber

    @property
    def time_unit(self) -> float:
        return HBAR / self.recoil_energy

    @property
    def recoil_frequency(self) -> float:
        """``E_R / h`` in Hz."""
        return self.recoil_energy / H_PLANCK

    @property
    def momentum_unit(self) -> float:
        return HBAR * self.wavenumber

    def _scale(self, kind: str) -> float:
        scales = {
            "length": self.length_unit,
            "time": self.time_unit,
            "energy": self.recoil_energy,
            "momentum": self.momentum_unit,
            # angular frequency in rad/s
            "frequency": 1.0 / self.time_unit,
        }
        try:
            return scales[kind]
        except KeyError:
            raise ValueError(f"unknown quantity kind {kind!r}; expected one of {sorted(scales)}") from None

    def to_lattice_units(self, value, kind: str):
        return np.divide(value, self._scale(kind))

    def from_lattice_units(self, value, kind: str):
        return np.multiply(value, self._scale(kind))

    def frequency_hz(self, angular_lattice):
        """Lattice angular frequency (``E_R/hbar`` units) to ordinary frequency in Hz."""
        return np.asarray(angular_lattice) / (2.0 * np.pi * self.time_unit)

    def angular_from_hz(self, f_hz):
        """Ordinary frequency in Hz to angular frequency in lattice units."""
        return 2.0 * np.pi * np.asarray(f_hz) * self.time_unit


def to_lattice_units(value, kind: str, units: UnitSystem):
    return units.to_lattice_units(value, kind)


def from_lattice_units(value, kind: str, units: UnitSystem):
    return units.from_lattice_units(value, kind)


def harmonic_frequency(depth: float) -> float:
    """Harmonic trap frequency ``hbar*omega`` of one site, in recoil units.

    ``depth`` is the peak-to-peak lattice depth ``U_r`` (barrier top minus
    well bottom). Expanding ``-(U_r/2) cos(2x)`` to second order about the
    minimum gives ``U_r x^2``, hence ``hbar*omega = 2 sqrt(U_r)``.
    """
    if depth < 0:
        raise ValueError("lattice depth must be non-negative")
    return 2.0 * np.sqrt(depth)


def oscillator_length(depth: float) -> float:
    """Harmonic oscillator length ``sqrt(hbar / (m omega))`` in units of ``1/k_L``.

    In lattice units the mass is 1/2, so this is ``sqrt(2 / omega)``.
    """
    omega = harmonic_frequency(depth)
    if omega == 0:
        raise ValueError("oscillator length is undefined at zero depth")
    return np.sqrt(2.0 / omega)

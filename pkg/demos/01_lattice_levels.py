"""
Vibrational levels of one optical-lattice site.

A deep lattice site behaves like an anharmonic oscillator. This walk-through
solves the single-site spectrum at the working depth, compares it with the
harmonic approximation and converts the key numbers to laboratory units.

Run with ``python demos/01_lattice_levels.py``.
"""

# %% Set up units for rubidium in a lattice between its D lines
import numpy as np

from gkplattice import UnitSystem, build_grid, eigensolve, load_species
from gkplattice.units import harmonic_frequency, oscillator_length

rb = load_species("Rb87")
units = UnitSystem(rb, 785e-9)
depth = 1500.0  # peak-to-peak, recoil units
print(f"E_R = {units.recoil_energy:.4e} J  (E_R/h = {units.recoil_frequency / 1e3:.3f} kHz)")
print(f"time unit hbar/E_R = {units.time_unit * 1e6:.3f} us")

# %% Solve the single-cell spectrum with periodic boundaries
grid = build_grid(1, 512)
basis = eigensolve(grid, depth, boundary="periodic")
hw = harmonic_frequency(depth)
print(f"{basis.n_bound} bound levels; hbar*omega = {hw:.2f} E_R "
      f"= {units.frequency_hz(hw) / 1e3:.1f} kHz trap frequency")

# %% Level spacings shrink with n: this anharmonicity is what makes selective control possible
gaps = np.diff(basis.energies[: basis.n_bound])
for n in (0, 1, 2, 10, 20):
    print(f"E_{n + 1} - E_{n} = {gaps[n]:7.3f} E_R  ({gaps[n] / hw:.4f} hbar*omega)")
print(f"anharmonic shift of the first gap: {hw - gaps[0]:.3f} E_R")

# %% The ground state is much narrower than a lattice site
a = oscillator_length(depth)
print(f"oscillator length = {a:.4f} / k_L = {a / np.pi:.4f} of a site")

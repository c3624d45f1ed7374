"""
Optimal lattice shaking: ground state to the first excited level.

A GRAPE optimisation of the lattice phase (a time-dependent shift of the
standing wave) transfers the atom from the ground level to the first excited
level in 150 us. The waveform is band limited to 0.5 MHz and its amplitude
stays below a quarter wavelength.

Run with ``python demos/04_shake_to_first_level.py`` (about a minute).
"""

# %% Problem and settings
import numpy as np

from gkplattice import OptimizerConfig, UnitSystem, evolve, load_species, make_transfer_problem, optimize

units = UnitSystem(load_species("Rb87"), 785e-9)
problem = make_transfer_problem(units, 1500.0, "fock:1", n_levels=4)
config = OptimizerConfig(duration_us=150.0, rng_seed=0)

# %% Optimise one seed
result = optimize(problem, config)
print(f"F = {result.fidelity:.5f} after {result.iterations} iterations ({result.termination})")
print(f"peak shift = {result.max_amplitude():.3f} / k_L, "
      f"power above 1 MHz = {result.spectrum.fraction_above(1e6):.2e}")

# %% Population of the lowest levels at the end
final, _ = evolve(problem.initial, result.waveform, problem.depth, problem.grid)
c = problem.basis.states[:4].conj() @ final.amplitudes * problem.grid.dx
print("level populations:", np.round(np.abs(c) ** 2, 5))

"""Optimal-control preparation of GKP states in the vibrational levels of a deep optical lattice."""

from .analysis import RobustnessCurve, WignerMap, depth_robustness, fidelity, vacuum_widths, wigner
from .feasibility import (
    FeasibilityMap,
    FeasibilitySpec,
    best_lifetime,
    dipole_depth,
    feasibility_map,
    scattering_lifetime,
    sites_within_tolerance,
)
from .gkp import GkpSpec, build_gkp, gkp_in_lattice, min_basis_for_squeezing, squeezing_curve
from .lattice import FockBasis, QuantumState, SimGrid, build_grid, count_bound, eigensolve, project_to_fock
from .optimizer import (
    OptimizationResult,
    OptimizerConfig,
    TransferProblem,
    best_of_starts,
    make_transfer_problem,
    optimize,
    time_optimal_search,
)
from .propagator import ControlWaveform, SplitStepPropagator, evolve, step
from .units import AtomSpecies, UnitSystem, from_lattice_units, load_species, recoil_energy, to_lattice_units

__version__ = "0.1.0"

__all__ = [
    "AtomSpecies", "ControlWaveform", "FeasibilityMap", "FeasibilitySpec", "FockBasis", "GkpSpec",
    "OptimizationResult", "OptimizerConfig", "QuantumState", "RobustnessCurve", "SimGrid",
    "SplitStepPropagator", "TransferProblem", "UnitSystem", "WignerMap", "best_lifetime", "best_of_starts",
    "build_gkp", "build_grid", "count_bound", "depth_robustness", "dipole_depth", "eigensolve", "evolve",
    "feasibility_map", "fidelity", "from_lattice_units", "gkp_in_lattice", "load_species",
    "make_transfer_problem", "min_basis_for_squeezing", "optimize", "project_to_fock", "recoil_energy",
    "scattering_lifetime", "sites_within_tolerance", "squeezing_curve", "step", "time_optimal_search",
    "to_lattice_units", "vacuum_widths", "wigner",
]

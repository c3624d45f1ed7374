"""
Is a 1500 E_R lattice practical?

Depth and photon-scattering lifetime are both linear in laser power, so at a
fixed depth the lifetime depends on the wavelength alone. Large detuning from
the D2 line helps the lifetime but costs power, so the best point is where the
available power just reaches the target depth.

Run with ``python demos/03_feasibility.py``.
"""

# %% Best operating points under a few power caps
from gkplattice import FeasibilitySpec, best_lifetime, sites_within_tolerance
from gkplattice.feasibility import lifetime_ratio

rb, cs = FeasibilitySpec("Rb87"), FeasibilitySpec("Cs133")
for cap in (0.1, 0.5, 1.0):
    ratio, p_rb, p_cs = lifetime_ratio(rb, cs, 1500.0, cap)
    print(f"P <= {cap:4.1f} W: Rb {p_rb.lifetime * 1e3:6.2f} ms at {p_rb.wavelength * 1e9:.2f} nm, "
          f"Cs {p_cs.lifetime * 1e3:6.2f} ms at {p_cs.wavelength * 1e9:.2f} nm, ratio {ratio:.2f}")

# %% Without a power cap the lifetime peaks at one wavelength: further out, the D1 line cancels the depth
pt = best_lifetime(FeasibilitySpec("Rb87", power_range=(1e-3, 100.0)), 1500.0)
print(f"unconstrained Rb: {pt.lifetime * 1e3:.2f} ms needs {pt.power:.2f} W")

# %% How many sites see the same depth to 0.1 %?
print("sites within 0.1 % of the central depth (150 um waist):",
      sites_within_tolerance(150e-6, 785e-9, 1e-3))

"""
Phase-space picture of the targets.

Wigner maps use scaled quadratures in which the harmonic vacuum has
``W(0, 0) = 1/pi``. The GKP codeword shows a grid of positive peaks
interleaved with negative fringes.

Run with ``python demos/05_wigner_maps.py``.
"""

# %% Vacuum and first excited level as checks
import numpy as np

from gkplattice import GkpSpec, build_gkp
from gkplattice.analysis import comb_peaks, wigner_quadrature

X = (np.arange(512) - 256) * (24.0 / 512)
vac = np.pi**-0.25 * np.exp(-0.5 * X**2)
print(f"vacuum W(0,0) = {wigner_quadrature(X, vac).value(0, 0):.6f}  (1/pi = {1 / np.pi:.6f})")
print(f"Fock-1 W(0,0) = {wigner_quadrature(X, np.sqrt(2) * X * vac).value(0, 0):.6f}")

# %% The 10 dB GKP codewords
Xg = (np.arange(1024) - 512) * (32.0 / 1024)
for k in (0, 1):
    spec = GkpSpec(k, 10.0)
    w = wigner_quadrature(Xg, build_gkp(spec, Xg).amplitudes)
    px = comb_peaks(Xg, w.marginal_x())
    print(f"GKP{k}: min W = {w.W.min():.3f}, negative volume = {w.negative_volume():.3f}, "
          f"position peaks at {np.round(px, 3)}")

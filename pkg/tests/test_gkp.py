import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gkplattice.analysis import comb_peaks
from gkplattice.gkp import (
    GkpSpec,
    InsufficientDomainError,
    UnreachableTargetError,
    build_gkp,
    default_s_max,
    delta_from_sigma,
    gkp_in_lattice,
    gkp_norm_squared,
    gkp_wavefunction,
    min_basis_for_squeezing,
    sigma_from_db,
)
from gkplattice.lattice import build_grid

X = np.linspace(-16, 16, 4096, endpoint=False)


def test_sigma_from_db():
    assert sigma_from_db(10) == pytest.approx(0.316228, abs=1e-6)
    assert sigma_from_db(20) == pytest.approx(0.1, rel=1e-14)
    with pytest.raises(ValueError):
        sigma_from_db(0.0)


@given(st.floats(0.1, 30))
def test_zeta_round_trip(zeta):
    s = sigma_from_db(zeta)
    assert 0 < s < 1
    assert -10 * np.log10(s**2) == pytest.approx(zeta, rel=1e-12)


def test_delta_and_r0_at_ten_db():
    delta, r0 = delta_from_sigma(np.sqrt(0.1))
    assert delta == pytest.approx(1.1463, abs=1e-4)
    assert r0 == pytest.approx(0.0617, abs=1e-4)
    with pytest.raises(ValueError):
        delta_from_sigma(1.0)


def test_delta_asymptotics():
    for s in (1e-3, 1e-5, 1e-7):
        assert delta_from_sigma(s)[0] == pytest.approx(-np.log(s), rel=1e-6)


def test_default_s_max():
    assert default_s_max(sigma_from_db(10)) == 8
    with pytest.raises(ValueError):
        GkpSpec(0, 10, s_max=2)
    with pytest.raises(ValueError):
        GkpSpec(2, 10)


def test_analytic_norm_matches_quadrature():
    spec = GkpSpec(1, 10)
    Xf = np.linspace(-30, 30, 60001)
    psi = gkp_wavefunction(spec, Xf)
    assert np.trapezoid(np.abs(psi) ** 2, Xf) == pytest.approx(1.0, abs=1e-10)
    assert gkp_norm_squared(spec) > 0


@pytest.mark.parametrize("k", [0, 1])
def test_parity(k):
    # both codewords are mirror-symmetric combs: teeth at +-sqrt(pi)(2s+k)
    Xs = np.linspace(-15, 15, 3001)
    psi = gkp_wavefunction(GkpSpec(k, 10), Xs)
    np.testing.assert_allclose(psi[::-1], psi, atol=1e-10)
    pos = GkpSpec(k, 10).tooth_positions()
    np.testing.assert_allclose(np.sort(pos), np.sort(-pos), atol=1e-12)


@pytest.mark.parametrize("k", [0, 1])
def test_only_even_levels_populated(basis512, k):
    state, _ = gkp_in_lattice(GkpSpec(k, 10), basis512, 24)
    assert np.sum(np.abs(state.amplitudes[1::2]) ** 2) < 1e-12


def test_normalised_on_grid():
    w = build_gkp(GkpSpec(0, 10), X)
    assert np.sum(w.probability()) * w.dX == pytest.approx(1.0, abs=1e-10)


def test_insufficient_domain():
    with pytest.raises(InsufficientDomainError):
        build_gkp(GkpSpec(0, 10), np.linspace(-6, 6, 512))


def test_s_max_independence():
    a = build_gkp(GkpSpec(0, 10), X).amplitudes
    b = build_gkp(GkpSpec(0, 10, s_max=14), X).amplitudes
    assert np.sqrt(np.sum(np.abs(a - b) ** 2) * (X[1] - X[0])) < 1e-10


def test_peaks_on_comb_spacing():
    spec = GkpSpec(0, 10)
    w = build_gkp(spec, X)
    peaks = comb_peaks(X, w.probability())
    spacing = np.diff(peaks)
    assert np.all(np.abs(spacing - spec.spacing) < 0.02 * spec.spacing)
    assert spec.spacing == pytest.approx(2 * np.sqrt(np.pi) * np.exp(-spec.r0))


def test_autocorrelation_first_maximum():
    spec = GkpSpec(0, 10)
    p = build_gkp(spec, X).probability()
    ac = np.correlate(p, p, mode="full")[p.size - 1:]
    from scipy.signal import find_peaks

    idx, _ = find_peaks(ac)
    lag = idx[0]
    assert lag * (X[1] - X[0]) == pytest.approx(spec.spacing, abs=2 * (X[1] - X[0]))


def test_codewords_nearly_orthogonal():
    a = build_gkp(GkpSpec(0, 10), X).amplitudes
    b = build_gkp(GkpSpec(1, 10), X).amplitudes
    assert abs(np.vdot(a, b) * (X[1] - X[0])) ** 2 < 0.01


def test_reconstruction_in_working_basis(basis_hw, basis512):
    for basis in (basis_hw, basis512):
        state, fid = gkp_in_lattice(GkpSpec(0, 10), basis, 24)
        assert fid >= 0.99
        assert state.representation == "fock"
        assert state.norm() == pytest.approx(1.0, abs=1e-12)
    _, f3 = gkp_in_lattice(GkpSpec(0, 3), basis512, 24)
    _, f10 = gkp_in_lattice(GkpSpec(0, 10), basis512, 24)
    assert f3 > f10
    _, f5 = gkp_in_lattice(GkpSpec(0, 10), basis512, 5)
    assert f5 < 0.9


def test_fidelity_with_ground_equals_c0(basis512):
    from gkplattice.analysis import fidelity

    state, fid = gkp_in_lattice(GkpSpec(0, 10), basis512, 24)
    grid_state = state.to_grid()
    c0 = abs(state.amplitudes[0]) ** 2
    assert fidelity(basis512.state(0), grid_state) == pytest.approx(c0, abs=1e-12)


def test_min_basis_small_squeezing():
    grid = build_grid(1, 128)
    n, depth = min_basis_for_squeezing(4.0, grid=grid)
    assert 1 <= n <= 8 and depth > 0
    # deeper squeezing never needs fewer levels
    n2, d2 = min_basis_for_squeezing(6.0, grid=grid)
    assert n2 >= n and d2 >= depth


def test_min_basis_unreachable():
    with pytest.raises(UnreachableTargetError):
        min_basis_for_squeezing(10.0, depth_cap=200.0, grid=build_grid(1, 128))
    with pytest.raises(ValueError):
        min_basis_for_squeezing(10.0, fidelity_target=1.5)


def test_wavefunction_csv(tmp_path):
    w = build_gkp(GkpSpec(1, 10), X[::4])
    w.to_csv(tmp_path / "g.csv")
    d = np.loadtxt(tmp_path / "g.csv", delimiter=",", skiprows=1)
    assert d.shape == (X[::4].size, 3)
    np.testing.assert_allclose(d[:, 1], w.amplitudes.real, atol=1e-11)

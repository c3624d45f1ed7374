import json

import numpy as np
import pytest

from gkplattice.optimizer import (
    GrapeObjective,
    OptimizerConfig,
    best_of_starts,
    cost,
    gradient,
    lowpass_window,
    make_seed,
    make_transfer_problem,
    optimize,
    spectrum,
    time_optimal_search,
)

DEPTH = 1500.0


@pytest.fixture(scope="module")
def small_problem(rb_units):
    """Ground state -> first excited level on a coarse single-cell grid."""
    return make_transfer_problem(rb_units, DEPTH, "fock:1", n_levels=6, points_per_period=128)


@pytest.fixture(scope="module")
def self_problem(rb_units):
    return make_transfer_problem(rb_units, DEPTH, "fock:0", n_levels=4, points_per_period=128)


def short_config(**kw):
    base = dict(duration_us=5.0, n_samples=32, max_iters=20)
    base.update(kw)
    return OptimizerConfig(**base)


def test_zero_control_self_transfer_is_perfect(self_problem):
    cfg = short_config()
    J, F = cost(np.zeros(cfg.knot_count()), self_problem, cfg)
    # the split-step eigenstate differs from the exact one at O(dt^2)
    assert F == pytest.approx(1.0, abs=1e-7)
    assert J == pytest.approx(1.0 - F, abs=1e-15)


def test_zero_control_orthogonal_target(small_problem):
    cfg = short_config()
    J, F = cost(np.zeros(cfg.knot_count()), small_problem, cfg)
    assert F < 1e-10
    assert J == pytest.approx(1.0, abs=1e-10)


def test_amplitude_penalty_value(self_problem):
    # a single knot above the cap by delta; filter weight off
    cfg = short_config(weight_filter=0.0)
    obj = GrapeObjective(self_problem, cfg)
    delta = 0.1
    knots = np.zeros(cfg.knot_count())
    pa, _ = obj.amplitude_penalty(np.where(np.arange(knots.size) == 5, cfg.amplitude_cap + delta, 0.0))
    assert pa == pytest.approx(delta**2, rel=1e-12)


def test_filter_penalty_matches_parseval(self_problem):
    cfg = short_config(weight_filter=1.0)
    obj = GrapeObjective(self_problem, cfg)
    u = np.random.default_rng(3).standard_normal(cfg.knot_count())
    pf, _ = obj.filter_penalty(u)
    full = np.sum(np.abs(np.fft.fft(u)) ** 2) / u.size
    assert full == pytest.approx(np.sum(u**2), rel=1e-12)
    assert 0.0 <= pf <= full


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_gradient_matches_finite_differences(small_problem, seed):
    cfg = short_config(amplitude_cap=0.05, weight_filter=1e-2)
    rng = np.random.default_rng(seed)
    knots = np.zeros(cfg.knot_count())
    knots[1:-1] = 0.06 * rng.standard_normal(knots.size - 2)
    obj = GrapeObjective(small_problem, cfg)
    _, _, g = obj.cost_and_gradient(knots)
    h = 1e-6
    fd = np.empty_like(knots)
    for i in range(knots.size):
        e = np.zeros_like(knots)
        e[i] = h
        fd[i] = (obj.cost(knots + e)[0] - obj.cost(knots - e)[0]) / (2 * h)
    assert np.linalg.norm(g - fd) / np.linalg.norm(fd) < 1e-5


def test_module_level_gradient_agrees_with_objective(small_problem):
    cfg = short_config()
    knots = make_seed(cfg, seed=4)
    g1 = gradient(knots, small_problem, cfg)
    g2 = GrapeObjective(small_problem, cfg).cost_and_gradient(knots)[2]
    np.testing.assert_allclose(g1, g2, rtol=1e-12, atol=1e-15)


def test_penalty_only_gradient(self_problem):
    # self-transfer with zero control: fidelity is stationary, so the gradient is the penalties'
    cfg = short_config()
    obj = GrapeObjective(self_problem, cfg)
    knots = np.zeros(cfg.knot_count())
    knots[7] = cfg.amplitude_cap + 0.2
    _, _, g = obj.cost_and_gradient(knots)
    _, gf = obj.filter_penalty(knots)
    _, ga = obj.amplitude_penalty(knots)
    h = 1e-6
    e = np.zeros_like(knots)
    e[7] = h
    fd = (obj.cost(knots + e)[0] - obj.cost(knots - e)[0]) / (2 * h)
    assert g[7] == pytest.approx(fd, rel=1e-5)
    assert ga[7] == pytest.approx(0.4, rel=1e-12)
    assert gf.shape == knots.shape


def test_seed_is_deterministic_band_limited_and_pinned(rb_units):
    cfg = OptimizerConfig(duration_us=100.0)
    a = make_seed(cfg, seed=11)
    b = make_seed(cfg, seed=11)
    c = make_seed(cfg, seed=12)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    assert a[0] == 0.0 and a[-1] == 0.0
    assert np.abs(a).max() == pytest.approx(cfg.seed_fraction * cfg.amplitude_cap, rel=1e-12)
    spec = spectrum(a, cfg.sample_period_us * 1e-6)
    assert spec.fraction_above(2 * cfg.filter_cutoff_hz) < 0.01


def test_lowpass_window_shape():
    f = np.array([0.0, 0.3e6, 0.5e6, 0.7e6, 1e6])
    w = lowpass_window(f, 0.5e6, 0.2e6)
    np.testing.assert_allclose(w, [1.0, 1.0, 0.5, 0.0, 0.0], atol=1e-12)
    np.testing.assert_array_equal(lowpass_window(f, 0.5e6, 0.0), [1, 1, 1, 0, 0])


def test_spectrum_of_sinusoid():
    fs, f0, n = 2e6, 125e3, 256
    t = np.arange(n) / fs
    s = spectrum(0.3 * np.sin(2 * np.pi * f0 * t), 1 / fs)
    assert s.freqs_hz[np.argmax(s.power)] == pytest.approx(f0)
    # Parseval: one-sided power sums to the mean square
    assert s.total_power() == pytest.approx(np.mean((0.3 * np.sin(2 * np.pi * f0 * t)) ** 2), rel=1e-12)


def test_self_transfer_succeeds_immediately(self_problem):
    cfg = short_config()
    res = optimize(self_problem, cfg, initial_knots=np.zeros(cfg.knot_count()))
    assert res.success
    assert res.termination == "fidelity_goal"
    assert res.iterations == 0


def test_time_optimal_search_returns_first_duration(self_problem):
    T, runs = time_optimal_search(self_problem, short_config(), [2.0, 4.0, 8.0], n_starts=2)
    assert T == 2.0
    assert list(runs) == [2.0]


def test_time_optimal_search_rejects_unsorted(self_problem):
    with pytest.raises(ValueError):
        time_optimal_search(self_problem, short_config(), [4.0, 2.0])


def test_optimizer_run_properties(small_problem, tmp_path, rb_units):
    cfg = short_config(duration_us=10.0, n_samples=None, max_iters=30, amplitude_cap=0.3)
    res = optimize(small_problem, cfg, seed=0)
    costs = np.array(res.cost_history)
    # BFGS with a line search never accepts an uphill step
    assert np.all(np.diff(costs) <= 1e-12)
    assert res.fidelity > res.fidelity_history[0]
    assert res.max_amplitude() <= 1.02 * cfg.amplitude_cap
    assert res.extras["objective_fidelity"] == pytest.approx(res.fidelity, abs=1e-10)
    assert res.termination in {"fidelity_goal", "grad_tolerance", "max_iters", "line_search"}

    out = res.save(tmp_path, rb_units)
    meta = json.loads((out / "result.json").read_text())
    assert meta["fidelity"] == pytest.approx(res.fidelity)
    assert meta["config"]["duration_us"] == 10.0
    knots = np.loadtxt(out / "knots.csv", delimiter=",", skiprows=1)
    np.testing.assert_array_equal(knots, res.knots)
    for name in ("waveform.csv", "spectrum.csv", "cost_history.csv"):
        assert (out / name).stat().st_size > 0


def test_best_of_starts_reports_all_runs(small_problem):
    cfg = short_config(duration_us=5.0, max_iters=3, fidelity_goal=0.999)
    best, runs = best_of_starts(small_problem, cfg, n_starts=2)
    assert [r.seed for r in runs] == [0, 1]
    assert best.fidelity == max(r.fidelity for r in runs)


def test_config_validation():
    with pytest.raises(ValueError):
        OptimizerConfig(weight_amp=-1.0)
    with pytest.raises(ValueError):
        OptimizerConfig(n_samples=2)
    assert OptimizerConfig(duration_us=141.0).knot_count() == 283


def test_wrong_knot_count_rejected(small_problem):
    cfg = short_config()
    with pytest.raises(ValueError):
        optimize(small_problem, cfg, initial_knots=np.zeros(5))

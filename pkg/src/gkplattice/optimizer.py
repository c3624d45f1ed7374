"""
GRAPE optimisation of lattice phase-modulation waveforms.

The control is described by ``n_samples`` knots spread uniformly over
``[0, T]`` with both end knots pinned to zero; the propagator sees their linear
interpolation at the midpoint of every split step. The cost minimised with
BFGS is

    J = (1 - F) + weight_filter * sum_f |u_hat(f)|^2 (1 - L(f))
                + weight_amp * sum_j max(0, |u_j| - cap)^2

where ``u_hat`` is the unitary DFT of the knot samples (so ``sum |u_hat|^2``
equals ``sum u_j^2``, matching the per-sample amplitude penalty) and ``L`` is a
raised-cosine low-pass window whose transition midpoint is the filter cutoff.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import fft as sfft
from scipy import optimize as sopt
from scipy import sparse

from .lattice import FockBasis, QuantumState, SimGrid, build_grid, eigensolve
from .propagator import ControlWaveform, SplitStepPropagator, default_dt, evolve
from .units import UnitSystem

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptimizerConfig:
    """Settings for one GRAPE run.

    Durations and frequencies are physical (microseconds, Hz); the amplitude cap
    is in lattice lengths ``1/k_L``, where ``pi/2`` is a quarter wavelength, i.e.
    half a lattice site.
    """

    duration_us: float = 141.0
    n_samples: int | None = None
    sample_period_us: float = 0.5
    filter_cutoff_hz: float = 0.5e6
    filter_softness_hz: float = 0.2e6
    amplitude_cap: float = 0.5 * np.pi
    weight_filter: float = 1e2
    weight_amp: float = 1e3
    max_iters: int = 2000
    grad_tolerance: float = 1e-7
    fidelity_goal: float = 0.99
    rng_seed: int = 0
    seed_fraction: float = 0.02
    n_starts: int = 8

    def __post_init__(self):
        if self.weight_filter < 0 or self.weight_amp < 0:
            raise ValueError("penalty weights must be non-negative")
        if not self.filter_cutoff_hz > 0:
            raise ValueError("filter cutoff must be positive")
        if not self.amplitude_cap > 0:
            raise ValueError("amplitude cap must be positive")
        if not self.duration_us > 0:
            raise ValueError("duration must be positive")
        if self.filter_softness_hz < 0:
            raise ValueError("filter softness must be non-negative")
        if self.n_samples is not None and self.n_samples < 3:
            raise ValueError("need at least three control samples")

    def knot_count(self) -> int:
        if self.n_samples is not None:
            return self.n_samples
        return max(3, int(round(self.duration_us / self.sample_period_us)) + 1)

    def replace(self, **changes) -> OptimizerConfig:
        return dataclasses.replace(self, **changes)


@dataclass
class TransferProblem:
    """State-transfer problem on a fixed grid and lattice depth."""

    grid: SimGrid
    depth: float
    initial: QuantumState
    target: QuantumState
    units: UnitSystem
    dt: float
    basis: FockBasis | None = None
    label: str = ""

    def __post_init__(self):
        for s in (self.initial, self.target):
            if s.representation != "grid" or s.grid != self.grid:
                raise ValueError("initial and target must be grid states on the problem grid")

    def n_steps(self, duration_us: float) -> int:
        T = self.units.to_lattice_units(duration_us * 1e-6, "time")
        return max(1, int(np.ceil(T / self.dt - 1e-9)))

    def step_size(self, duration_us: float) -> float:
        """Step used for a given duration (``<= dt`` so the duration is exact)."""
        T = self.units.to_lattice_units(duration_us * 1e-6, "time")
        return T / self.n_steps(duration_us)


def make_transfer_problem(
    units: UnitSystem,
    depth: float,
    target: str | QuantumState = "gkp0",
    zeta: float = 10.0,
    n_levels: int = 24,
    initial_level: int = 0,
    points_per_period: int = 512,
    phase_per_step: float = 0.05,
) -> TransferProblem:
    """Ground state -> target transfer on a single periodic lattice cell.

    ``target`` is ``"gkp0"``/``"gkp1"`` (projected onto ``n_levels``
    vibrational levels), ``"fock:<n>"`` for a vibrational level, or an explicit
    grid state.
    """
    from .gkp import GkpSpec, gkp_in_lattice

    grid = build_grid(1, points_per_period)
    basis = eigensolve(grid, depth, n_states=max(n_levels, initial_level + 1), boundary="periodic")
    initial = basis.state(initial_level)
    label = str(target)
    if isinstance(target, QuantumState):
        tgt = target
        label = "custom"
    elif target in ("gkp0", "gkp1"):
        fock, fid = gkp_in_lattice(GkpSpec(int(target[-1]), zeta), basis, n_levels)
        tgt = fock.to_grid()
        logger.info("%s target reconstruction fidelity %.5f with %d levels", target, fid, n_levels)
    elif target.startswith("fock:"):
        tgt = basis.state(int(target.split(":")[1]))
    else:
        raise ValueError(f"unknown target {target!r}")
    return TransferProblem(grid, depth, initial, tgt, units, default_dt(depth, phase_per_step), basis, label)


# ---------------------------------------------------------------------------
# spectral window


def lowpass_window(f, cutoff: float, softness: float) -> np.ndarray:
    """Raised-cosine low-pass: 1 below ``cutoff - softness/2``, 0 above ``cutoff + softness/2``."""
    f = np.abs(np.asarray(f, dtype=float))
    if softness == 0:
        return (f <= cutoff).astype(float)
    lo = cutoff - 0.5 * softness
    z = np.clip((f - lo) / softness, 0.0, 1.0)
    return 0.5 * (1.0 + np.cos(np.pi * z))


@dataclass
class ControlSpectrum:
    """One-sided DFT of a sampled control.

    ``power`` is normalised so that ``power.sum()`` equals the mean square of
    the samples (Parseval); ``magnitude`` is ``sqrt(power)``.
    """

    freqs_hz: np.ndarray
    power: np.ndarray
    window: np.ndarray | None = None

    @property
    def magnitude(self) -> np.ndarray:
        return np.sqrt(self.power)

    def total_power(self) -> float:
        return float(self.power.sum())

    def fraction_above(self, f_hz: float) -> float:
        tot = self.total_power()
        return float(self.power[self.freqs_hz > f_hz].sum() / tot) if tot > 0 else 0.0

    def to_csv(self, path) -> None:
        cols = [self.freqs_hz, self.magnitude, self.power]
        header = "f_hz,magnitude,power"
        if self.window is not None:
            cols.append(self.window)
            header += ",filter_window"
        np.savetxt(path, np.column_stack(cols), delimiter=",", header=header, comments="")


def spectrum(samples, sample_period_s: float, cutoff_hz: float | None = None,
             softness_hz: float = 0.0) -> ControlSpectrum:
    """Spectrum of uniformly sampled control values with a physical frequency axis."""
    u = np.asarray(samples, dtype=float)
    n = u.size
    U = sfft.rfft(u)
    p = np.abs(U) ** 2 / n**2
    # fold negative frequencies onto the one-sided axis
    if n % 2 == 0:
        p[1:-1] *= 2
    else:
        p[1:] *= 2
    f = sfft.rfftfreq(n, d=sample_period_s)
    win = lowpass_window(f, cutoff_hz, softness_hz) if cutoff_hz is not None else None
    return ControlSpectrum(f, p, win)


def waveform_spectrum(waveform: ControlWaveform, units: UnitSystem, config: OptimizerConfig | None = None):
    period = units.from_lattice_units(waveform.dt, "time")
    if config is None:
        return spectrum(waveform.samples, period)
    return spectrum(waveform.samples, period, config.filter_cutoff_hz, config.filter_softness_hz)


# ---------------------------------------------------------------------------
# objective


class GrapeObjective:
    """Cost and exact adjoint gradient for one problem and duration."""

    def __init__(self, problem: TransferProblem, config: OptimizerConfig):
        self.problem = problem
        self.config = config
        self.n_steps = problem.n_steps(config.duration_us)
        self.dt = problem.step_size(config.duration_us)
        self.T = self.n_steps * self.dt
        self.n_knots = config.knot_count()
        self.prop = SplitStepPropagator(problem.grid, problem.depth, self.dt)
        self.interp = self._interpolation_matrix()
        knot_period_s = problem.units.from_lattice_units(self.T / (self.n_knots - 1), "time")
        self.knot_period_s = knot_period_s
        f = sfft.fftfreq(self.n_knots, d=knot_period_s)
        self.stopband = 1.0 - lowpass_window(f, config.filter_cutoff_hz, config.filter_softness_hz)
        self._cache: dict[bytes, tuple] = {}
        self.n_evals = 0

    # control parameterisation -------------------------------------------------
    def _interpolation_matrix(self):
        nk, ns = self.n_knots, self.n_steps
        tk = np.linspace(0.0, self.T, nk)
        ts = (np.arange(ns) + 0.5) * self.dt
        h = tk[1] - tk[0]
        i = np.clip(np.floor(ts / h).astype(int), 0, nk - 2)
        w = ts / h - i
        rows = np.concatenate([np.arange(ns), np.arange(ns)])
        cols = np.concatenate([i, i + 1])
        vals = np.concatenate([1.0 - w, w])
        return sparse.csr_matrix((vals, (rows, cols)), shape=(ns, nk))

    def knots_from_free(self, free) -> np.ndarray:
        u = np.zeros(self.n_knots)
        u[1:-1] = free
        return u

    def step_samples(self, knots) -> np.ndarray:
        return self.interp @ np.asarray(knots, dtype=float)

    def waveform(self, knots) -> ControlWaveform:
        return ControlWaveform(self.step_samples(knots), self.dt)

    # penalties -----------------------------------------------------------------
    def filter_penalty(self, knots) -> tuple[float, np.ndarray]:
        u = np.asarray(knots, dtype=float)
        n = u.size
        U = sfft.fft(u)
        val = float(np.sum(self.stopband * np.abs(U) ** 2) / n)
        grad = 2.0 * sfft.ifft(self.stopband * U).real
        return val, grad

    def amplitude_penalty(self, knots) -> tuple[float, np.ndarray]:
        u = np.asarray(knots, dtype=float)
        excess = np.maximum(0.0, np.abs(u) - self.config.amplitude_cap)
        return float(np.sum(excess**2)), 2.0 * excess * np.sign(u)

    # fidelity ------------------------------------------------------------------
    def fidelity_and_gradient(self, samples) -> tuple[float, np.ndarray]:
        """Fidelity and its derivative with respect to every step sample."""
        prop = self.prop
        g = self.problem.grid
        ns = samples.size
        phased = np.empty((ns, g.n_points), dtype=complex)
        phi = prop.kinetic(self.problem.initial.amplitudes)
        for j in range(ns):
            phi = phi * prop.potential_phase(samples[j])
            phased[j] = phi
            phi = prop.kinetic(phi, half=(j == ns - 1))
        if not np.all(np.isfinite(phi)):
            from .propagator import PropagationDiverged

            raise PropagationDiverged("non-finite amplitudes during propagation")
        chi = self.problem.target.amplitudes
        overlap = np.vdot(chi, phi) * g.dx
        fid = float(abs(overlap) ** 2)

        grad = np.empty(ns)
        s2x, c2x = prop._sin2x, prop._cos2x
        cu, su = np.cos(2 * samples), np.sin(2 * samples)
        # b_j = K_half^dagger lambda_{j+1}; conj of the propagator factors
        b = sfft.ifft(np.conj(prop.half_kinetic) * sfft.fft(chi))
        for j in range(ns - 1, -1, -1):
            q = np.conj(b) * phased[j]
            d_overlap = -1j * self.dt * prop.depth * (cu[j] * np.dot(q, s2x) + su[j] * np.dot(q, c2x)) * g.dx
            grad[j] = 2.0 * np.real(np.conj(overlap) * d_overlap)
            if j:
                b = b * np.conj(prop.potential_phase(samples[j]))
                b = sfft.ifft(np.conj(prop.full_kinetic) * sfft.fft(b))
        return fid, grad

    def fidelity(self, knots) -> float:
        psi, _ = self.prop.run(self.problem.initial.amplitudes, self.step_samples(knots))
        return float(abs(np.vdot(self.problem.target.amplitudes, psi) * self.problem.grid.dx) ** 2)

    def cost(self, knots) -> tuple[float, float]:
        """``(J, F)`` for a full knot vector."""
        F = self.fidelity(knots)
        pf, _ = self.filter_penalty(knots)
        pa, _ = self.amplitude_penalty(knots)
        return (1.0 - F) + self.config.weight_filter * pf + self.config.weight_amp * pa, F

    def cost_and_gradient(self, knots) -> tuple[float, float, np.ndarray]:
        """``(J, F, dJ/dknots)`` for a full knot vector."""
        knots = np.asarray(knots, dtype=float)
        self.n_evals += 1
        F, dF = self.fidelity_and_gradient(self.step_samples(knots))
        pf, gf = self.filter_penalty(knots)
        pa, ga = self.amplitude_penalty(knots)
        cfg = self.config
        J = (1.0 - F) + cfg.weight_filter * pf + cfg.weight_amp * pa
        grad = -(self.interp.T @ dF) + cfg.weight_filter * gf + cfg.weight_amp * ga
        return J, F, grad

    def free_objective(self, free):
        key = free.tobytes()
        J, F, grad = self.cost_and_gradient(self.knots_from_free(free))
        self._cache = {key: (J, F)}
        return J, grad[1:-1]


def cost(waveform_knots, problem: TransferProblem, config: OptimizerConfig) -> tuple[float, float]:
    return GrapeObjective(problem, config).cost(waveform_knots)


def gradient(waveform_knots, problem: TransferProblem, config: OptimizerConfig) -> np.ndarray:
    return GrapeObjective(problem, config).cost_and_gradient(waveform_knots)[2]


# ---------------------------------------------------------------------------
# seeds and optimisation


def make_seed(config: OptimizerConfig, units: UnitSystem | None = None, seed: int | None = None) -> np.ndarray:
    """Band-limited random knot vector with zero end points.

    Built as a random sine series ``sum_m c_m sin(m pi t / T)`` whose mode
    frequencies ``m / 2T`` are weighted by the low-pass window, then scaled so
    the peak equals ``seed_fraction * amplitude_cap``. Deterministic for a given
    seed (``config.rng_seed`` by default).
    """
    rng = np.random.default_rng(config.rng_seed if seed is None else seed)
    n = config.knot_count()
    T_s = config.duration_us * 1e-6
    t = np.linspace(0.0, 1.0, n)
    m_max = max(1, int(np.floor(2 * T_s * (config.filter_cutoff_hz + 0.5 * config.filter_softness_hz))))
    m = np.arange(1, min(m_max, n - 2) + 1)
    weights = lowpass_window(m / (2 * T_s), config.filter_cutoff_hz, config.filter_softness_hz)
    coeffs = rng.standard_normal(m.size) * weights
    u = np.sin(np.pi * np.outer(t, m)) @ coeffs
    u[0] = u[-1] = 0.0
    peak = np.abs(u).max()
    if peak > 0:
        u *= config.seed_fraction * config.amplitude_cap / peak
    return u


@dataclass
class OptimizationResult:
    knots: np.ndarray
    waveform: ControlWaveform
    fidelity: float
    cost: float
    cost_history: list[float]
    fidelity_history: list[float]
    iterations: int
    termination: str
    spectrum: ControlSpectrum
    config: OptimizerConfig
    seed: int
    duration_us: float
    wall_time_s: float = 0.0
    n_evaluations: int = 0
    extras: dict = field(default_factory=dict)

    @property
    def success(self) -> bool:
        return self.fidelity >= self.config.fidelity_goal

    def max_amplitude(self) -> float:
        return float(np.abs(self.knots).max())

    def metadata(self) -> dict:
        return {
            "fidelity": self.fidelity,
            "cost": self.cost,
            "iterations": self.iterations,
            "termination": self.termination,
            "success": self.success,
            "seed": self.seed,
            "duration_us": self.duration_us,
            "n_steps": len(self.waveform),
            "dt": self.waveform.dt,
            "n_knots": int(self.knots.size),
            "max_amplitude": self.max_amplitude(),
            "wall_time_s": self.wall_time_s,
            "n_evaluations": self.n_evaluations,
            "config": dataclasses.asdict(self.config),
            **self.extras,
        }

    def save(self, directory, units: UnitSystem | None = None, prefix: str = "") -> Path:
        """Write waveform, knots, spectrum, cost history and JSON metadata."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        self.waveform.to_csv(d / f"{prefix}waveform.csv", units)
        np.savetxt(d / f"{prefix}knots.csv", self.knots, delimiter=",", header="u", comments="",
                   fmt="%.17g")
        self.spectrum.to_csv(d / f"{prefix}spectrum.csv")
        hist = np.column_stack([np.arange(len(self.cost_history)), self.cost_history, self.fidelity_history])
        np.savetxt(d / f"{prefix}cost_history.csv", hist, delimiter=",", header="iteration,cost,fidelity",
                   comments="", fmt=["%d", "%.15g", "%.15g"])
        (d / f"{prefix}result.json").write_text(json.dumps(self.metadata(), indent=2, default=float))
        return d


class _GoalReached(Exception):
    pass


def optimize(
    problem: TransferProblem,
    config: OptimizerConfig,
    initial_knots=None,
    seed: int | None = None,
) -> OptimizationResult:
    """BFGS descent on the GRAPE cost for a single seed.

    Stops when the fidelity goal is reached, the gradient norm drops below
    ``grad_tolerance``, or after ``max_iters`` iterations. Non-convergence is
    reported through ``termination``, never raised.
    """
    seed = config.rng_seed if seed is None else seed
    obj = GrapeObjective(problem, config)
    knots0 = make_seed(config, seed=seed) if initial_knots is None else np.asarray(initial_knots, float)
    if knots0.size != obj.n_knots:
        raise ValueError(f"expected {obj.n_knots} knots, got {knots0.size}")

    t0 = time.perf_counter()
    J0, F0 = obj.cost(knots0)
    costs, fids = [J0], [F0]
    state = {"x": knots0[1:-1].copy(), "iters": 0}

    def callback(intermediate_result):
        x = intermediate_result.x
        state["iters"] += 1
        state["x"] = x.copy()
        J, F = obj._cache.get(x.tobytes()) or obj.cost(obj.knots_from_free(x))
        costs.append(J)
        fids.append(F)
        if state["iters"] % 50 == 0:
            logger.info("iter %d  J=%.6f  F=%.6f", state["iters"], J, F)
        if F >= config.fidelity_goal:
            raise StopIteration

    termination = "max_iters"
    if F0 >= config.fidelity_goal:
        termination = "fidelity_goal"
        x_final = knots0[1:-1]
    else:
        res = sopt.minimize(
            obj.free_objective, knots0[1:-1], jac=True, method="BFGS", callback=callback,
            options={"maxiter": config.max_iters, "gtol": config.grad_tolerance},
        )
        x_final = res.x if res.x.size else state["x"]
        if fids[-1] >= config.fidelity_goal:
            termination = "fidelity_goal"
            x_final = state["x"]
        elif res.status == 0:
            termination = "grad_tolerance"
        elif res.status == 1:
            termination = "max_iters"
        else:
            termination = "line_search"
    knots = obj.knots_from_free(x_final)
    J, F = obj.cost(knots)
    waveform = obj.waveform(knots)
    # independent forward evolution through the public propagator path
    final, _ = evolve(problem.initial, waveform, problem.depth, problem.grid)
    F_check = abs(final.inner(problem.target)) ** 2
    spec = waveform_spectrum(waveform, problem.units, config)
    return OptimizationResult(
        knots=knots, waveform=waveform, fidelity=float(F_check), cost=float(J),
        cost_history=costs, fidelity_history=fids, iterations=state["iters"],
        termination=termination, spectrum=spec, config=config, seed=seed,
        duration_us=config.duration_us, wall_time_s=time.perf_counter() - t0,
        n_evaluations=obj.n_evals, extras={"objective_fidelity": F, "problem": problem.label},
    )


def _run_seed(args):
    problem, config, seed = args
    return optimize(problem, config, seed=seed)


def best_of_starts(problem: TransferProblem, config: OptimizerConfig, n_starts: int | None = None,
                   jobs: int = 1):
    """Run up to ``n_starts`` seeds, stopping once one reaches the goal.

    Seeds are ``rng_seed, rng_seed + 1, ...``. With ``jobs > 1`` they run in
    batches of ``jobs`` worker processes. The returned run is the lowest seed
    that succeeded, or the highest fidelity if none did, so the choice does not
    depend on ``jobs``.
    """
    n_starts = config.n_starts if n_starts is None else n_starts
    seeds = [config.rng_seed + i for i in range(n_starts)]
    results: list[OptimizationResult] = []
    if jobs <= 1:
        for s in seeds:
            r = optimize(problem, config, seed=s)
            logger.info("T=%.1f us seed %d: F=%.5f (%s)", config.duration_us, r.seed, r.fidelity, r.termination)
            results.append(r)
            if r.success:
                break
    else:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for i in range(0, len(seeds), jobs):
                batch = [(problem, config, s) for s in seeds[i:i + jobs]]
                results.extend(pool.map(_run_seed, batch))
                if any(r.success for r in results):
                    break
    winners = [r for r in results if r.success]
    best = winners[0] if winners else max(results, key=lambda r: r.fidelity)
    return best, results


def time_optimal_search(problem: TransferProblem, config: OptimizerConfig, durations_us, n_starts=None,
                        jobs: int = 1):
    """Shortest duration on an ascending grid at which some seed reaches the goal.

    Returns ``(T_star, results)`` with ``T_star = None`` when no duration
    succeeds; ``results`` maps every searched duration to its list of runs.
    """
    durations = [float(t) for t in durations_us]
    if any(b <= a for a, b in zip(durations, durations[1:])):
        raise ValueError("durations must be strictly ascending")
    results: dict[float, list[OptimizationResult]] = {}
    for T in durations:
        _, runs = best_of_starts(problem, config.replace(duration_us=T), n_starts, jobs)
        results[T] = runs
        if any(r.success for r in runs):
            return T, results
    return None, results

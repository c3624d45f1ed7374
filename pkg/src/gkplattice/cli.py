"""
Command-line front end.

    gkplattice spectrum    -c run.yaml
    gkplattice target      -c run.yaml [--sweep]
    gkplattice optimize    -c run.yaml [--jobs N]
    gkplattice analyze     -c run.yaml [--bundle DIR]
    gkplattice feasibility -c run.yaml [--point POWER_W WAVELENGTH_NM]
    gkplattice defaults

Every command writes into ``<output>/<command>/`` together with
``resolved_config.yaml``, a complete copy of the configuration that reproduces
the run. Exit codes: 0 success (including accepted non-convergence), 2 input
errors, 3 physically infeasible requests.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import analysis, feasibility, gkp, lattice, optimizer
from .config import OUTPUT_ENV, ConfigError, RunConfig, default_config_yaml, load_config, parse_config
from .units import UnitSystem, harmonic_frequency, load_species

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE = 0, 2, 3

log = logging.getLogger("gkplattice")


class InputError(Exception):
    """Bad user input other than schema violations (exit 2)."""


class Infeasible(Exception):
    """Physically impossible request (exit 3)."""


# ---------------------------------------------------------------------------
# helpers


def _resolve_wavelength(cfg: RunConfig) -> float:
    """Lattice wavelength in metres; ``auto`` is the longest-lifetime point at the configured depth."""
    lat = cfg["lattice"]
    if lat["wavelength_nm"] != "auto":
        lam = lat["wavelength_nm"] * 1e-9
        lo, hi = load_species(cfg.species).window
        if not lo < lam < hi:
            log.warning("lattice wavelength %.3f nm lies outside the D2-D1 window", lam * 1e9)
        return lam
    species = load_species(cfg.species)
    depth = lat["depth"]
    if depth <= 0:
        lo, hi = species.window
        return 0.5 * (lo + hi)
    cap = lat["auto_power_cap_W"]
    spec = feasibility.FeasibilitySpec(species, power_range=(min(1e-3, cap), cap))
    try:
        return feasibility.best_lifetime(spec, depth, cap).wavelength
    except ValueError as exc:
        raise Infeasible(f"cannot choose a wavelength automatically: {exc}") from None


def _prepare(args, command: str) -> tuple[RunConfig, Path, UnitSystem]:
    cfg = load_config(args.config)
    lam = _resolve_wavelength(cfg)
    cfg.data["lattice"]["wavelength_nm"] = float(lam * 1e9)
    root = cfg.output_root(getattr(args, "output", None))
    cfg.data["output"] = str(root)
    out = root / command
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved_config.yaml").write_text(cfg.to_yaml())
    return cfg, out, UnitSystem(load_species(cfg.species), lam)


def _write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(data, indent=2, default=_json_default))


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def _grid(cfg: RunConfig) -> lattice.SimGrid:
    lat = cfg["lattice"]
    return lattice.build_grid(lat["periods"], lat["points_per_period"])


def _optimizer_config(cfg: RunConfig) -> optimizer.OptimizerConfig:
    o = dict(cfg["optimizer"])
    o.pop("durations_us")
    return optimizer.OptimizerConfig(rng_seed=cfg["rng_seed"], **o)


def _problem(cfg: RunConfig, units: UnitSystem) -> optimizer.TransferProblem:
    t, lat = cfg["target"], cfg["lattice"]
    if lat["depth"] <= 0:
        raise Infeasible("optimisation needs a positive lattice depth")
    target = f"fock:{t['fock']}" if t["fock"] is not None else f"gkp{t['k']}"
    return optimizer.make_transfer_problem(
        units, lat["depth"], target, zeta=t["zeta_db"], n_levels=t["n_levels"],
        initial_level=t["initial_level"], points_per_period=lat["points_per_period"],
        phase_per_step=lat["phase_per_step"],
    )


# ---------------------------------------------------------------------------
# commands


def cmd_spectrum(args) -> int:
    cfg, out, units = _prepare(args, "spectrum")
    lat = cfg["lattice"]
    depth = lat["depth"]
    summary = {"species": cfg.species, "wavelength_nm": lat["wavelength_nm"], "depth_recoil": depth,
               "boundary": lat["boundary"]}
    if depth <= 0:
        (out / "energies.csv").write_text("n,energy_recoil,bound,central_weight\n")
        summary.update(n_bound=0, message="no bound states: the lattice is flat")
        _write_json(out / "summary.json", summary)
        print(f"depth {depth:g} E_R: no bound states")
        return EXIT_OK
    basis = lattice.eigensolve(_grid(cfg), depth, boundary=lat["boundary"])
    basis.to_csv(out / "energies.csv")
    hw = harmonic_frequency(depth)
    n = np.arange(len(basis))
    harm = -0.5 * depth + hw * (n + 0.5)
    np.savetxt(out / "harmonic_comparison.csv",
               np.column_stack([n, basis.energies, harm, basis.energies - harm]), delimiter=",",
               header="n,energy_recoil,harmonic_recoil,difference", comments="", fmt=["%d", "%.10g", "%.10g", "%.6g"])
    gaps = np.diff(basis.energies[: basis.n_bound])
    summary.update(
        n_bound=basis.n_bound, hbar_omega_recoil=hw,
        trap_frequency_hz=float(units.frequency_hz(hw)),
        first_gap_recoil=float(gaps[0]) if gaps.size else None,
        last_gap_recoil=float(gaps[-1]) if gaps.size else None,
        recoil_energy_J=units.recoil_energy, time_unit_s=units.time_unit,
    )
    _write_json(out / "summary.json", summary)
    print(f"{cfg.species} depth {depth:g} E_R: {basis.n_bound} bound levels, hbar*omega = {hw:.3f} E_R -> {out}")
    return EXIT_OK


def _curve_point(args):
    zeta, fid, k = args
    n, depth = gkp.min_basis_for_squeezing(zeta, fid, k)
    return zeta, n, depth


def cmd_target(args) -> int:
    cfg, out, units = _prepare(args, "target")
    t, lat = cfg["target"], cfg["lattice"]
    if args.sweep:
        sw = t["sweep"]
        zetas = np.round(np.arange(sw["start"], sw["stop"] + 0.5 * sw["step"], sw["step"]), 10)
        work = [(float(z), t["fidelity_target"], t["k"]) for z in zetas]
        try:
            if args.jobs > 1:
                with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                    rows = list(pool.map(_curve_point, work))
            else:
                rows = [_curve_point(w) for w in work]
        except gkp.UnreachableTargetError as exc:
            raise Infeasible(str(exc)) from None
        rows = np.array(rows)
        np.savetxt(out / "squeezing_curve.csv", rows, delimiter=",", header="zeta_db,n_levels,depth_recoil",
                   comments="", fmt=["%.4g", "%d", "%.6g"])
        _write_json(out / "squeezing_curve.json", {
            "k": t["k"], "fidelity_target": t["fidelity_target"],
            "grid": "3 periods x 256 points, hard walls", "depth_step_recoil": 1.0,
            "monotone": bool(np.all(np.diff(rows[:, 1]) >= 0)),
        })
        for z, n, d in rows:
            print(f"{z:6.2f} dB  N={int(n):3d}  U={d:7.1f} E_R")
        return EXIT_OK

    depth = lat["depth"]
    if depth <= 0:
        raise Infeasible("target construction needs a positive lattice depth")
    spec = gkp.GkpSpec(t["k"], t["zeta_db"])
    X = np.linspace(-16.0, 16.0, 2048, endpoint=False)
    try:
        gkp.build_gkp(spec, X).to_csv(out / "gkp_wavefunction.csv")
    except gkp.InsufficientDomainError as exc:
        raise Infeasible(str(exc)) from None
    basis = lattice.eigensolve(_grid(cfg), depth, n_states=t["n_levels"], boundary=lat["boundary"])
    state, fid = gkp.gkp_in_lattice(spec, basis, t["n_levels"])
    c = state.amplitudes * np.sqrt(fid)
    np.savetxt(out / "fock_coefficients.csv",
               np.column_stack([np.arange(c.size), c.real, c.imag, np.abs(c) ** 2]), delimiter=",",
               header="n,re_c,im_c,probability", comments="", fmt=["%d", "%.15g", "%.15g", "%.15g"])
    meta = {
        "k": t["k"], "zeta_db": t["zeta_db"], "sigma": spec.sigma, "delta": spec.delta, "r0": spec.r0,
        "depth_recoil": depth, "n_levels": t["n_levels"], "n_bound": basis.n_bound,
        "reconstruction_fidelity": fid, "fidelity_target": t["fidelity_target"],
        "meets_target": bool(fid >= t["fidelity_target"]),
        "oscillator_length_over_site": float(np.sqrt(2 / harmonic_frequency(depth)) / np.pi),
    }
    _write_json(out / "target.json", meta)
    print(f"GKP{t['k']} {t['zeta_db']:g} dB with {t['n_levels']} levels at {depth:g} E_R: fidelity {fid:.5f}")
    if fid < t["fidelity_target"]:
        raise Infeasible(
            f"reconstruction fidelity {fid:.5f} below target {t['fidelity_target']}: "
            f"increase target.n_levels or lattice.depth"
        )
    return EXIT_OK


def cmd_optimize(args) -> int:
    cfg, out, units = _prepare(args, "optimize")
    problem = _problem(cfg, units)
    ocfg = _optimizer_config(cfg)
    durations = cfg["optimizer"]["durations_us"]
    search = {"problem": problem.label, "runs": []}
    if durations:
        T_star, runs = optimizer.time_optimal_search(problem, ocfg, durations, jobs=args.jobs)
        all_runs = [r for rs in runs.values() for r in rs]
        if T_star is not None:
            best = next(r for r in runs[T_star] if r.success)
        else:
            best = max(all_runs, key=lambda r: r.fidelity)
        search["time_optimal_us"] = T_star
    else:
        best, all_runs = optimizer.best_of_starts(problem, ocfg, jobs=args.jobs)
    search["runs"] = [{"duration_us": r.duration_us, "seed": r.seed, "fidelity": r.fidelity,
                       "termination": r.termination, "iterations": r.iterations} for r in all_runs]
    best.extras["target_levels"] = cfg["target"]["n_levels"]
    best.save(out, units)
    _write_json(out / "search.json", search)
    print(f"{problem.label}: F = {best.fidelity:.5f} at T = {best.duration_us:g} us "
          f"(seed {best.seed}, {best.termination}) -> {out}")
    return EXIT_OK


def _load_bundle(path: Path):
    need = ["result.json", "knots.csv", "resolved_config.yaml"]
    missing = [n for n in need if not (path / n).is_file()]
    if missing:
        raise InputError(f"result bundle {path} is missing {', '.join(missing)}")
    result = json.loads((path / "result.json").read_text())
    bcfg = parse_config((path / "resolved_config.yaml").read_text(), path / "resolved_config.yaml")
    knots = np.loadtxt(path / "knots.csv", delimiter=",", skiprows=1, ndmin=1)
    return result, bcfg, knots


def cmd_analyze(args) -> int:
    cfg = load_config(args.config)
    bundle = Path(args.bundle or cfg["analysis"]["bundle"] or cfg.output_root(args.output) / "optimize")
    result, bcfg, knots = _load_bundle(bundle)
    cfg, out, _ = _prepare(args, "analyze")
    units = UnitSystem(load_species(bcfg.species), bcfg["lattice"]["wavelength_nm"] * 1e-9)
    problem = _problem(bcfg, units)
    ocfg = optimizer.OptimizerConfig(**result["config"]).replace(duration_us=result["duration_us"])
    waveform = optimizer.GrapeObjective(problem, ocfg).waveform(knots)
    from .propagator import evolve

    achieved, _ = evolve(problem.initial, waveform, problem.depth, problem.grid)
    F = analysis.fidelity(problem.target, achieved)
    an = cfg["analysis"]
    window = tuple(an["wigner_window"]) if an["wigner_window"] else None
    report = {"bundle": str(bundle), "fidelity": F, "stored_fidelity": result["fidelity"],
              "fidelity_difference": F - result["fidelity"], "duration_us": result["duration_us"],
              "wigner_window": list(window) if window else "full grid"}
    for name, st in (("target", problem.target), ("achieved", achieved)):
        try:
            wm = analysis.wigner(st, problem.depth, window, an["wigner_tolerance"])
        except analysis.InsufficientWindowError as exc:
            raise InputError(f"{name} state: {exc}; enlarge analysis.wigner_window") from None
        wm.to_csv(out / f"wigner_{name}.csv", out / f"wigner_{name}.json", state=name)
        report[f"wigner_{name}"] = {"normalization": wm.normalization(), "min": float(wm.W.min()),
                                     "negative_volume": wm.negative_volume()}
    scales = sorted(set(an["depth_scales"]) | {1.0})
    curve = analysis.depth_robustness(waveform, problem, scales)
    curve.to_csv(out / "robustness.csv")
    report["robustness"] = {"scales": curve.scales, "fidelities": curve.fidelities}
    try:
        coeffs, r2 = curve.quadratic_fit()
        report["robustness"].update(quadratic_coefficients=coeffs, quadratic_r2=r2)
    except ValueError:
        pass
    _write_json(out / "report.json", report)
    print(f"F = {F:.6f} (stored {result['fidelity']:.6f}); Wigner maps and robustness curve -> {out}")
    return EXIT_OK


def _feas_spec(cfg: RunConfig, name: str) -> feasibility.FeasibilitySpec:
    f = cfg["feasibility"]
    lam_range = None
    if f["wavelength_min_nm"] is not None or f["wavelength_max_nm"] is not None:
        lo, hi = load_species(name).window
        a = f["wavelength_min_nm"] * 1e-9 if f["wavelength_min_nm"] is not None else lo + 2e-3 * (hi - lo)
        b = f["wavelength_max_nm"] * 1e-9 if f["wavelength_max_nm"] is not None else hi - 2e-3 * (hi - lo)
        lam_range = (a, b)
    try:
        return feasibility.FeasibilitySpec(load_species(name), f["waist_um"] * 1e-6,
                                           (f["power_min_W"], f["power_max_W"]), lam_range, f["retro_reflected"])
    except feasibility.OutOfWindowError as exc:
        raise Infeasible(f"{name}: {exc}") from None


def cmd_feasibility(args) -> int:
    cfg = load_config(args.config)
    f = cfg["feasibility"]
    depth = f["depth"] or cfg["lattice"]["depth"]
    if args.point:
        power, lam_nm = args.point
        spec = feasibility.FeasibilitySpec(load_species(cfg.species), f["waist_um"] * 1e-6,
                                           retro_reflected=f["retro_reflected"])
        try:
            u = feasibility.dipole_depth(power, lam_nm * 1e-9, spec)
            tau = feasibility.scattering_lifetime(power, lam_nm * 1e-9, spec)
        except feasibility.OutOfWindowError as exc:
            raise Infeasible(str(exc)) from None
        print(f"{cfg.species} P={power:g} W lambda={lam_nm:g} nm: depth={float(u):.1f} E_R "
              f"lifetime={float(tau) * 1e3:.3f} ms")
        return EXIT_OK
    specs = [_feas_spec(cfg, name) for name in f["species"]]
    cfg, out, _ = _prepare(args, "feasibility")
    summary = {"depth_recoil": depth, "max_power_W": f["max_power_W"], "species": {}}
    best = {}
    for spec in specs:
        name = spec.species.name
        fmap = feasibility.feasibility_map(spec, f["n_power"], f["n_wavelength"], depth_levels=(depth,))
        fmap.to_csv(out / f"map_{name}.csv", out / f"map_{name}.json")
        try:
            pt = feasibility.best_lifetime(spec, depth, f["max_power_W"])
            best[name] = pt
            summary["species"][name] = pt.as_dict()
            print(f"{name}: best lifetime at {depth:g} E_R = {pt.lifetime * 1e3:.2f} ms "
                  f"(lambda {pt.wavelength * 1e9:.2f} nm, P {pt.power * 1e3:.1f} mW)")
        except ValueError as exc:
            summary["species"][name] = {"unreachable": str(exc)}
            print(f"{name}: {exc}")
    names = list(best)
    if len(names) >= 2:
        ref = names[0]
        summary["lifetime_ratios"] = {f"{n}/{ref}": best[n].lifetime / best[ref].lifetime for n in names[1:]}
        for k, v in summary["lifetime_ratios"].items():
            print(f"lifetime ratio {k} = {v:.2f}")
    _write_json(out / "summary.json", summary)
    return EXIT_OK


def cmd_defaults(args) -> int:
    sys.stdout.write(default_config_yaml())
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gkplattice", description=__doc__.split("\n\n")[0].strip(),
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (-vv for debug)")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("-c", "--config", help="YAML run configuration (defaults if omitted)")
        sp.add_argument("-o", "--output", help=f"output root (overrides config and ${OUTPUT_ENV})")
        sp.add_argument("-j", "--jobs", type=int, default=1, help="worker processes")
        sp.set_defaults(func=func)
        return sp

    add("spectrum", cmd_spectrum, "vibrational levels of one lattice site")
    add("target", cmd_target, "GKP target and its Fock reconstruction").add_argument(
        "--sweep", action="store_true", help="basis size and depth versus squeezing")
    add("optimize", cmd_optimize, "GRAPE optimisation of the shaking waveform")
    add("analyze", cmd_analyze, "Wigner maps, fidelity report and depth robustness").add_argument(
        "--bundle", help="optimisation result directory (default <output>/optimize)")
    add("feasibility", cmd_feasibility, "depth and lifetime maps between the D lines").add_argument(
        "--point", nargs=2, type=float, metavar=("POWER_W", "WAVELENGTH_NM"), help="single-point query")
    d = sub.add_parser("defaults", help="print a complete default configuration")
    d.set_defaults(func=cmd_defaults)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be at least 1")
    try:
        return args.func(args)
    except ConfigError as exc:
        for line in exc.errors:
            print(f"config error: {line}", file=sys.stderr)
        return EXIT_INPUT
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Infeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())

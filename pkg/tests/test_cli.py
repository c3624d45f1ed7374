import json

import numpy as np
import pytest
import yaml

from gkplattice.cli import EXIT_INFEASIBLE, EXIT_INPUT, EXIT_OK, main
from gkplattice.config import OUTPUT_ENV, ConfigError, default_config_yaml, parse_config


def write_cfg(tmp_path, text, name="run.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


TRIVIAL_OPT = """
species: Rb87
rng_seed: 3
lattice: {wavelength_nm: 785.0, depth: 1500, points_per_period: 128}
target: {fock: 0, n_levels: 4}
optimizer: {duration_us: 2.0, n_samples: 8, max_iters: 5, n_starts: 2}
analysis: {depth_scales: [0.998, 0.999, 1.0, 1.001, 1.002]}
"""


# configuration ----------------------------------------------------------------


def test_defaults_roundtrip():
    cfg = parse_config(default_config_yaml())
    assert cfg["lattice"]["depth"] == 1500.0
    assert cfg["target"]["n_levels"] == 24
    assert cfg.species == "Rb87"


def test_schema_errors_carry_line_numbers():
    text = "species: Rb87\nlattice:\n  depth: -5\n  bogus: 1\ntarget:\n  k: 2\n"
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    msgs = exc.value.errors
    assert any("line 3" in m and "lattice.depth" in m for m in msgs)
    assert any("line 4" in m and "unknown key 'lattice.bogus'" in m for m in msgs)
    assert any("line 6" in m and "target.k" in m for m in msgs)


def test_species_alias_and_yaml_syntax_error():
    assert parse_config("species: Cs").species == "Cs133"
    with pytest.raises(ConfigError, match="YAML syntax"):
        parse_config("lattice: [1, 2\n")


def test_output_root_precedence(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
    cfg = parse_config("")
    assert cfg.output_root() == tmp_path / "env"
    assert cfg.output_root(str(tmp_path / "cli")) == tmp_path / "cli"
    cfg2 = parse_config(f"output: {tmp_path / 'cfg'}")
    assert cfg2.output_root() == tmp_path / "cfg"


# spectrum ---------------------------------------------------------------------


def test_spectrum_writes_energies_and_resolved_config(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "lattice: {wavelength_nm: 785.0}\n")
    assert main(["spectrum", "-c", cfg, "-o", str(tmp_path / "out")]) == EXIT_OK
    d = tmp_path / "out" / "spectrum"
    rows = np.loadtxt(d / "energies.csv", delimiter=",", skiprows=1)
    summary = json.loads((d / "summary.json").read_text())
    assert summary["n_bound"] >= 24
    assert rows.shape[0] >= 24
    resolved = yaml.safe_load((d / "resolved_config.yaml").read_text())
    assert resolved["lattice"]["wavelength_nm"] == 785.0
    # the echo is a complete, re-runnable configuration
    assert parse_config((d / "resolved_config.yaml").read_text()).data == resolved
    assert "bound levels" in capsys.readouterr().out


def test_spectrum_zero_depth_is_graceful(tmp_path):
    cfg = write_cfg(tmp_path, "lattice: {depth: 0.0}\n")
    assert main(["spectrum", "-c", cfg, "-o", str(tmp_path)]) == EXIT_OK
    summary = json.loads((tmp_path / "spectrum" / "summary.json").read_text())
    assert summary["n_bound"] == 0
    assert "no bound states" in summary["message"]


def test_malformed_config_exits_2_without_output(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "lattice:\n  depth: deep\n")
    out = tmp_path / "out"
    assert main(["spectrum", "-c", cfg, "-o", str(out)]) == EXIT_INPUT
    assert not out.exists()
    err = capsys.readouterr().err
    assert "line 2" in err and "lattice.depth" in err


def test_missing_config_file_exits_2(tmp_path):
    assert main(["spectrum", "-c", str(tmp_path / "nope.yaml"), "-o", str(tmp_path / "o")]) == EXIT_INPUT


def test_env_var_sets_output_root(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "envroot"))
    cfg = write_cfg(tmp_path, "lattice: {wavelength_nm: 785.0}\n")
    assert main(["spectrum", "-c", cfg]) == EXIT_OK
    assert (tmp_path / "envroot" / "spectrum" / "energies.csv").is_file()


# target -----------------------------------------------------------------------


def test_target_reconstruction(tmp_path):
    cfg = write_cfg(tmp_path, "lattice: {wavelength_nm: 785.0}\n")
    assert main(["target", "-c", cfg, "-o", str(tmp_path)]) == EXIT_OK
    meta = json.loads((tmp_path / "target" / "target.json").read_text())
    assert meta["reconstruction_fidelity"] >= 0.99
    c = np.loadtxt(tmp_path / "target" / "fock_coefficients.csv", delimiter=",", skiprows=1)
    assert c.shape == (24, 4)
    assert c[:, 3].sum() == pytest.approx(meta["reconstruction_fidelity"], rel=1e-10)


def test_target_k2_rejected(tmp_path):
    cfg = write_cfg(tmp_path, "target: {k: 2}\n")
    assert main(["target", "-c", cfg, "-o", str(tmp_path / "o")]) == EXIT_INPUT


def test_target_unreachable_exits_3(tmp_path):
    cfg = write_cfg(tmp_path, "lattice: {wavelength_nm: 785.0}\ntarget: {n_levels: 6}\n")
    assert main(["target", "-c", cfg, "-o", str(tmp_path)]) == EXIT_INFEASIBLE


# optimize and analyze -----------------------------------------------------------


def test_optimize_trivial_is_deterministic_and_analyzable(tmp_path):
    cfg = write_cfg(tmp_path, TRIVIAL_OPT)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["optimize", "-c", cfg, "-o", str(a)]) == EXIT_OK
    assert main(["optimize", "-c", cfg, "-o", str(b)]) == EXIT_OK
    res = json.loads((a / "optimize" / "result.json").read_text())
    assert res["success"] and res["termination"] == "fidelity_goal"
    assert res["seed"] == 3
    assert (a / "optimize" / "waveform.csv").read_bytes() == (b / "optimize" / "waveform.csv").read_bytes()
    for name in ("spectrum.csv", "cost_history.csv", "knots.csv", "search.json"):
        assert (a / "optimize" / name).is_file()

    assert main(["analyze", "-c", cfg, "-o", str(a)]) == EXIT_OK
    report = json.loads((a / "analyze" / "report.json").read_text())
    assert abs(report["fidelity_difference"]) < 1e-10
    for name in ("target", "achieved"):
        hdr = json.loads((a / "analyze" / f"wigner_{name}.json").read_text())
        assert hdr["normalization"] == pytest.approx(1.0, abs=1e-6)
    rob = np.loadtxt(a / "analyze" / "robustness.csv", delimiter=",", skiprows=1)
    row = rob[np.isclose(rob[:, 0], 1.0)]
    assert row[0, 1] == pytest.approx(res["fidelity"], abs=1e-10)


def test_optimize_nonconvergence_exits_0(tmp_path):
    text = TRIVIAL_OPT.replace("fock: 0", "fock: 1").replace("max_iters: 5", "max_iters: 2").replace(
        "n_starts: 2", "n_starts: 1")
    cfg = write_cfg(tmp_path, text)
    assert main(["optimize", "-c", cfg, "-o", str(tmp_path)]) == EXIT_OK
    res = json.loads((tmp_path / "optimize" / "result.json").read_text())
    assert not res["success"]
    assert res["termination"] in {"max_iters", "grad_tolerance", "line_search"}


def test_optimize_time_search(tmp_path):
    cfg = write_cfg(tmp_path, TRIVIAL_OPT.replace("n_starts: 2", "n_starts: 2, durations_us: [1.0, 2.0]"))
    assert main(["optimize", "-c", cfg, "-o", str(tmp_path)]) == EXIT_OK
    search = json.loads((tmp_path / "optimize" / "search.json").read_text())
    assert search["time_optimal_us"] == 1.0


def test_optimize_zero_depth_exits_3(tmp_path):
    cfg = write_cfg(tmp_path, "lattice: {depth: 0.0}\n")
    assert main(["optimize", "-c", cfg, "-o", str(tmp_path)]) == EXIT_INFEASIBLE


def test_analyze_missing_bundle_exits_2(tmp_path, capsys):
    assert main(["analyze", "--bundle", str(tmp_path / "none"), "-o", str(tmp_path / "o")]) == EXIT_INPUT
    assert "missing" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


# feasibility --------------------------------------------------------------------


def test_feasibility_dual_species(tmp_path):
    cfg = write_cfg(tmp_path, "feasibility: {n_power: 11, n_wavelength: 21}\n")
    assert main(["feasibility", "-c", cfg, "-o", str(tmp_path)]) == EXIT_OK
    d = tmp_path / "feasibility"
    assert (d / "map_Rb87.csv").is_file() and (d / "map_Cs133.csv").is_file()
    summary = json.loads((d / "summary.json").read_text())
    assert summary["lifetime_ratios"]["Cs133/Rb87"] > 1


def test_feasibility_point_query(tmp_path, capsys):
    assert main(["feasibility", "--point", "0.5", "785", "-o", str(tmp_path)]) == EXIT_OK
    out = capsys.readouterr().out.strip().splitlines()
    assert len(out) == 1 and "depth=" in out[0] and "lifetime=" in out[0]


def test_feasibility_point_outside_window_exits_3(tmp_path):
    assert main(["feasibility", "--point", "0.5", "1064", "-o", str(tmp_path)]) == EXIT_INFEASIBLE


def test_feasibility_single_power_grid(tmp_path):
    cfg = write_cfg(tmp_path, "feasibility: {species: Rb87, power_min_W: 0.5, power_max_W: 0.5, n_power: 1,"
                              " n_wavelength: 5}\n")
    assert main(["feasibility", "-c", cfg, "-o", str(tmp_path)]) == EXIT_OK
    rows = np.loadtxt(tmp_path / "feasibility" / "map_Rb87.csv", delimiter=",", skiprows=1)
    assert rows.shape == (5, 4)


def test_feasibility_range_outside_window_exits_3(tmp_path):
    cfg = write_cfg(tmp_path, "feasibility: {species: Rb87, wavelength_min_nm: 770.0}\n")
    assert main(["feasibility", "-c", cfg, "-o", str(tmp_path / "o")]) == EXIT_INFEASIBLE


def test_defaults_command(capsys):
    assert main(["defaults"]) == EXIT_OK
    assert parse_config(capsys.readouterr().out).data["lattice"]["depth"] == 1500.0

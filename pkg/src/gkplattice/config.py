"""
Run configuration: YAML loading, schema validation with line numbers, and
resolution of defaults into a fully explicit, re-runnable document.
"""

from __future__ import annotations

import copy
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import yaml

from .units import available_species

OUTPUT_ENV = "GKPLATTICE_OUTPUT"
SPECIES_ALIASES = {"Rb": "Rb87", "Cs": "Cs133", "Na": "Na23", "K": "K39"}


class ConfigError(ValueError):
    """Schema violations; ``errors`` holds one diagnostic per problem."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


@dataclass(frozen=True)
class Field:
    kind: str  # number, int, str, bool, numbers, strs
    default: Any = None
    check: Callable[[Any], str | None] | None = None
    nullable: bool = False
    doc: str = ""


def _pos(v):
    return None if v > 0 else "must be positive"


def _nonneg(v):
    return None if v >= 0 else "must be non-negative"


def _species(v):
    names = available_species()
    return None if v in names or v in SPECIES_ALIASES else f"unknown species {v!r} (known: {', '.join(names)})"


def _pow2(v):
    return None if v >= 64 and (v & (v - 1)) == 0 else "must be a power of two >= 64"


def _odd(v):
    return None if v >= 1 and v % 2 == 1 else "must be an odd positive integer"


def _one_of(*opts):
    def check(v):
        return None if v in opts else f"must be one of {', '.join(map(str, opts))}"

    return check


def _unit_interval(v):
    return None if 0 < v < 1 else "must lie in (0, 1)"


def _wavelength(v):
    if v == "auto":
        return None
    if isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0:
        return None
    return "must be a positive number (nm) or 'auto'"


def _window(v):
    return None if len(v) == 2 and all(x > 0 for x in v) else "must be two positive numbers [x_max, p_max]"


def _species_list(v):
    for s in v:
        msg = _species(s)
        if msg:
            return msg
    return None if v else "must name at least one species"


SCHEMA: dict[str, Any] = {
    "species": Field("str", "Rb87", _species, doc="atom species"),
    "rng_seed": Field("int", 0, _nonneg),
    "output": Field("str", None, nullable=True, doc="output root directory"),
    "lattice": {
        "wavelength_nm": Field("wavelength", "auto", _wavelength,
                               doc="lattice wavelength; 'auto' picks the longest-lifetime point at the depth"),
        "depth": Field("number", 1500.0, _nonneg, doc="peak-to-peak depth in recoil energies"),
        "periods": Field("int", 1, _odd),
        "points_per_period": Field("int", 512, _pow2),
        "boundary": Field("str", "periodic", _one_of("periodic", "hardwall")),
        "phase_per_step": Field("number", 0.05, _pos, doc="hbar*omega*dt of the propagation step"),
        "auto_power_cap_W": Field("number", 1.0, _pos),
    },
    "target": {
        "k": Field("int", 0, _one_of(0, 1)),
        "zeta_db": Field("number", 10.0, _pos),
        "n_levels": Field("int", 24, _pos),
        "fidelity_target": Field("number", 0.99, _unit_interval),
        "fock": Field("int", None, _nonneg, nullable=True, doc="transfer to this vibrational level instead"),
        "initial_level": Field("int", 0, _nonneg),
        "sweep": {
            "start": Field("number", 2.0, _pos),
            "stop": Field("number", 12.0, _pos),
            "step": Field("number", 0.5, _pos),
        },
    },
    "optimizer": {
        "duration_us": Field("number", 141.0, _pos),
        "durations_us": Field("numbers", None, nullable=True, doc="ascending grid for a time-optimal search"),
        "n_samples": Field("int", None, lambda v: None if v >= 3 else "must be >= 3", nullable=True),
        "sample_period_us": Field("number", 0.5, _pos),
        "filter_cutoff_hz": Field("number", 0.5e6, _pos),
        "filter_softness_hz": Field("number", 0.2e6, _nonneg),
        "amplitude_cap": Field("number", 1.5707963267948966, _pos),
        "weight_filter": Field("number", 1e2, _nonneg),
        "weight_amp": Field("number", 1e3, _nonneg),
        "max_iters": Field("int", 2000, _pos),
        "grad_tolerance": Field("number", 1e-7, _pos),
        "fidelity_goal": Field("number", 0.99, _unit_interval),
        "seed_fraction": Field("number", 0.02, _pos),
        "n_starts": Field("int", 8, _pos),
    },
    "analysis": {
        "bundle": Field("str", None, nullable=True, doc="optimisation result directory"),
        "wigner_window": Field("numbers", None, _window, nullable=True,
                               doc="[x_max, p_max] crop; null keeps the full simulation grid"),
        "wigner_tolerance": Field("number", 1e-6, _pos),
        "depth_scales": Field("numbers", [0.99, 0.995, 0.998, 0.999, 0.9995, 1.0,
                                          1.0005, 1.001, 1.002, 1.005, 1.01],
                              lambda v: None if v and all(x > 0 for x in v) else "must be positive numbers"),
    },
    "feasibility": {
        "species": Field("strs", ["Rb87", "Cs133"], _species_list),
        "waist_um": Field("number", 150.0, _pos),
        "power_min_W": Field("number", 1e-3, _pos),
        "power_max_W": Field("number", 1.0, _pos),
        "wavelength_min_nm": Field("number", None, _pos, nullable=True),
        "wavelength_max_nm": Field("number", None, _pos, nullable=True),
        "n_power": Field("int", 101, _pos),
        "n_wavelength": Field("int", 201, _pos),
        "depth": Field("number", None, _pos, nullable=True, doc="defaults to lattice.depth"),
        "max_power_W": Field("number", 1.0, _pos),
        "retro_reflected": Field("bool", True),
    },
}


def _line_map(text: str) -> dict[tuple[str, ...], int]:
    """1-based line of every mapping key in the document."""
    lines: dict[tuple[str, ...], int] = {}
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return lines

    def walk(node, path):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                key = path + (str(k.value),)
                lines[key] = k.start_mark.line + 1
                walk(v, key)

    walk(root, ())
    return lines


def _coerce(f: Field, value, where: str) -> tuple[Any, str | None]:
    if value is None:
        return None, None if f.nullable else f"{where}: must not be null"
    kind = f.kind
    if kind == "number":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return value, f"{where}: expected a number, got {value!r}"
        value = float(value)
    elif kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            return value, f"{where}: expected an integer, got {value!r}"
    elif kind == "str":
        if not isinstance(value, str):
            return value, f"{where}: expected a string, got {value!r}"
    elif kind == "bool":
        if not isinstance(value, bool):
            return value, f"{where}: expected true or false, got {value!r}"
    elif kind == "numbers":
        if not isinstance(value, list) or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value):
            return value, f"{where}: expected a list of numbers, got {value!r}"
        value = [float(v) for v in value]
    elif kind == "strs":
        if isinstance(value, str):
            value = [value]
        if not isinstance(value, list) or any(not isinstance(v, str) for v in value):
            return value, f"{where}: expected a list of strings, got {value!r}"
    elif kind == "wavelength":
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            value = float(value)
    if f.check is not None:
        msg = f.check(value)
        if msg:
            return value, f"{where}: {msg}"
    return value, None


def _validate(raw: dict, schema: dict, lines, path=()) -> tuple[dict, list[str]]:
    out, errors = {}, []

    def loc(p):
        ln = lines.get(p)
        return f"line {ln}: " if ln else ""

    for key, value in raw.items():
        p = path + (str(key),)
        if key not in schema:
            errors.append(f"{loc(p)}unknown key '{'.'.join(p)}'")
            continue
        spec = schema[key]
        if isinstance(spec, dict):
            if value is None:
                continue
            if not isinstance(value, dict):
                errors.append(f"{loc(p)}'{'.'.join(p)}' must be a mapping")
                continue
            sub, errs = _validate(value, spec, lines, p)
            out[key] = sub
            errors += errs
        else:
            v, msg = _coerce(spec, value, f"{loc(p)}{'.'.join(p)}")
            if msg:
                errors.append(msg)
            out[key] = v
    return out, errors


def _fill_defaults(data: dict, schema: dict) -> dict:
    full = {}
    for key, spec in schema.items():
        if isinstance(spec, dict):
            full[key] = _fill_defaults(data.get(key, {}), spec)
        else:
            full[key] = copy.deepcopy(data[key]) if key in data else copy.deepcopy(spec.default)
    return full


@dataclass
class RunConfig:
    """Validated configuration with every default filled in."""

    data: dict
    source: Path | None = None
    resolved: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.data[key]

    @property
    def species(self) -> str:
        s = self.data["species"]
        return SPECIES_ALIASES.get(s, s)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.data, sort_keys=False)

    def output_root(self, override: str | None = None) -> Path:
        root = override or self.data.get("output") or os.environ.get(OUTPUT_ENV) or "runs"
        return Path(root)


def parse_config(text: str, source: Path | None = None) -> RunConfig:
    """Validate YAML text; raises :class:`ConfigError` listing every problem."""
    name = str(source) if source else "<config>"
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}: " if mark is not None else ""
        raise ConfigError([f"{name}: {where}YAML syntax error: {getattr(exc, 'problem', exc)}"]) from None
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError([f"{name}: top level must be a mapping"])
    data, errors = _validate(raw, SCHEMA, _line_map(text))
    full = _fill_defaults(data, SCHEMA)
    sw = full["target"]["sweep"]
    if not errors and sw["stop"] < sw["start"]:
        errors.append("target.sweep: stop must not be below start")
    fz = full["feasibility"]
    if not errors and fz["power_max_W"] < fz["power_min_W"]:
        errors.append("feasibility: power_max_W must not be below power_min_W")
    durs = full["optimizer"]["durations_us"]
    if not errors and durs is not None and any(b <= a for a, b in zip(durs, durs[1:])):
        errors.append("optimizer.durations_us: must be strictly ascending")
    if errors:
        raise ConfigError([f"{name}: {e}" for e in errors])
    return RunConfig(full, source)


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return parse_config("")
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError([f"{p}: cannot read config ({exc.strerror})"]) from None
    return parse_config(text, p)


def default_config_yaml() -> str:
    """A complete configuration document with all defaults."""
    return yaml.safe_dump(_fill_defaults({}, SCHEMA), sort_keys=False)

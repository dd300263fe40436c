"""
Delta-system transducer simulator -- Configuration Module

Centralizes every run parameter.  Defaults live in the dataclasses below;
a YAML or JSON file is overlaid on top, then ``--override key=value``
pairs from the command line.  Every layer goes through the same strict
coercion and validation: unknown keys are rejected with the closest
valid key as a suggestion, and validation errors name section.field and
its unit.

File units: frequencies, couplings, linewidths, cavity rates and
detunings in Hz (i.e. value/2pi); lifetimes in s; temperature in K;
microwave power in dBm; optical power in W.  Conversion to the rad/s
used internally happens once, in the ``RunConfig`` builder methods.

Usage:
    from src.config import get_config, load_config
    cfg = get_config()                      # bundled paper-2017 preset
    cfg = load_config("my_run.yaml")        # strict load of a file
    cfg = apply_overrides(cfg, ["drive.p_mw_dbm=-19.5"])
    atom = cfg.atom_params()                # AtomParams in rad/s units
"""

from __future__ import annotations

import copy
import difflib
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional

import yaml

from .models import (
    TWO_PI,
    AtomParams,
    CavityParams,
    ConfigError,
    DriveInputs,
    InhomogeneousSpec,
    LineShape,
    Quadrature,
    SolverNumerics,
    TransducerSystem,
)

# ---------------------------------------------------------------------------
# Path constants -- everything relative to the project root
# ---------------------------------------------------------------------------
_THIS_DIR = Path(__file__).resolve().parent          # src/
PROJECT_ROOT = _THIS_DIR.parent
DEFAULT_CONFIG_PATH = PROJECT_ROOT / "config.yaml"

# Named presets accepted wherever a config path is.
PRESETS: dict[str, Path] = {
    "paper-2017": DEFAULT_CONFIG_PATH,
}


def _param(default: Any, unit: str = "", check: Optional[str] = None) -> Any:
    """Dataclass field carrying its unit and validation rule as metadata."""
    return field(default=default, metadata={"unit": unit, "check": check})


# ===================================================================
# 1. Physics
# ===================================================================

@dataclass
class PhysicsConfig:
    """Single-ion parameters and ensemble size."""
    f_mu: float = _param(5.186e9, "Hz", "positive")
    f_opt: float = _param(195113.30e9, "Hz", "positive")
    t1_spin: float = _param(1e-3, "s", "positive")
    t2_spin: float = _param(1e-6, "s", "positive")
    t2_opt: float = _param(1e-6, "s", "positive")
    t1_opt: float = _param(11e-3, "s", "positive")
    branching_31: float = _param(0.5, "1", "fraction")
    g_mu: float = _param(0.16, "Hz", "non_negative")
    g_s: float = _param(6.0, "Hz", "non_negative")
    g_p: float = _param(3.5, "Hz", "non_negative")
    temperature: float = _param(4.6, "K", "non_negative")
    n_eff: float = _param(8.0e15, "1", "positive")
    thermal_spin_bath: bool = _param(True)


# ===================================================================
# 2. Inhomogeneous broadening
# ===================================================================

@dataclass
class InhomogeneityConfig:
    """Line widths (FWHM) and shape of both inhomogeneous lines."""
    fwhm_opt: float = _param(340e6, "Hz", "positive")
    fwhm_spin: float = _param(50e6, "Hz", "positive")
    lineshape: str = _param(LineShape.GAUSSIAN.value, "", "lineshape")


# ===================================================================
# 3. Cavities
# ===================================================================

@dataclass
class CavityConfig:
    """One resonator.  kappa values are energy decay rates / 2pi."""
    kappa1: float = _param(0.0, "Hz", "non_negative")
    kappa2: float = _param(0.0, "Hz", "non_negative")
    kappai: float = _param(0.0, "Hz", "non_negative")
    detuning: float = _param(0.0, "Hz", "finite")


def _microwave_cavity_defaults() -> CavityConfig:
    return CavityConfig(kappa1=75e3, kappa2=55e3, kappai=717e3)


def _optical_cavity_defaults() -> CavityConfig:
    return CavityConfig(kappa1=8.0e6, kappa2=0.0, kappai=1.7e6)


# ===================================================================
# 4. Drives
# ===================================================================

@dataclass
class DriveConfig:
    """Operating point: drive powers, frequencies and detunings from line centre."""
    p_mw_dbm: float = _param(-9.5, "dBm", "dbm")
    p_opt: float = _param(6.48e-3, "W", "non_negative")
    f_mw: float = _param(5.186e9, "Hz", "positive")
    f_opt: float = _param(195113.30e9, "Hz", "positive")
    detuning_o: float = _param(0.0, "Hz", "finite")
    detuning_mu: float = _param(0.0, "Hz", "finite")


# ===================================================================
# 5. Numerics
# ===================================================================

@dataclass
class NumericsConfig:
    """Quadrature grid and fixed-point iteration controls."""
    n_opt: int = _param(201, "nodes", "grid_count")
    n_spin: int = _param(101, "nodes", "grid_count")
    span_opt: float = _param(3.0, "FWHM", "positive")
    span_spin: float = _param(3.0, "FWHM", "positive")
    quadrature: str = _param(Quadrature.UNIFORM.value, "", "quadrature")
    resolve_width: float = _param(0.16e6, "Hz", "positive")
    damping: float = _param(0.5, "1", "damping")
    tol: float = _param(1e-10, "1", "positive")
    max_iter: int = _param(10_000, "iterations", "positive")
    loaded_update: bool = _param(True)
    self_consistent_pump: bool = _param(False)
    divergence_limit: float = _param(1e12, "1", "positive")
    check_invariants: bool = _param(True)


# ===================================================================
# 6. Scenario parameters
# ===================================================================

@dataclass
class ScenarioConfig:
    """Axis ranges and operating points of the canned experiments."""
    # detuning map (sweep2d)
    opt_detuning_start: float = _param(-500e6, "Hz", "finite")
    opt_detuning_stop: float = _param(500e6, "Hz", "finite")
    opt_detuning_count: int = _param(41, "points", "axis_count")
    mw_detuning_start: float = _param(-75e6, "Hz", "finite")
    mw_detuning_stop: float = _param(75e6, "Hz", "finite")
    mw_detuning_count: int = _param(41, "points", "axis_count")
    # microwave power sweep (mw-sweep)
    mw_power_start: float = _param(-60.0, "dBm", "finite")
    mw_power_stop: float = _param(-5.0, "dBm", "finite")
    mw_power_count: int = _param(23, "points", "axis_count")
    # optical power sweep (opt-sweep)
    opt_power_start: float = _param(0.0, "W", "non_negative")
    opt_power_stop: float = _param(12e-3, "W", "non_negative")
    opt_power_count: int = _param(7, "points", "axis_count")
    opt_sweep_mw_dbm: float = _param(-44.7, "dBm", "finite")
    # predictions (predict)
    low_power_dbm: float = _param(-60.0, "dBm", "finite")
    low_power_check_dbm: float = _param(-70.0, "dBm", "finite")
    cold_temperature: float = _param(0.05, "K", "non_negative")
    # population map (popmap)
    popmap_mw_dbm: float = _param(-16.0, "dBm", "finite")


# ===================================================================
# 7. Output
# ===================================================================

@dataclass
class OutputConfig:
    """Where result files are written when --out is not given."""
    output_dir: str = _param("output")

    def resolve(self, name: str) -> Path:
        base = Path(self.output_dir)
        if not base.is_absolute():
            base = PROJECT_ROOT / base
        return base / name


# ===================================================================
# Master Config
# ===================================================================

@dataclass
class RunConfig:
    """Top-level configuration container for one simulator run."""
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    inhomogeneity: InhomogeneityConfig = field(default_factory=InhomogeneityConfig)
    microwave_cavity: CavityConfig = field(default_factory=_microwave_cavity_defaults)
    optical_cavity: CavityConfig = field(default_factory=_optical_cavity_defaults)
    drive: DriveConfig = field(default_factory=DriveConfig)
    numerics: NumericsConfig = field(default_factory=NumericsConfig)
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    # --- builders: Hz in the file, rad/s in the physics objects ---

    def atom_params(self) -> AtomParams:
        p = self.physics
        return AtomParams(
            f_mu=p.f_mu,
            f_opt=p.f_opt,
            t1_spin=p.t1_spin,
            t2_spin=p.t2_spin,
            t2_opt=p.t2_opt,
            t1_opt=p.t1_opt,
            branching_31=p.branching_31,
            g_mu=TWO_PI * p.g_mu,
            g_s=TWO_PI * p.g_s,
            g_p=TWO_PI * p.g_p,
            temperature=p.temperature,
            thermal_spin_bath=p.thermal_spin_bath,
        )

    def inhomogeneous_spec(self) -> InhomogeneousSpec:
        n = self.numerics
        return InhomogeneousSpec(
            fwhm_opt=self.inhomogeneity.fwhm_opt,
            fwhm_spin=self.inhomogeneity.fwhm_spin,
            shape=LineShape(self.inhomogeneity.lineshape),
            n_opt=n.n_opt,
            n_spin=n.n_spin,
            span_opt=n.span_opt,
            span_spin=n.span_spin,
            quadrature=Quadrature(n.quadrature),
            resolve_width=TWO_PI * n.resolve_width,
        )

    def microwave_cavity_params(self) -> CavityParams:
        return _cavity_params(self.microwave_cavity)

    def optical_cavity_params(self) -> CavityParams:
        return _cavity_params(self.optical_cavity)

    def drive_inputs(self) -> DriveInputs:
        d = self.drive
        return DriveInputs(
            p_mw_dbm=d.p_mw_dbm,
            p_opt=d.p_opt,
            f_mw=d.f_mw,
            f_opt=d.f_opt,
            delta_o=TWO_PI * d.detuning_o,
            delta_mu=TWO_PI * d.detuning_mu,
        )

    def solver_numerics(self) -> SolverNumerics:
        n = self.numerics
        return SolverNumerics(
            damping=n.damping,
            tol=n.tol,
            max_iter=n.max_iter,
            loaded_update=n.loaded_update,
            self_consistent_pump=n.self_consistent_pump,
            divergence_limit=n.divergence_limit,
            check_invariants=n.check_invariants,
        )

    def system(self) -> TransducerSystem:
        return TransducerSystem(
            atom=self.atom_params(),
            inhomogeneity=self.inhomogeneous_spec(),
            n_eff=self.physics.n_eff,
            mw_cavity=self.microwave_cavity_params(),
            opt_cavity=self.optical_cavity_params(),
            drive=self.drive_inputs(),
        )

    def to_dict(self) -> dict[str, dict[str, Any]]:
        return asdict(self)


def _cavity_params(section: CavityConfig) -> CavityParams:
    return CavityParams(
        kappa1=TWO_PI * section.kappa1,
        kappa2=TWO_PI * section.kappa2,
        kappai=TWO_PI * section.kappai,
        delta_c=TWO_PI * section.detuning,
    )


SECTION_NAMES: tuple[str, ...] = tuple(f.name for f in fields(RunConfig))


# ===================================================================
# Coercion and validation
# ===================================================================

def _section_fields(section_obj: Any) -> dict[str, Any]:
    return {f.name: f for f in fields(section_obj)}


def _closest_key(key: str, valid: list[str]) -> Optional[str]:
    """Best guess for a mistyped key: prefix, then substring, then difflib."""
    for match in (lambda v: v.startswith(key), lambda v: key in v):
        hits = sorted((v for v in valid if match(v)), key=len)
        if hits:
            return hits[0]
    close = difflib.get_close_matches(key, valid, n=1)
    return close[0] if close else None


def _unknown_key(key: str, valid: Iterable[str], where: str) -> ConfigError:
    valid = list(valid)
    close = _closest_key(str(key), valid)
    hint = f"; did you mean '{where}{close}'?" if close else f"; valid keys: {', '.join(sorted(valid))}"
    return ConfigError(f"unknown config key '{where}{key}'{hint}")


def _describe(section: str, f: Any) -> str:
    unit = f.metadata.get("unit", "")
    return f"{section}.{f.name}" + (f" ({unit})" if unit else "")


def _coerce(section: str, f: Any, value: Any) -> Any:
    type_name = str(f.type)
    label = _describe(section, f)
    try:
        if type_name == "bool":
            if isinstance(value, bool):
                return value
            text = str(value).strip().lower()
            if text in {"true", "yes", "on", "1"}:
                return True
            if text in {"false", "no", "off", "0"}:
                return False
            raise ValueError(value)
        if isinstance(value, bool):
            raise ValueError(value)
        if type_name == "int":
            number = float(value)
            if not number.is_integer():
                raise ValueError(value)
            return int(number)
        if type_name == "float":
            return float(value)
        if type_name == "str":
            return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{label} expects a {type_name}, got {value!r}") from None
    raise ConfigError(f"{label} has unsupported type {type_name}")


def _check_value(section: str, f: Any, value: Any) -> None:
    rule = f.metadata.get("check")
    if rule is None:
        return
    label = _describe(section, f)

    def fail(expectation: str) -> None:
        raise ConfigError(f"{label} must be {expectation}, got {value!r}")

    if rule == "positive" and not (value > 0 and math.isfinite(value)):
        fail("> 0 and finite")
    elif rule == "non_negative" and not (value >= 0 and math.isfinite(value)):
        fail(">= 0 and finite")
    elif rule == "finite" and not math.isfinite(value):
        fail("finite")
    elif rule == "fraction" and not 0.0 <= value <= 1.0:
        fail("within [0, 1]")
    elif rule == "damping" and not 0.0 < value <= 1.0:
        fail("within (0, 1]")
    elif rule == "dbm" and (math.isnan(value) or value == math.inf):
        fail("finite or -inf (no input)")
    elif rule == "grid_count" and not (value == 1 or (value >= 3 and value % 2 == 1)):
        fail("odd and >= 3 (or 1 for no broadening)")
    elif rule == "axis_count" and value < 2:
        fail(">= 2")
    elif rule == "lineshape" and value not in {s.value for s in LineShape}:
        fail("one of " + ", ".join(s.value for s in LineShape))
    elif rule == "quadrature" and value not in {q.value for q in Quadrature}:
        fail("one of " + ", ".join(q.value for q in Quadrature))


def set_value(cfg: RunConfig, dotted_key: str, value: Any) -> None:
    """Set one ``section.field`` in place with full coercion and checks."""
    section, _, key = dotted_key.partition(".")
    if section not in SECTION_NAMES:
        raise _unknown_key(section, SECTION_NAMES, "")
    if not key:
        raise ConfigError(f"config key '{dotted_key}' must have the form section.field")
    section_obj = getattr(cfg, section)
    known = _section_fields(section_obj)
    if key not in known:
        raise _unknown_key(key, known, f"{section}.")
    coerced = _coerce(section, known[key], value)
    _check_value(section, known[key], coerced)
    setattr(section_obj, key, coerced)


def field_unit(dotted_key: str) -> str:
    """Unit string of a ``section.field`` key ('' when dimensionless)."""
    section, _, key = dotted_key.partition(".")
    if section not in SECTION_NAMES:
        raise _unknown_key(section, SECTION_NAMES, "")
    known = _section_fields(getattr(RunConfig(), section))
    if key not in known:
        raise _unknown_key(key, known, f"{section}.")
    return known[key].metadata.get("unit", "")


def validate_config(cfg: RunConfig) -> RunConfig:
    """Re-check every field and build the physics objects once.

    Cross-field constraints (e.g. T2 versus the population-decay limit)
    only surface when the physics objects are built.
    """
    for section in SECTION_NAMES:
        section_obj = getattr(cfg, section)
        for f in fields(section_obj):
            _check_value(section, f, getattr(section_obj, f.name))
    try:
        cfg.system()
        cfg.solver_numerics()
    except ConfigError as exc:
        raise ConfigError(f"physics validation failed: {exc}") from None
    return cfg


# ===================================================================
# File Loading
# ===================================================================

def resolve_config_path(path: str | Path) -> Path:
    """Map a preset name (``paper-2017``, ``paper-2017.json``) or a path to a file."""
    p = Path(path)
    if p.exists():
        return p
    stem = p.stem if p.suffix in {".json", ".yaml", ".yml"} else p.name
    if p.parent == Path(".") and stem in PRESETS:
        return PRESETS[stem]
    raise ConfigError(f"config file not found: {path}")


def _read_mapping(path: Path) -> dict[str, Any]:
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}: JSON parse error: {exc.msg}") from None
    else:
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            line = f":{mark.line + 1}" if mark is not None else ""
            problem = getattr(exc, "problem", None) or str(exc)
            raise ConfigError(f"{path}{line}: YAML parse error: {problem}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping of sections")
    return data


def _apply_mapping(cfg: RunConfig, data: Mapping[str, Any]) -> None:
    """Apply a parsed {section: {field: value}} mapping onto cfg."""
    for section, values in data.items():
        if section not in SECTION_NAMES:
            raise _unknown_key(section, SECTION_NAMES, "")
        if values is None:
            continue
        if not isinstance(values, dict):
            raise ConfigError(f"config section '{section}' must be a mapping")
        for key, value in values.items():
            set_value(cfg, f"{section}.{key}", value)


def load_config(path: str | Path) -> RunConfig:
    """Strictly load a YAML/JSON file (or preset name) over code defaults."""
    resolved = resolve_config_path(path)
    cfg = RunConfig()
    _apply_mapping(cfg, _read_mapping(resolved))
    return validate_config(cfg)


def get_config(yaml_path: Optional[str | Path] = None) -> RunConfig:
    """Build a RunConfig, overlaying the bundled preset or a given file.

    Args:
        yaml_path: Path to a config file or a preset name.  If None, the
                   bundled config.yaml is used when present, otherwise
                   pure defaults are returned.
    """
    if yaml_path is not None:
        return load_config(yaml_path)
    if DEFAULT_CONFIG_PATH.exists():
        return load_config(DEFAULT_CONFIG_PATH)
    return validate_config(RunConfig())


# ===================================================================
# Overrides and provenance
# ===================================================================

def with_values(cfg: RunConfig, values: Mapping[str, Any]) -> RunConfig:
    """Copy of cfg with dotted-key values applied and re-validated."""
    updated = copy.deepcopy(cfg)
    for key, value in values.items():
        set_value(updated, key, value)
    return validate_config(updated)


def parse_override(text: str) -> tuple[str, Any]:
    """Split ``section.key=value``; the value is read as a YAML scalar."""
    key, sep, raw = text.partition("=")
    key = key.strip()
    if not sep or not key:
        raise ConfigError(f"override {text!r} must have the form section.key=value")
    try:
        value = yaml.safe_load(raw) if raw.strip() else ""
    except yaml.YAMLError:
        value = raw.strip()
    return key, value


def apply_overrides(cfg: RunConfig, overrides: Iterable[str]) -> RunConfig:
    """Apply ``--override`` strings with the same checks as file values."""
    return with_values(cfg, dict(parse_override(item) for item in overrides))


def config_hash(cfg: RunConfig) -> str:
    """SHA-256 of the canonical JSON form of the configuration."""
    canonical = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"), default=repr)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

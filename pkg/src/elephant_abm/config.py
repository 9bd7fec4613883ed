"""JSON run configuration: defaults, validation, overrides and resolution.

A configuration document has the sections ``landscape``, ``scenario``,
``agent``, ``movement``, ``disturbance``, ``run``, ``calibration`` and
``analysis``. Every field has a default (see :func:`default_document`),
unknown keys are rejected with their dotted path, and the fully resolved
document written next to simulation output reproduces the run exactly.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence

from .agent import AgentParams, MovementDistributions
from .analytics import DEFAULT_EPSILONS
from .calibration.nsga2 import GaConfig
from .calibration.objectives import CALIBRATION_VARIABLES
from .engine import LandscapeConfig, RunConfig
from .environment import (
    DEFAULT_MONTHLY_TEMPERATURE,
    SCENARIOS,
    DisturbanceSchedule,
    ScenarioConfig,
    SyntheticLandscapeSpec,
)

__all__ = [
    "ConfigError",
    "default_document",
    "resolve_document",
    "load_config",
    "apply_override",
    "to_run_config",
]

# Sections whose keys are free-form (mapping values), so only their values are checked.
_FREE_MAPS = {
    ("landscape", "temperature"),
    ("landscape", "agri_fractions"),
    ("landscape", "synthetic", "agri_fractions"),
    ("calibration", "ga", "bounds"),
    ("calibration", "ga", "targets"),
}


class ConfigError(ValueError):
    """Invalid configuration; ``path`` is the dotted field path at fault."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


def default_document() -> dict:
    """Configuration with every default spelled out."""
    synthetic = asdict(SyntheticLandscapeSpec())
    scenario = {"name": None}
    scenario.update(asdict(ScenarioConfig()))
    ga = asdict(GaConfig())
    ga["bounds"] = {name: list(b) for name, _, _, b in CALIBRATION_VARIABLES}
    ga["targets"] = None
    return {
        "landscape": {
            "synthetic": synthetic,
            "elevation": None,
            "landuse": None,
            "buildings": None,
            "agri_fractions": None,
            "nodata_policy": "min",
            "seed": 0,
            "start": None,
            "temperature": {str(m): list(v) for m, v in sorted(DEFAULT_MONTHLY_TEMPERATURE.items())},
        },
        "scenario": scenario,
        "agent": asdict(AgentParams()),
        "movement": asdict(MovementDistributions()),
        "disturbance": asdict(DisturbanceSchedule()),
        "run": {"month": 1, "year": 2020, "days": None, "replicates": 192, "master_seed": 0},
        "calibration": {
            "hmm": {"step_families": ["gamma", "exponential", "weibull"],
                    "turn_families": ["vonmises", "wrappedcauchy"],
                    "n_starts": 5, "max_iter": 500, "tol": 1e-6, "seed": 0},
            "ga": ga,
            "slope": {"tolerances": [25.0, 50.0, 100.0, 200.0], "bound": 0.01, "choose": "smallest"},
        },
        "analysis": {
            "epsilons": list(DEFAULT_EPSILONS),
            "kde_levels": [0.5, 0.95, 1.0],
            "kde_cellsize": 30.0,
            "dbscan_eps": 1000.0,
            "dbscan_min_pts": 4,
            "ticks_per_day": 288,
        },
    }


def _merge(base: dict, update: Mapping, path: tuple = ()) -> dict:
    out = dict(base)
    for key, value in update.items():
        here = path + (key,)
        dotted = ".".join(here)
        if path in _FREE_MAPS or (here in _FREE_MAPS and value is None):
            out[key] = value
            continue
        if here in _FREE_MAPS:
            if here == ("calibration", "ga", "targets") and isinstance(value, str):
                out[key] = value
                continue
            if not isinstance(value, Mapping):
                raise ConfigError(dotted, "expected an object")
            current = base.get(key)
            out[key] = {**(current if isinstance(current, Mapping) else {}), **value}
            continue
        if key not in base:
            raise ConfigError(dotted, "unknown key")
        current = base[key]
        if isinstance(current, dict):
            if value is None and here == ("landscape", "synthetic"):
                out[key] = None
            elif not isinstance(value, Mapping):
                raise ConfigError(dotted, "expected an object")
            else:
                out[key] = _merge(current, value, here)
        elif current is None and here == ("landscape", "synthetic"):
            if value is None:
                out[key] = None
            elif not isinstance(value, Mapping):
                raise ConfigError(dotted, "expected an object")
            else:
                out[key] = _merge(asdict(SyntheticLandscapeSpec()), value, here)
        else:
            out[key] = value
    return out


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(doc: dict, assignment: str) -> dict:
    """Apply one ``dotted.path=value`` override; the value is parsed as JSON when possible."""
    if "=" not in assignment:
        raise ConfigError("", f"override {assignment!r} is not of the form key=value")
    key, raw = assignment.split("=", 1)
    parts = tuple(p for p in key.strip().split(".") if p)
    if not parts:
        raise ConfigError("", f"override {assignment!r} has an empty key")
    update: Any = _parse_value(raw)
    for p in reversed(parts):
        update = {p: update}
    return _merge(doc, update)


def _uses_files(user: Mapping) -> bool:
    land = user.get("landscape") or {}
    return ("elevation" in land or "landuse" in land) and "synthetic" not in land


def _absolute(path: Optional[str], base: Path) -> Optional[str]:
    if path is None:
        return None
    p = Path(os.path.expanduser(str(path)))
    return str(p if p.is_absolute() else (base / p).resolve())


def _resolve_paths(doc: dict, base: Path) -> None:
    land = doc["landscape"]
    for key in ("elevation", "landuse", "buildings"):
        land[key] = _absolute(land[key], base)
    temp = land.get("temperature") or {}
    for month, pair in temp.items():
        if isinstance(pair, (list, tuple)):
            temp[month] = [_absolute(v, base) if isinstance(v, str) else v for v in pair]
    targets = doc["calibration"]["ga"].get("targets")
    if isinstance(targets, str):
        doc["calibration"]["ga"]["targets"] = _absolute(targets, base)


def _check_files(doc: dict) -> None:
    land = doc["landscape"]
    if land["synthetic"] is None:
        for key in ("elevation", "landuse"):
            if land[key] is None:
                raise ConfigError(f"landscape.{key}", "required when no synthetic landscape is given")
    for key in ("elevation", "landuse", "buildings"):
        if land[key] is not None and land["synthetic"] is None and not Path(land[key]).is_file():
            raise ConfigError(f"landscape.{key}", f"file not found: {land[key]}")
    for month, pair in (land.get("temperature") or {}).items():
        if not isinstance(pair, (list, tuple)) or len(pair) != 2:
            raise ConfigError(f"landscape.temperature.{month}", "expected [tmin, tmax]")
        for v in pair:
            if isinstance(v, str) and not Path(v).is_file():
                raise ConfigError(f"landscape.temperature.{month}", f"file not found: {v}")


def resolve_document(user: Mapping, overrides: Iterable[str] = (), base_dir: Optional[Path] = None) -> dict:
    """Merge a user document and overrides onto the defaults and validate the result."""
    if not isinstance(user, Mapping):
        raise ConfigError("", "configuration must be a JSON object")
    doc = _merge(default_document(), user)
    if _uses_files(user):
        doc["landscape"]["synthetic"] = None
    for ov in overrides:
        doc = apply_override(doc, ov)
        if ov.split("=", 1)[0].strip() in ("landscape.elevation", "landscape.landuse") \
                and "synthetic" not in (user.get("landscape") or {}):
            doc["landscape"]["synthetic"] = None
    _resolve_paths(doc, Path(base_dir) if base_dir else Path.cwd())
    name = doc["scenario"].get("name")
    if name is not None:
        if name not in SCENARIOS:
            raise ConfigError("scenario.name", f"unknown scenario {name!r}; expected one of {sorted(SCENARIOS)}")
        named = asdict(SCENARIOS[name])
        explicit = (user.get("scenario") or {})
        explicit_keys = set(explicit) | {o.split("=", 1)[0].strip().split(".", 1)[1]
                                         for o in overrides if o.startswith("scenario.")}
        for k, v in named.items():
            if k not in explicit_keys:
                doc["scenario"][k] = v
    _check_files(doc)
    to_run_config(doc)  # validates value ranges
    return doc


def load_config(path: Optional[str], overrides: Sequence[str] = ()) -> dict:
    """Read, merge and validate a configuration file (``None`` means defaults only)."""
    if path is None:
        return resolve_document({}, overrides)
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError("", f"cannot read config {path}: {exc.strerror or exc}") from None
    try:
        user = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"{path}: invalid JSON ({exc})") from None
    return resolve_document(user, overrides, p.resolve().parent)


def _build(cls, section: str, values: Mapping):
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigError(section, str(exc)) from None
    except ValueError as exc:
        raise ConfigError(section, str(exc)) from None


def _temperature(spec: Mapping) -> dict:
    out = {}
    for month, pair in spec.items():
        try:
            m = int(month)
        except ValueError:
            raise ConfigError(f"landscape.temperature.{month}", "month keys must be 1-12") from None
        if not 1 <= m <= 12:
            raise ConfigError(f"landscape.temperature.{month}", "month keys must be 1-12")
        out[m] = tuple(pair)
    return out


def to_run_config(doc: Mapping) -> RunConfig:
    """Build the engine configuration from a resolved document."""
    land = dict(doc["landscape"])
    synthetic = None
    if land["synthetic"] is not None:
        synthetic = _build(SyntheticLandscapeSpec, "landscape.synthetic", land["synthetic"])
    start = tuple(land["start"]) if land["start"] is not None else None
    if start is not None and len(start) != 2:
        raise ConfigError("landscape.start", "expected [x, y]")
    landscape = _build(LandscapeConfig, "landscape", {
        "synthetic": synthetic,
        "elevation": land["elevation"],
        "landuse": land["landuse"],
        "buildings": land["buildings"],
        "agri_fractions": land["agri_fractions"],
        "nodata_policy": land["nodata_policy"],
        "seed": land["seed"],
        "start": start,
        "temperature": _temperature(land["temperature"]),
    })
    scenario = {k: v for k, v in doc["scenario"].items() if k != "name"}
    run = doc["run"]
    try:
        return RunConfig(
            landscape=landscape,
            scenario=_build(ScenarioConfig, "scenario", scenario),
            agent=_build(AgentParams, "agent", doc["agent"]),
            movement=_build(MovementDistributions, "movement", doc["movement"]),
            disturbance=_build(DisturbanceSchedule, "disturbance", doc["disturbance"]),
            month=run["month"], year=run["year"], days=run["days"],
            master_seed=run["master_seed"], replicates=run["replicates"],
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("run", str(exc)) from None


def ga_config(doc: Mapping, **overrides) -> GaConfig:
    values = {k: v for k, v in doc["calibration"]["ga"].items() if k not in ("bounds", "targets")}
    values.update({k: v for k, v in overrides.items() if v is not None})
    return _build(GaConfig, "calibration.ga", values)

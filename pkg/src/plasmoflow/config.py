"""Pipeline configuration.

All tunable knobs live here with their defaults; the JSON config file mirrors
the dataclass structure (one object per section, e.g.
``{"geography": {"density_threshold": 300.0}}``).  Anything not present in
the file keeps its default.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import BadConfigError

EVENT_KINDS = ("call_in", "call_out", "sms_in", "sms_out", "data")

# Local-time convention for Zambia deployments; overridable per run.
DEFAULT_TZ_OFFSET_HOURS = 2.0


@dataclass
class GeographyConfig:
    density_threshold: float = 300.0   # persons/km2 at which a catchment counts as urban
    link_distance_km: float = 5.0      # great-circle link radius for merging urban towers


@dataclass
class MobilityConfig:
    home_window_days: int = 60         # trailing window for home inference
    min_home_score: int = 5            # minimum home-indicative events for a valid home
    night_start: int = 18              # local hour, inclusive
    night_end: int = 6                 # local hour, exclusive
    min_trip_days: int = 2             # minimum consecutive away days to count a trip


@dataclass
class RiskflowConfig:
    k_anonymity: int = 5
    visitor_weight_mode: str = "per_trip"   # per_trip | per_night
    rr_weight: float = 1.0
    v_weight: float = 1.0


@dataclass
class InputPaths:
    cdr: list[str] = field(default_factory=list)   # CDR CSV files or glob patterns
    towers: str = ""
    region: str = ""
    population: str = ""
    districts: str = ""
    incidence: str = ""


@dataclass
class PipelineConfig:
    geography: GeographyConfig = field(default_factory=GeographyConfig)
    mobility: MobilityConfig = field(default_factory=MobilityConfig)
    riskflow: RiskflowConfig = field(default_factory=RiskflowConfig)
    inputs: InputPaths = field(default_factory=InputPaths)
    tz_offset_hours: float = DEFAULT_TZ_OFFSET_HOURS
    window_start: dt.date | None = None   # local calendar dates, inclusive
    window_end: dt.date | None = None
    shards: int = 1

    def validate(self):
        if self.shards < 1:
            raise BadConfigError("shards must be >= 1", shards=self.shards)
        if self.riskflow.k_anonymity < 1:
            raise BadConfigError("riskflow.k_anonymity must be >= 1")
        if self.riskflow.visitor_weight_mode not in ("per_trip", "per_night"):
            raise BadConfigError(
                "riskflow.visitor_weight_mode must be per_trip or per_night",
                value=self.riskflow.visitor_weight_mode,
            )
        if self.mobility.home_window_days < 1:
            raise BadConfigError("mobility.home_window_days must be >= 1")
        if self.mobility.min_trip_days < 1:
            raise BadConfigError("mobility.min_trip_days must be >= 1")
        if self.geography.density_threshold <= 0:
            raise BadConfigError("geography.density_threshold must be > 0")
        if self.geography.link_distance_km <= 0:
            raise BadConfigError("geography.link_distance_km must be > 0")
        if (self.window_start is None) != (self.window_end is None):
            raise BadConfigError("window_start and window_end must be set together")
        if self.window_start is not None and self.window_end < self.window_start:
            raise BadConfigError("window_end precedes window_start")
        return self


def _apply_section(obj, data: dict, path: str):
    known = {f.name for f in fields(obj)}
    for key, value in data.items():
        if key not in known:
            raise BadConfigError(f"unknown config key {path}.{key}")
        setattr(obj, key, value)


def config_from_dict(data: dict) -> PipelineConfig:
    cfg = PipelineConfig()
    data = dict(data)
    for section_name, section_obj in (
        ("geography", cfg.geography),
        ("mobility", cfg.mobility),
        ("riskflow", cfg.riskflow),
        ("inputs", cfg.inputs),
    ):
        section = data.pop(section_name, None)
        if section is not None:
            if not isinstance(section, dict):
                raise BadConfigError(f"config section {section_name} must be an object")
            _apply_section(section_obj, section, section_name)
    for key in ("tz_offset_hours", "shards"):
        if key in data:
            setattr(cfg, key, data.pop(key))
    window = data.pop("window", None)
    if window is not None:
        try:
            cfg.window_start = dt.date.fromisoformat(window["start"])
            cfg.window_end = dt.date.fromisoformat(window["end"])
        except (KeyError, ValueError) as exc:
            raise BadConfigError(f"bad window spec: {exc}") from exc
    data.pop("synth", None)  # synth section is read by the generator, not the pipeline
    if data:
        raise BadConfigError(f"unknown config keys: {sorted(data)}")
    return cfg.validate()


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise BadConfigError(f"cannot read config file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise BadConfigError(f"config file is not valid JSON: {exc}") from exc
    cfg = config_from_dict(data)
    # Relative input paths resolve against the config file's directory.
    base = path.parent
    cfg.inputs.cdr = [str(base / p) if not Path(p).is_absolute() else p for p in cfg.inputs.cdr]
    for name in ("towers", "region", "population", "districts", "incidence"):
        value = getattr(cfg.inputs, name)
        if value and not Path(value).is_absolute():
            setattr(cfg.inputs, name, str(base / value))
    return cfg

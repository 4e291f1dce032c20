"""Scenario configuration: JSON schema with defaults, validation and overrides.

Schema (every field optional except the single constellation source)::

    source.tle          path to a TLE catalog
    source.walker       {planes, sats_per_plane, inclination_deg, altitude_km, phasing}
    source.snapshot     path to a JSON snapshot of ECI states
    subsample           int or null; keep this many satellites chosen at random
    epoch.t_s           seconds after the reference time
    epoch.reference_time  ISO-8601 UTC timestamp
    sites.file          CSV of gateways / population cells
    sites.synthetic     synthetic site generator parameters (used when no file)
    beam.*              Gaussian-beam and receiver parameters
    lct.per_sat, lct.for_half_angle_deg, lct.max_range_km
    traffic.*           demand model; traffic.explicit overrides it with fixed Q/D/flows
    schedule.alpha0, schedule.beta, schedule.iterations, schedule.convert_every
    methods             subset of ["dujo", "mrate", "grid", "rand"]
    output.dir, output.record_timing
    seed                master seed

Relative paths are resolved against the config file's directory.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import fields
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import numpy as np

from .optics import BeamParams
from .scenario import DEFAULT_REFERENCE_TIME, SyntheticSitesParams
from .traffic import TrafficParams

METHODS = ("dujo", "mrate", "grid", "rand")
SEED_STREAMS = ("traffic", "rand", "subsample", "sites")

DEFAULTS: dict[str, Any] = {
    "source": {"tle": None, "walker": None, "snapshot": None},
    "subsample": None,
    "epoch": {"t_s": 0.0, "reference_time": DEFAULT_REFERENCE_TIME.isoformat()},
    "sites": {
        "file": None,
        "synthetic": {f.name: f.default for f in fields(SyntheticSitesParams)},
    },
    "beam": {f.name: f.default for f in fields(BeamParams)},
    "lct": {"per_sat": 2, "for_half_angle_deg": 60.0, "max_range_km": 3000.0},
    "traffic": {
        **{f.name: f.default for f in fields(TrafficParams) if f.name != "rng_seed"},
        "explicit": None,
    },
    "schedule": {"alpha0": None, "beta": 0.5, "iterations": 500, "convert_every": 10},
    "methods": list(METHODS),
    "output": {"dir": "out", "record_timing": True},
    "seed": 0,
}

WALKER_FIELDS = {"planes", "sats_per_plane", "inclination_deg", "altitude_km", "phasing"}


class ConfigError(ValueError):
    def __init__(self, field: str, message: str, path: str | Path | None = None):
        self.field = field
        self.message = message
        self.path = path
        where = f"{path}: " if path else ""
        super().__init__(f"{where}{field}: {message}")


def _merge(base: dict, over: dict, prefix: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        name = f"{prefix}{key}"
        if key not in base:
            raise ConfigError(name, "unknown field")
        if isinstance(base[key], dict) and isinstance(val, dict) and key not in ("walker", "explicit"):
            out[key] = _merge(base[key], val, name + ".")
        else:
            out[key] = copy.deepcopy(val)
    return out


def parse_override_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def set_field(cfg: dict, dotted: str, value: Any) -> None:
    """Set ``a.b.c`` in a nested config, refusing unknown paths."""
    parts = dotted.split(".")
    node = cfg
    ref = DEFAULTS
    for i, part in enumerate(parts):
        free = isinstance(ref, dict) and part not in ref and i > 0 and parts[i - 1] in ("walker", "explicit")
        if not isinstance(node, dict) or (part not in node and not free):
            raise ConfigError(dotted, "unknown field")
        if i == len(parts) - 1:
            node[part] = value
        else:
            if node[part] is None:
                node[part] = {}
            node = node[part]
            ref = ref.get(part, {}) if isinstance(ref, dict) else {}


class ScenarioConfig:
    """Validated configuration. ``data`` holds the merged nested dict."""

    def __init__(self, data: dict | None = None, base_dir: str | Path = ".", path: str | Path | None = None):
        self.path = path
        self.base_dir = Path(base_dir)
        self.data = _merge(DEFAULTS, data or {})
        self.validate()

    @classmethod
    def load(cls, path: str | Path, overrides: dict[str, Any] | None = None) -> "ScenarioConfig":
        p = Path(path)
        if not p.is_file():
            raise ConfigError("config", f"file not found: {p}", p)
        try:
            raw = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON ({exc})", p) from exc
        try:
            data = _merge(DEFAULTS, raw)
            for k, v in (overrides or {}).items():
                set_field(data, k, v)
            return cls(data, p.parent, p)
        except ConfigError as exc:
            raise ConfigError(exc.field, exc.message, p) from None

    def with_overrides(self, overrides: dict[str, Any]) -> "ScenarioConfig":
        data = copy.deepcopy(self.data)
        for k, v in overrides.items():
            set_field(data, k, v)
        return ScenarioConfig(data, self.base_dir, self.path)

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.base_dir / p

    def _err(self, field: str, msg: str):
        raise ConfigError(field, msg, self.path)

    def validate(self) -> None:
        d = self.data
        src = d["source"]
        given = [k for k in ("tle", "walker", "snapshot") if src.get(k) is not None]
        if len(given) != 1:
            self._err("source", f"exactly one of tle/walker/snapshot required, got {given or 'none'}")
        if src["walker"] is not None:
            w = src["walker"]
            missing = {"planes", "sats_per_plane", "inclination_deg", "altitude_km"} - set(w)
            if missing:
                self._err("source.walker", f"missing {sorted(missing)}")
            extra = set(w) - WALKER_FIELDS
            if extra:
                self._err("source.walker", f"unknown fields {sorted(extra)}")
            if int(w["planes"]) < 1 or int(w["sats_per_plane"]) < 1:
                self._err("source.walker", "planes and sats_per_plane must be >= 1")
        for key in ("tle", "snapshot"):
            if src[key] is not None and not self.resolve(src[key]).is_file():
                self._err(f"source.{key}", f"file not found: {self.resolve(src[key])}")
        if d["sites"]["file"] is not None and not self.resolve(d["sites"]["file"]).is_file():
            self._err("sites.file", f"file not found: {self.resolve(d['sites']['file'])}")
        if d["subsample"] is not None and int(d["subsample"]) < 1:
            self._err("subsample", "must be >= 1")
        sch = d["schedule"]
        if not isinstance(sch["iterations"], int) or sch["iterations"] < 1:
            self._err("schedule.iterations", "must be an integer >= 1")
        if not isinstance(sch["convert_every"], int) or sch["convert_every"] < 1:
            self._err("schedule.convert_every", "must be an integer >= 1")
        if sch["alpha0"] is not None and not float(sch["alpha0"]) > 0:
            self._err("schedule.alpha0", "must be positive or null")
        methods = d["methods"]
        if not methods or any(m not in METHODS for m in methods) or len(set(methods)) != len(methods):
            self._err("methods", f"must be a non-empty list of distinct names from {METHODS}")
        lct = d["lct"]
        if int(lct["per_sat"]) < 1:
            self._err("lct.per_sat", "must be >= 1")
        if not 0 < float(lct["for_half_angle_deg"]) <= 180:
            self._err("lct.for_half_angle_deg", "must lie in (0, 180]")
        if not float(lct["max_range_km"]) > 0:
            self._err("lct.max_range_km", "must be positive")
        if not isinstance(d["seed"], int) or d["seed"] < 0:
            self._err("seed", "must be a nonnegative integer")
        # building the parameter objects runs their own checks
        for name, build in (("beam", self.beam_params), ("traffic", self.traffic_params),
                            ("sites.synthetic", self.synthetic_params)):
            try:
                build()
            except (TypeError, ValueError) as exc:
                self._err(name, str(exc))
        ex = d["traffic"]["explicit"]
        if ex is not None:
            unknown = set(ex) - {"serving_gbps", "demand_gbps", "flows"}
            if unknown or "serving_gbps" not in ex or "demand_gbps" not in ex:
                self._err("traffic.explicit", "needs serving_gbps and demand_gbps (flows optional)")
        try:
            self.reference_time()
        except ValueError as exc:
            self._err("epoch.reference_time", str(exc))

    # -- typed views -------------------------------------------------------

    def beam_params(self) -> BeamParams:
        return BeamParams(**self.data["beam"])

    def traffic_params(self) -> TrafficParams:
        t = {k: v for k, v in self.data["traffic"].items() if k != "explicit"}
        return TrafficParams(**t)

    def synthetic_params(self) -> SyntheticSitesParams:
        return SyntheticSitesParams(**self.data["sites"]["synthetic"])

    def reference_time(self) -> datetime:
        t = datetime.fromisoformat(self.data["epoch"]["reference_time"])
        return t if t.tzinfo else t.replace(tzinfo=timezone.utc)

    @property
    def for_half_angle(self) -> float:
        return math.radians(float(self.data["lct"]["for_half_angle_deg"]))

    @property
    def max_range_m(self) -> float:
        return float(self.data["lct"]["max_range_km"]) * 1e3

    def seed_streams(self) -> dict[str, np.random.SeedSequence]:
        """Independent child seeds of the master seed, one per random component."""
        children = np.random.SeedSequence(self.data["seed"]).spawn(len(SEED_STREAMS))
        return dict(zip(SEED_STREAMS, children))

    def rand_baseline_seed(self) -> int:
        return int(self.seed_streams()["rand"].generate_state(1)[0])

    def output_dir(self) -> Path:
        return self.resolve(self.data["output"]["dir"])

    def to_json(self) -> str:
        return json.dumps(self.data, indent=1, sort_keys=True)

"""Constellation snapshot, ground sites and the shared ECI geometry.

Orbits are propagated with a circular two-body model from TLE mean
elements. Users that need SGP4-accurate states can bypass propagation by
loading a position/velocity snapshot (``load_snapshot``).
"""

from __future__ import annotations

import csv
import json
import logging
import math
import string
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

EARTH_RADIUS_M = 6.3781e6
EARTH_MU = 3.986004418e14  # m^3/s^2
EARTH_ROTATION_RATE = 7.2921e-5  # rad/s
SECONDS_PER_DAY = 86400.0
TWO_PI = 2.0 * math.pi

DEFAULT_REFERENCE_TIME = datetime(2025, 7, 16, 16, 0, tzinfo=timezone.utc)
LEO_MEAN_MOTION_BAND = (10.0, 18.0)  # rev/day


class TLEError(ValueError):
    """Malformed two-line element text."""

    def __init__(self, line: int, column: int | None, message: str):
        where = f"line {line}" if column is None else f"line {line}, column {column}"
        super().__init__(f"{where}: {message}")
        self.line = line
        self.column = column


@dataclass(frozen=True)
class SimulationEpoch:
    t: float = 0.0
    reference_time: datetime = DEFAULT_REFERENCE_TIME
    earth_rotation_angle_at_t0: float = 0.0

    def __post_init__(self):
        if not (self.t >= 0.0 and math.isfinite(self.t)):
            raise ValueError(f"epoch t must be finite and >= 0, got {self.t}")
        if not 0.0 <= self.earth_rotation_angle_at_t0 < TWO_PI:
            raise ValueError("earth_rotation_angle_at_t0 must lie in [0, 2*pi)")

    @property
    def time(self) -> datetime:
        return self.reference_time + timedelta(seconds=self.t)


@dataclass(frozen=True)
class OrbitalElements:
    """Mean elements of one satellite. Angles in radians, mean motion in rev/day.

    ``eccentricity`` is kept for round-tripping but the propagator treats
    every orbit as circular.
    """

    inclination: float
    raan: float
    mean_anomaly_at_epoch: float
    mean_motion: float
    epoch: datetime = DEFAULT_REFERENCE_TIME
    eccentricity: float = 0.0
    arg_perigee: float = 0.0
    catalog_id: str = ""

    def __post_init__(self):
        if not self.mean_motion > 0:
            raise ValueError("mean_motion must be positive")
        if not 0.0 <= self.inclination <= math.pi:
            raise ValueError("inclination must lie in [0, pi]")
        for name in ("raan", "mean_anomaly_at_epoch", "arg_perigee"):
            value = getattr(self, name)
            if not 0.0 <= value < TWO_PI:
                raise ValueError(f"{name} must lie in [0, 2*pi), got {value}")

    @property
    def semi_major_axis(self) -> float:
        n = self.mean_motion * TWO_PI / SECONDS_PER_DAY
        return (EARTH_MU / n**2) ** (1.0 / 3.0)

    @property
    def period(self) -> float:
        return SECONDS_PER_DAY / self.mean_motion


@dataclass(frozen=True)
class SatelliteState:
    sat_id: int
    position: np.ndarray
    velocity: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))
        object.__setattr__(self, "velocity", np.asarray(self.velocity, dtype=float).reshape(3))
        if np.linalg.norm(self.position) <= EARTH_RADIUS_M:
            raise ValueError(f"satellite {self.sat_id} lies inside the Earth")
        if not np.linalg.norm(self.velocity) > 0:
            raise ValueError(f"satellite {self.sat_id} has zero velocity")


@dataclass(frozen=True)
class GroundSite:
    kind: str  # "gateway" | "population_cell"
    latitude: float
    longitude: float
    payload: float = 1.0

    def __post_init__(self):
        if self.kind not in ("gateway", "population_cell"):
            raise ValueError(f"unknown site kind {self.kind!r}")
        if not -math.pi / 2 <= self.latitude <= math.pi / 2:
            raise ValueError("latitude must lie in [-pi/2, pi/2]")
        if self.payload < 0:
            raise ValueError("payload must be nonnegative")


# ---------------------------------------------------------------------------
# TLE parsing
# ---------------------------------------------------------------------------

def tle_checksum(line: str) -> int:
    total = 0
    for c in line[:68]:
        if c in string.digits:
            total += int(c)
        elif c == "-":
            total += 1
    return total % 10


def _field(line: str, lineno: int, start: int, end: int, conv=float):
    # start/end are 1-based inclusive TLE columns
    text = line[start - 1:end]
    try:
        return conv(text.strip() or "0")
    except ValueError:
        raise TLEError(lineno, start, f"cannot parse {text!r}") from None


def _check_line(line: str, lineno: int):
    if len(line) != 69:
        raise TLEError(lineno, None, f"line length {len(line)}, expected 69")
    if line[0] != str(lineno):
        raise TLEError(lineno, 1, f"expected line number {lineno}, found {line[0]!r}")
    if not line[68].isdigit():
        raise TLEError(lineno, 69, "missing checksum digit")
    if tle_checksum(line) != int(line[68]):
        raise TLEError(lineno, 69, f"checksum mismatch (computed {tle_checksum(line)}, found {line[68]})")


def _parse_epoch(line1: str) -> datetime:
    year = _field(line1, 1, 19, 20, int)
    year += 2000 if year < 57 else 1900
    day = _field(line1, 1, 21, 32)
    return datetime(year, 1, 1, tzinfo=timezone.utc) + timedelta(days=day - 1.0)


def parse_tle(two_line_text: str) -> OrbitalElements:
    """Parse one TLE record (2 lines, or 3 with a leading name line)."""
    lines = [ln.rstrip() for ln in two_line_text.strip("\n").splitlines() if ln.strip()]
    if len(lines) == 3:
        lines = lines[1:]
    if len(lines) != 2:
        raise TLEError(1, None, f"expected 2 element lines, got {len(lines)}")
    line1, line2 = lines
    _check_line(line1, 1)
    _check_line(line2, 2)
    if line1[2:7] != line2[2:7]:
        raise TLEError(2, 3, "catalog number differs between lines")

    deg = math.radians
    return OrbitalElements(
        inclination=deg(_field(line2, 2, 9, 16)),
        raan=deg(_field(line2, 2, 18, 25)) % TWO_PI,
        eccentricity=_field(line2, 2, 27, 33, lambda s: float("0." + s)),
        arg_perigee=deg(_field(line2, 2, 35, 42)) % TWO_PI,
        mean_anomaly_at_epoch=deg(_field(line2, 2, 44, 51)) % TWO_PI,
        mean_motion=_field(line2, 2, 53, 63),
        epoch=_parse_epoch(line1),
        catalog_id=line1[2:7].strip(),
    )


def _with_checksum(body: str) -> str:
    body = body.ljust(68)[:68]
    return body + str(tle_checksum(body))


def format_tle(el: OrbitalElements) -> str:
    """Serialize elements back to TLE text; drag terms are written as zero."""
    epoch = el.epoch.astimezone(timezone.utc)
    start = datetime(epoch.year, 1, 1, tzinfo=timezone.utc)
    day = 1.0 + (epoch - start).total_seconds() / SECONDS_PER_DAY
    catalog = (el.catalog_id or "0")[:5].rjust(5)
    line1 = (
        f"1 {catalog}U 00000A   {epoch.year % 100:02d}{day:012.8f} "
        f" .00000000  00000-0  00000-0 0  9990"
    )
    ecc = f"{el.eccentricity:.7f}"[2:]
    line2 = (
        f"2 {catalog} {math.degrees(el.inclination):8.4f} {math.degrees(el.raan):8.4f} "
        f"{ecc} {math.degrees(el.arg_perigee):8.4f} "
        f"{math.degrees(el.mean_anomaly_at_epoch):8.4f} {el.mean_motion:11.8f}    0"
    )
    return _with_checksum(line1) + "\n" + _with_checksum(line2)


def load_tle_file(path: str | Path) -> list[OrbitalElements]:
    """Read a 2-line or 3-line TLE catalog."""
    lines = [ln.rstrip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    out = []
    i = 0
    while i < len(lines):
        if lines[i].startswith("1 ") and i + 1 < len(lines) and lines[i + 1].startswith("2 "):
            out.append(parse_tle("\n".join(lines[i:i + 2])))
            i += 2
        elif i + 2 < len(lines) and lines[i + 1].startswith("1 ") and lines[i + 2].startswith("2 "):
            out.append(parse_tle("\n".join(lines[i + 1:i + 3])))
            i += 3
        else:
            raise TLEError(1, None, f"{path}: unrecognized record at line {i + 1}")
    for el in out:
        lo, hi = LEO_MEAN_MOTION_BAND
        if not lo <= el.mean_motion <= hi:
            logger.warning("satellite %s: mean motion %.3f rev/day outside LEO band",
                           el.catalog_id, el.mean_motion)
    return out


# ---------------------------------------------------------------------------
# Propagation and geometry
# ---------------------------------------------------------------------------

def _rotation(inclination: float, raan: float) -> np.ndarray:
    ci, si = math.cos(inclination), math.sin(inclination)
    co, so = math.cos(raan), math.sin(raan)
    rx = np.array([[1.0, 0.0, 0.0], [0.0, ci, -si], [0.0, si, ci]])
    rz = np.array([[co, -so, 0.0], [so, co, 0.0], [0.0, 0.0, 1.0]])
    return rz @ rx


def propagate(elements: OrbitalElements, epoch: SimulationEpoch, sat_id: int = 0) -> SatelliteState:
    """Circular two-body state at ``epoch``."""
    a = elements.semi_major_axis
    n = elements.mean_motion * TWO_PI / SECONDS_PER_DAY
    dt = (epoch.time - elements.epoch).total_seconds()
    u = elements.arg_perigee + elements.mean_anomaly_at_epoch + n * dt
    cu, su = math.cos(u), math.sin(u)
    rot = _rotation(elements.inclination, elements.raan)
    speed = math.sqrt(EARTH_MU / a)
    pos = rot @ np.array([a * cu, a * su, 0.0])
    vel = rot @ np.array([-speed * su, speed * cu, 0.0])
    return SatelliteState(sat_id, pos, vel)


def propagate_all(elements: Sequence[OrbitalElements], epoch: SimulationEpoch) -> list[SatelliteState]:
    return [propagate(el, epoch, i) for i, el in enumerate(elements)]


def walker_delta(planes: int, sats_per_plane: int, inclination: float, altitude: float,
                 phasing: int = 0, epoch: datetime = DEFAULT_REFERENCE_TIME) -> list[OrbitalElements]:
    """Walker-delta pattern i:T/P/F with T = planes * sats_per_plane."""
    if planes < 1 or sats_per_plane < 1:
        raise ValueError("planes and sats_per_plane must be >= 1")
    a = EARTH_RADIUS_M + altitude
    n_rad = math.sqrt(EARTH_MU / a**3)
    rev_per_day = n_rad * SECONDS_PER_DAY / TWO_PI
    total = planes * sats_per_plane
    out = []
    for p in range(planes):
        raan = TWO_PI * p / planes
        for s in range(sats_per_plane):
            anomaly = (TWO_PI * s / sats_per_plane + TWO_PI * phasing * p / total) % TWO_PI
            out.append(OrbitalElements(
                inclination=inclination, raan=raan, mean_anomaly_at_epoch=anomaly,
                mean_motion=rev_per_day, epoch=epoch, catalog_id=f"W{p:03d}{s:03d}",
            ))
    return out


def ground_to_eci(site: GroundSite, epoch: SimulationEpoch) -> np.ndarray:
    phi = epoch.earth_rotation_angle_at_t0 + EARTH_ROTATION_RATE * epoch.t + site.longitude
    cl = math.cos(site.latitude)
    return EARTH_RADIUS_M * np.array([cl * math.cos(phi), cl * math.sin(phi), math.sin(site.latitude)])


def sites_to_eci(sites: Sequence[GroundSite], epoch: SimulationEpoch) -> np.ndarray:
    if not sites:
        return np.zeros((0, 3))
    return np.array([ground_to_eci(s, epoch) for s in sites])


def pair_geometry(a: SatelliteState, b: SatelliteState) -> tuple[float, np.ndarray]:
    """Distance and unit direction from ``a`` to ``b``."""
    diff = b.position - a.position
    z = float(np.linalg.norm(diff))
    if z == 0.0:
        raise ValueError(f"satellites {a.sat_id} and {b.sat_id} coincide")
    return z, diff / z


def positions(states: Sequence[SatelliteState]) -> np.ndarray:
    return np.array([s.position for s in states]).reshape(-1, 3)


def velocities(states: Sequence[SatelliteState]) -> np.ndarray:
    return np.array([s.velocity for s in states]).reshape(-1, 3)


# ---------------------------------------------------------------------------
# File interfaces
# ---------------------------------------------------------------------------

def load_snapshot(path: str | Path) -> list[SatelliteState]:
    """JSON array of {sat_id, position:[x,y,z], velocity:[vx,vy,vz]} in ECI SI units.

    Satellites are re-indexed 0..I-1 in file order.
    """
    records = json.loads(Path(path).read_text())
    return [SatelliteState(i, rec["position"], rec["velocity"]) for i, rec in enumerate(records)]


def save_snapshot(states: Iterable[SatelliteState], path: str | Path):
    data = [{"sat_id": s.sat_id, "position": s.position.tolist(), "velocity": s.velocity.tolist()}
            for s in states]
    Path(path).write_text(json.dumps(data, indent=1))


def load_sites(path: str | Path) -> list[GroundSite]:
    """CSV with header ``kind,lat_deg,lon_deg,payload``."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"kind", "lat_deg", "lon_deg", "payload"} - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            out.append(GroundSite(row["kind"].strip(), math.radians(float(row["lat_deg"])),
                                  math.radians(float(row["lon_deg"])), float(row["payload"])))
    return out


def save_sites(sites: Iterable[GroundSite], path: str | Path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "lat_deg", "lon_deg", "payload"])
        for s in sites:
            w.writerow([s.kind, repr(math.degrees(s.latitude)), repr(math.degrees(s.longitude)),
                        repr(s.payload)])


@dataclass(frozen=True)
class SyntheticSitesParams:
    gateways: int = 10
    hot_cells: int = 3
    hot_population: float = 2.0e7
    background_population: float = 1.0e5
    grid_deg: float = 5.0
    max_lat_deg: float = 60.0


def synthetic_sites(params: SyntheticSitesParams, rng: np.random.Generator) -> list[GroundSite]:
    """Uniform background population grid, a few hot cells and random gateways.

    All sites lie within ``max_lat_deg`` of the equator; gateway and hot-cell
    locations are uniform on that spherical band.
    """
    sites: list[GroundSite] = []
    max_lat = math.radians(params.max_lat_deg)
    if params.background_population > 0:
        step = params.grid_deg
        for lat in np.arange(-params.max_lat_deg + step / 2, params.max_lat_deg, step):
            # cell area shrinks with cos(lat)
            pop = params.background_population * math.cos(math.radians(lat))
            for lon in np.arange(-180.0 + step / 2, 180.0, step):
                sites.append(GroundSite("population_cell", math.radians(lat), math.radians(lon), pop))

    def draw_point():
        lat = math.asin(rng.uniform(-math.sin(max_lat), math.sin(max_lat)))
        lon = rng.uniform(-math.pi, math.pi)
        return lat, lon

    for _ in range(params.hot_cells):
        lat, lon = draw_point()
        sites.append(GroundSite("population_cell", lat, lon, params.hot_population))
    for _ in range(params.gateways):
        lat, lon = draw_point()
        sites.append(GroundSite("gateway", lat, lon, 1.0))
    return sites

"""Per-satellite users, serving/demand rates and source-target flow pairs."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .scenario import EARTH_RADIUS_M, GroundSite, SatelliteState, SimulationEpoch, positions, sites_to_eci

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrafficParams:
    per_user_demand_gbps: float = 0.1
    gateway_capacity_gbps: float = 20.0
    active_fraction: float = 1.0e-4
    coverage_radius_m: float = 200.0e3
    top_m: int = 5
    rng_seed: int = 0

    def __post_init__(self):
        if self.per_user_demand_gbps <= 0 or self.gateway_capacity_gbps <= 0:
            raise ValueError("per-user demand and gateway capacity must be positive")
        if not 0.0 < self.active_fraction <= 1.0:
            raise ValueError("active_fraction must lie in (0, 1]")
        if self.coverage_radius_m <= 0:
            raise ValueError("coverage_radius_m must be positive")
        if self.top_m < 1:
            raise ValueError("top_m must be >= 1")


@dataclass
class TrafficProfile:
    users: np.ndarray
    serving_gbps: np.ndarray
    demand_gbps: np.ndarray
    flow_pairs: list[tuple[int, int]] = field(default_factory=list)

    def __post_init__(self):
        self.users = np.asarray(self.users, dtype=np.int64)
        self.serving_gbps = np.asarray(self.serving_gbps, dtype=float)
        self.demand_gbps = np.asarray(self.demand_gbps, dtype=float)
        self.flow_pairs = [(int(s), int(t)) for s, t in self.flow_pairs]

    @property
    def num_sats(self) -> int:
        return len(self.serving_gbps)

    def validate(self):
        if np.any(self.serving_gbps < 0) or np.any(self.demand_gbps < 0):
            raise ValueError("negative serving or demand rate")
        if np.any(np.minimum(self.serving_gbps, self.demand_gbps) > 0):
            raise ValueError("a satellite cannot both serve and demand")
        for s, t in self.flow_pairs:
            if not (self.serving_gbps[s] > 0 and self.demand_gbps[t] > 0):
                raise ValueError(f"flow ({s}, {t}) does not join a server to a demander")

    @classmethod
    def explicit(cls, serving_gbps, demand_gbps, flow_pairs) -> "TrafficProfile":
        serving = np.asarray(serving_gbps, dtype=float)
        return cls(np.zeros(len(serving), dtype=np.int64), serving, demand_gbps, flow_pairs)


def coverage_mask(sat_pos: np.ndarray, ground_pos: np.ndarray, radius_m: float) -> np.ndarray:
    """Boolean (I, G) matrix: ground point within great-circle ``radius_m`` of the sub-satellite point."""
    if len(sat_pos) == 0 or len(ground_pos) == 0:
        return np.zeros((len(sat_pos), len(ground_pos)), dtype=bool)
    su = sat_pos / np.linalg.norm(sat_pos, axis=1, keepdims=True)
    gu = ground_pos / np.linalg.norm(ground_pos, axis=1, keepdims=True)
    # compare cosines to avoid arccos on the whole matrix
    return su @ gu.T >= np.cos(radius_m / EARTH_RADIUS_M)


def _split_sites(sites: Sequence[GroundSite]):
    cells = [s for s in sites if s.kind == "population_cell"]
    gateways = [s for s in sites if s.kind == "gateway"]
    return cells, gateways


def draw_user_counts(population_cells: Sequence[GroundSite], sat_states: Sequence[SatelliteState],
                     params: TrafficParams, epoch: SimulationEpoch | None = None,
                     rng: np.random.Generator | None = None) -> np.ndarray:
    """Poisson user count per satellite with mean ``active_fraction`` x covered population."""
    epoch = epoch or SimulationEpoch()
    rng = rng if rng is not None else np.random.default_rng(params.rng_seed)
    cells = [c for c in population_cells if c.kind == "population_cell"]
    pop = np.array([c.payload for c in cells], dtype=float)
    mask = coverage_mask(positions(sat_states), sites_to_eci(cells, epoch), params.coverage_radius_m)
    mean = params.active_fraction * (mask.astype(float) @ pop if len(cells) else np.zeros(len(sat_states)))
    return rng.poisson(mean).astype(np.int64)


def gateway_flags(gateways: Sequence[GroundSite], sat_states: Sequence[SatelliteState],
                  params: TrafficParams, epoch: SimulationEpoch | None = None) -> np.ndarray:
    epoch = epoch or SimulationEpoch()
    gws = [g for g in gateways if g.kind == "gateway"]
    mask = coverage_mask(positions(sat_states), sites_to_eci(gws, epoch), params.coverage_radius_m)
    return mask.any(axis=1) if len(gws) else np.zeros(len(sat_states), dtype=bool)


def serving_rate(u, has_gateway, params: TrafficParams):
    u = np.asarray(u, dtype=float)
    out = np.where(has_gateway, np.maximum(params.gateway_capacity_gbps - u * params.per_user_demand_gbps, 0.0), 0.0)
    return float(out) if out.ndim == 0 else out


def demand_rate(u, has_gateway, params: TrafficParams):
    u = np.asarray(u, dtype=float)
    raw = u * params.per_user_demand_gbps
    out = np.where(has_gateway, np.maximum(raw - params.gateway_capacity_gbps, 0.0), raw)
    return float(out) if out.ndim == 0 else out


def build_flow_pairs(profile: TrafficProfile, sat_states: Sequence[SatelliteState],
                     params: TrafficParams) -> list[tuple[int, int]]:
    """Pair every demanding satellite with its ``top_m`` nearest serving satellites.

    Output is ordered by target index, then by distance (ties to lower source index).
    """
    servers = np.flatnonzero(profile.serving_gbps > 0)
    targets = np.flatnonzero(profile.demand_gbps > 0)
    if len(servers) == 0:
        if len(targets):
            logger.warning("no serving satellites: flow set is empty")
        return []
    pos = positions(sat_states)
    pairs = []
    for t in targets:
        dist = np.linalg.norm(pos[servers] - pos[t], axis=1)
        order = np.lexsort((servers, dist))[: params.top_m]
        pairs.extend((int(servers[k]), int(t)) for k in order)
    return pairs


def build_profile(sites: Sequence[GroundSite], sat_states: Sequence[SatelliteState],
                  params: TrafficParams, epoch: SimulationEpoch | None = None,
                  rng: np.random.Generator | None = None) -> TrafficProfile:
    cells, gateways = _split_sites(sites)
    users = draw_user_counts(cells, sat_states, params, epoch, rng)
    has_gw = gateway_flags(gateways, sat_states, params, epoch)
    profile = TrafficProfile(users, serving_rate(users, has_gw, params), demand_rate(users, has_gw, params))
    profile.flow_pairs = build_flow_pairs(profile, sat_states, params)
    return profile

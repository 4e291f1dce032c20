"""Separate matching-then-routing baselines (grid, random, max-rate + OSPF)."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dujo import JointSolution
from .scenario import SatelliteState, positions
from .solvers import Matching, RoutePath, greedy_mwm, route_flows, solve_frm_capacitated
from .topology import ConstellationGraphs
from .traffic import TrafficProfile

RULES = ("grid", "random", "max_rate")
GRID_SHIFT = 2.0


@dataclass(frozen=True)
class BaselineScheme:
    matching_rule: str
    rng_seed: int | None = None

    def __post_init__(self):
        if self.matching_rule not in RULES:
            raise ValueError(f"unknown matching rule {self.matching_rule!r}; expected one of {RULES}")
        if (self.matching_rule == "random") != (self.rng_seed is not None):
            raise ValueError("rng_seed is required for, and only for, the random rule")


def alignment_scores(graphs: ConstellationGraphs, sat_states: Sequence[SatelliteState]) -> np.ndarray:
    """d(i_n -> i_m) . u_n + d(i_m -> i_n) . u_m per edge, in [-2, 2]."""
    if graphs.lcts is None:
        raise ValueError("grid weights need mounted LCTs (graphs built from satellite states)")
    pos = positions(sat_states)
    mounts = np.array([t.mount_dir for t in graphs.lcts]).reshape(-1, 3)
    sat_n = np.array([e.sat_n for e in graphs.edges], dtype=np.int64)
    sat_m = np.array([e.sat_m for e in graphs.edges], dtype=np.int64)
    if len(sat_n) == 0:
        return np.zeros(0)
    d = pos[sat_m] - pos[sat_n]
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return np.einsum("ed,ed->e", d, mounts[graphs.edge_n]) + np.einsum("ed,ed->e", -d, mounts[graphs.edge_m])


def baseline_weights(scheme: BaselineScheme, graphs: ConstellationGraphs,
                     sat_states: Sequence[SatelliteState] | None = None) -> np.ndarray:
    rule = scheme.matching_rule
    if rule == "grid":
        # shifted so weights stay nonnegative for the greedy matcher
        return np.maximum(alignment_scores(graphs, sat_states) + GRID_SHIFT, 0.0)
    if rule == "random":
        return np.random.default_rng(scheme.rng_seed).uniform(0.0, 1.0, len(graphs.edges))
    if rule == "max_rate":
        return graphs.edge_rate.copy()
    raise ValueError(f"unknown matching rule {rule!r}")


def ospf_weights(graphs: ConstellationGraphs, matching: Matching) -> tuple[np.ndarray, np.ndarray]:
    """Reciprocal aggregate matched rate per link, and the matched-link mask."""
    cap = graphs.link_capacity(matching.edges)
    mask = cap > 0
    w = np.zeros(graphs.num_links)
    w[mask] = 1.0 / cap[mask]
    return w, mask


def ospf_route(matching: Matching, graphs: ConstellationGraphs, flow: tuple[int, int]) -> RoutePath | None:
    w, mask = ospf_weights(graphs, matching)
    return route_flows(graphs.adjacency, w, [flow], link_mask=mask)[0]


def run_baseline(scheme: BaselineScheme, graphs: ConstellationGraphs, profile: TrafficProfile,
                 sat_states: Sequence[SatelliteState] | None = None,
                 timings: dict | None = None) -> JointSolution:
    t0 = time.perf_counter()
    matching = greedy_mwm(graphs.edge_pairs(), baseline_weights(scheme, graphs, sat_states))
    t1 = time.perf_counter()
    w, mask = ospf_weights(graphs, matching)
    routes = route_flows(graphs.adjacency, w, profile.flow_pairs, link_mask=mask)
    t2 = time.perf_counter()
    rates = solve_frm_capacitated(routes, matching, graphs, profile)
    t3 = time.perf_counter()
    if timings is not None:
        timings["p_mwm"] = timings.get("p_mwm", 0.0) + (t1 - t0) * 1e3
        timings["p_spf"] = timings.get("p_spf", 0.0) + (t2 - t1) * 1e3
        timings["p_frm"] = timings.get("p_frm", 0.0) + (t3 - t2) * 1e3
    flows = list(profile.flow_pairs)
    return JointSolution(
        flows=flows,
        matching=matching,
        routes={f: r for f, r in zip(flows, routes) if r is not None},
        rates={f: float(q) for f, q in zip(flows, rates.rates)},
        connected_pairs=[l for l, m in zip(graphs.links, mask) if m],
    )

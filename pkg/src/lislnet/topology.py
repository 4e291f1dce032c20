"""LCT connectability graph and the satellite-level neighbor graph."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .optics import BeamParams, effective_rate
from .scenario import SatelliteState, positions

DEFAULT_FOR_HALF_ANGLE = math.radians(60.0)
DEFAULT_MAX_RANGE_M = 3.0e6
SPATIAL_INDEX_THRESHOLD = 2000


@dataclass(frozen=True)
class LctTerminal:
    lct_id: int
    owner_sat: int
    mount_dir: np.ndarray
    for_half_angle: float = DEFAULT_FOR_HALF_ANGLE

    def __post_init__(self):
        u = np.asarray(self.mount_dir, dtype=float).reshape(3)
        if abs(np.linalg.norm(u) - 1.0) > 1e-9:
            raise ValueError(f"LCT {self.lct_id}: mount direction is not a unit vector")
        if not 0.0 < self.for_half_angle < math.pi:
            raise ValueError("field-of-regard half-angle must lie in (0, pi)")
        object.__setattr__(self, "mount_dir", u)


@dataclass(frozen=True)
class LctEdge:
    """Connectable LCT pair {n, m}; ``sat_n``/``sat_m`` own ``n``/``m``."""

    n: int
    m: int
    sat_n: int
    sat_m: int
    rate_gbps: float
    distance_m: float = float("nan")

    def __post_init__(self):
        if self.sat_n == self.sat_m:
            raise ValueError("an LCT edge must join two different satellites")
        if not self.rate_gbps > 0:
            raise ValueError("edge rate must be positive")

    @property
    def sat_pair(self) -> tuple[int, int]:
        return (min(self.sat_n, self.sat_m), max(self.sat_n, self.sat_m))


@dataclass
class SatGraph:
    """Neighbor graph: ordered links (both directions) and unordered buckets of edge indices."""

    num_sats: int
    links: list[tuple[int, int]] = field(default_factory=list)
    buckets: dict[tuple[int, int], list[int]] = field(default_factory=dict)

    def __post_init__(self):
        self.link_index = {l: k for k, l in enumerate(self.links)}


def default_body_directions(lcts_per_sat: int) -> np.ndarray:
    """Directions spread evenly in the local horizontal plane, starting along-track.

    Body frame axes are (along-track, orbit normal, radial-out).
    """
    ang = 2.0 * math.pi * np.arange(lcts_per_sat) / lcts_per_sat
    dirs = np.stack([np.cos(ang), np.sin(ang), np.zeros_like(ang)], axis=1)
    dirs[np.abs(dirs) < 1e-15] = 0.0
    return dirs


def mount_lcts(sat_states: Sequence[SatelliteState], lcts_per_sat: int = 2,
               body_directions: Sequence[Sequence[float]] | None = None,
               for_half_angle: float = DEFAULT_FOR_HALF_ANGLE) -> list[LctTerminal]:
    """Mount terminals on every satellite; the default for two LCTs is +/- velocity."""
    dirs = np.asarray(body_directions if body_directions is not None
                      else default_body_directions(lcts_per_sat), dtype=float).reshape(-1, 3)
    dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    needs_normal = np.any(np.abs(dirs[:, 1:]) > 0)
    out = []
    for s in sat_states:
        vn = np.linalg.norm(s.velocity)
        if vn == 0:
            raise ValueError(f"satellite {s.sat_id} has zero velocity")
        x = s.velocity / vn
        if needs_normal:
            h = np.cross(s.position, s.velocity)
            y = h / np.linalg.norm(h)
            z = np.cross(x, y)
            frame = np.stack([x, y, z], axis=1)
        else:
            frame = np.stack([x, np.zeros(3), np.zeros(3)], axis=1)
        for d in dirs:
            u = frame @ d
            u = u / np.linalg.norm(u)
            out.append(LctTerminal(len(out), s.sat_id, u, for_half_angle))
    return out


def candidate_pairs(pos: np.ndarray, max_range_m: float) -> tuple[np.ndarray, np.ndarray]:
    """Satellite pairs (i < j) within ``max_range_m``, sorted lexicographically."""
    n = len(pos)
    if n < 2:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    if n <= SPATIAL_INDEX_THRESHOLD:
        ii, jj = np.triu_indices(n, k=1)
        keep = np.linalg.norm(pos[jj] - pos[ii], axis=1) <= max_range_m
        return ii[keep], jj[keep]
    pairs = cKDTree(pos).query_pairs(max_range_m, output_type="ndarray")
    if len(pairs) == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    pairs = np.sort(pairs, axis=1)
    # query_pairs can admit pairs at exactly r up to rounding; re-apply the same test as the dense path
    keep = np.linalg.norm(pos[pairs[:, 1]] - pos[pairs[:, 0]], axis=1) <= max_range_m
    pairs = pairs[keep]
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    return pairs[order, 0].astype(np.int64), pairs[order, 1].astype(np.int64)


def build_lct_graph(sat_states: Sequence[SatelliteState], lcts: Sequence[LctTerminal],
                    beam_params: BeamParams, max_range_m: float = DEFAULT_MAX_RANGE_M,
                    pair_filter: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None,
                    ) -> list[LctEdge]:
    """All connectable LCT pairs: in range and each satellite inside the other's field of regard.

    ``pair_filter(pos_i, pos_j) -> bool mask`` can veto candidate satellite
    pairs (e.g. an Earth-occlusion test); none is applied by default.
    """
    pos = positions(sat_states)
    num_sats = len(pos)
    per_sat: list[list[LctTerminal]] = [[] for _ in range(num_sats)]
    for t in lcts:
        per_sat[t.owner_sat].append(t)
    k = max((len(p) for p in per_sat), default=0)
    if k == 0:
        return []
    ids = -np.ones((num_sats, k), dtype=np.int64)
    mounts = np.zeros((num_sats, k, 3))
    cos_th = np.full((num_sats, k), np.inf)
    for i, ts in enumerate(per_sat):
        for a, t in enumerate(sorted(ts, key=lambda t: t.lct_id)):
            ids[i, a] = t.lct_id
            mounts[i, a] = t.mount_dir
            cos_th[i, a] = math.cos(t.for_half_angle)

    ii, jj = candidate_pairs(pos, max_range_m)
    if pair_filter is not None and len(ii):
        keep = np.asarray(pair_filter(pos[ii], pos[jj]), dtype=bool)
        ii, jj = ii[keep], jj[keep]
    if len(ii) == 0:
        return []
    diff = pos[jj] - pos[ii]
    z = np.linalg.norm(diff, axis=1)
    d = diff / z[:, None]
    ok_i = np.einsum("pd,pkd->pk", d, mounts[ii]) > cos_th[ii]
    ok_j = np.einsum("pd,pkd->pk", -d, mounts[jj]) > cos_th[jj]
    p, a, b = np.nonzero(ok_i[:, :, None] & ok_j[:, None, :])
    rates = effective_rate(beam_params, z[p]) / 1e9
    rates = np.atleast_1d(rates)
    edges = [
        LctEdge(int(ids[ii[pp], aa]), int(ids[jj[pp], bb]), int(ii[pp]), int(jj[pp]), float(r), float(z[pp]))
        for pp, aa, bb, r in zip(p, a, b, rates)
    ]
    edges.sort(key=lambda e: (min(e.n, e.m), max(e.n, e.m)))
    return edges


def build_sat_graph(edges: Sequence[LctEdge], num_sats: int | None = None) -> SatGraph:
    if num_sats is None:
        num_sats = 1 + max((max(e.sat_n, e.sat_m) for e in edges), default=-1)
    buckets: dict[tuple[int, int], list[int]] = defaultdict(list)
    for k, e in enumerate(edges):
        buckets[e.sat_pair].append(k)
    links = sorted([p for p in buckets] + [(j, i) for i, j in buckets])
    return SatGraph(num_sats, links, dict(sorted(buckets.items())))


class ConstellationGraphs:
    """Edge list plus the array views the solvers work on.

    Multipliers and link weights are numpy vectors aligned with
    ``sat_graph.links``; per-edge quantities are aligned with ``edges``.
    """

    def __init__(self, num_sats: int, edges: Sequence[LctEdge], num_lcts: int | None = None,
                 lcts: Sequence[LctTerminal] | None = None):
        self.num_sats = int(num_sats)
        self.edges = list(edges)
        self.lcts = list(lcts) if lcts is not None else None
        if num_lcts is None:
            num_lcts = len(lcts) if lcts is not None else \
                1 + max((max(e.n, e.m) for e in self.edges), default=-1)
        self.num_lcts = int(num_lcts)
        self.sat_graph = build_sat_graph(self.edges, self.num_sats)
        sg = self.sat_graph
        li = sg.link_index
        self.links = sg.links
        self.num_links = len(sg.links)
        self.bucket_pairs = list(sg.buckets)
        bucket_index = {p: b for b, p in enumerate(self.bucket_pairs)}

        self.edge_n = np.array([e.n for e in self.edges], dtype=np.int64)
        self.edge_m = np.array([e.m for e in self.edges], dtype=np.int64)
        self.edge_rate = np.array([e.rate_gbps for e in self.edges], dtype=float)
        self.edge_fwd = np.array([li[(e.sat_n, e.sat_m)] for e in self.edges], dtype=np.int64)
        self.edge_bwd = np.array([li[(e.sat_m, e.sat_n)] for e in self.edges], dtype=np.int64)
        self.edge_bucket = np.array([bucket_index[e.sat_pair] for e in self.edges], dtype=np.int64)
        self.link_bucket = np.array([bucket_index[(min(i, j), max(i, j))] for i, j in self.links],
                                    dtype=np.int64)
        self.link_src = np.array([i for i, _ in self.links], dtype=np.int64)
        self.link_dst = np.array([j for _, j in self.links], dtype=np.int64)
        self.bucket_total_rate = np.bincount(self.edge_bucket, weights=self.edge_rate,
                                             minlength=len(self.bucket_pairs))
        self._edge_pairs = list(zip(self.edge_n.tolist(), self.edge_m.tolist()))
        self.adjacency: list[list[tuple[int, int]]] = [[] for _ in range(self.num_sats)]
        for k, (i, j) in enumerate(self.links):
            self.adjacency[i].append((j, k))

    @classmethod
    def from_states(cls, sat_states: Sequence[SatelliteState], beam_params: BeamParams,
                    lcts_per_sat: int = 2, for_half_angle: float = DEFAULT_FOR_HALF_ANGLE,
                    max_range_m: float = DEFAULT_MAX_RANGE_M,
                    body_directions=None) -> "ConstellationGraphs":
        lcts = mount_lcts(sat_states, lcts_per_sat, body_directions, for_half_angle)
        edges = build_lct_graph(sat_states, lcts, beam_params, max_range_m)
        return cls(len(sat_states), edges, lcts=lcts)

    def edge_pairs(self) -> list[tuple[int, int]]:
        return self._edge_pairs

    def matching_weights(self, lam: np.ndarray) -> np.ndarray:
        """Per-edge weight (lambda_ij + lambda_ji) * r."""
        lam = np.asarray(lam, dtype=float)
        if self.num_links == 0:
            return np.zeros(len(self.edges))
        return (lam[self.edge_fwd] + lam[self.edge_bwd]) * self.edge_rate

    def bucket_capacity(self, matched_edges) -> np.ndarray:
        """Aggregate matched rate of each unordered bucket."""
        idx = np.asarray(list(matched_edges), dtype=np.int64)
        return np.bincount(self.edge_bucket[idx], weights=self.edge_rate[idx],
                           minlength=len(self.bucket_pairs))

    def link_capacity(self, matched_edges) -> np.ndarray:
        """Matched capacity seen by each ordered link (the same in both orientations)."""
        return self.bucket_capacity(matched_edges)[self.link_bucket] if self.num_links else np.zeros(0)

    def lambda_dict(self, lam) -> dict[tuple[int, int], float]:
        return {l: float(v) for l, v in zip(self.links, lam)}

    def lambda_vector(self, mapping: dict[tuple[int, int], float]) -> np.ndarray:
        return np.array([float(mapping.get(l, 0.0)) for l in self.links])


def write_graph_csv(graphs: ConstellationGraphs, path: str | Path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "m", "i_n", "i_m", "z_m", "rate_gbps"])
        for e in graphs.edges:
            w.writerow([e.n, e.m, e.sat_n, e.sat_m, repr(e.distance_m), repr(e.rate_gbps)])

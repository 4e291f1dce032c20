"""Subproblem kernels: greedy weight matching, shortest-path routing and
the flow-rate LPs."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .traffic import TrafficProfile

LP_TOL = 1e-9
_HIGHS_OPTIONS = {
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
    "presolve": True,
}


@dataclass
class Matching:
    """Selected edges (indices into the edge list) and the LCT pairs they join."""

    edges: list[int]
    pairs: list[tuple[int, int]]
    weight: float = 0.0

    @property
    def partner(self) -> dict[int, int]:
        out = {}
        for n, m in self.pairs:
            out[n] = m
            out[m] = n
        return out

    def __len__(self):
        return len(self.edges)


def _check_weights(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if np.any(~np.isfinite(w)) or np.any(w < 0):
        raise ValueError("matching weights must be finite and nonnegative")
    return w


def greedy_mwm(edges: Sequence[tuple[int, int]], weights, skip_zero_weight: bool = False) -> Matching:
    """Greedy weight matching: scan edges by decreasing weight, ties to lower index.

    Zero-weight edges are still matched unless ``skip_zero_weight``.
    """
    w = _check_weights(weights)
    if len(w) != len(edges):
        raise ValueError("one weight per edge required")
    order = np.lexsort((np.arange(len(w)), -w))
    used: set[int] = set()
    chosen: list[int] = []
    wl = w.tolist()
    for k in order.tolist():
        if skip_zero_weight and wl[k] == 0.0:
            break
        n, m = edges[k]
        if n in used or m in used:
            continue
        used.add(n)
        used.add(m)
        chosen.append(k)
    chosen.sort()
    return Matching(chosen, [tuple(edges[k]) for k in chosen], float(sum(wl[k] for k in chosen)))


@dataclass
class RoutePath:
    flow: tuple[int, int]
    nodes: tuple[int, ...]
    link_ids: tuple[int, ...] = ()
    cost: float = 0.0

    @property
    def arcs(self) -> list[tuple[int, int]]:
        return list(zip(self.nodes[:-1], self.nodes[1:]))

    @property
    def hops(self) -> int:
        return len(self.nodes) - 1


def build_adjacency(links: Sequence[tuple[int, int]], num_nodes: int | None = None):
    if num_nodes is None:
        num_nodes = 1 + max((max(l) for l in links), default=-1)
    adj: list[list[tuple[int, int]]] = [[] for _ in range(num_nodes)]
    for k, (i, j) in enumerate(links):
        adj[i].append((j, k))
    return adj


def shortest_path_tree(adjacency, weights, source: int, link_mask=None):
    """Single-source Dijkstra with (cost, hops, node sequence) labels.

    Returns {node: (cost, nodes, link_ids)} for every reachable node. The
    label order makes ties resolve to fewer hops, then to the
    lexicographically smaller node sequence.
    """
    w = weights.tolist() if isinstance(weights, np.ndarray) else list(weights)
    mask = None if link_mask is None else (
        link_mask.tolist() if isinstance(link_mask, np.ndarray) else list(link_mask))
    best: dict[int, tuple[float, int, tuple[int, ...]]] = {source: (0.0, 0, (source,))}
    via: dict[int, tuple[int, ...]] = {source: ()}
    done: set[int] = set()
    heap = [(0.0, 0, (source,), source)]
    while heap:
        c, h, seq, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        for v, k in adjacency[u]:
            if v in done or (mask is not None and not mask[k]):
                continue
            key = (c + w[k], h + 1, seq + (v,))
            cur = best.get(v)
            if cur is None or key < cur:
                best[v] = key
                via[v] = via[u] + (k,)
                heapq.heappush(heap, (key[0], key[1], key[2], v))
    return {v: (lab[0], lab[2], via[v]) for v, lab in best.items()}


def dijkstra_spf(links: Sequence[tuple[int, int]], weights, s: int, t: int,
                 num_nodes: int | None = None) -> RoutePath | None:
    """Minimum-cost simple path from ``s`` to ``t``; ``None`` when unreachable."""
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or np.any(np.isnan(w)):
        raise ValueError("link weights must be nonnegative")
    if num_nodes is None:
        num_nodes = 1 + max([s, t] + [max(l) for l in links])
    tree = shortest_path_tree(build_adjacency(links, num_nodes), w, s)
    if t not in tree:
        return None
    cost, nodes, ids = tree[t]
    return RoutePath((s, t), nodes, ids, cost)


def route_flows(adjacency, weights, flows: Sequence[tuple[int, int]], link_mask=None) -> list[RoutePath | None]:
    """Shortest path for every flow, one Dijkstra per distinct source."""
    out: list[RoutePath | None] = []
    trees: dict[int, dict] = {}
    for s, t in flows:
        tree = trees.get(s)
        if tree is None:
            tree = trees[s] = shortest_path_tree(adjacency, weights, s, link_mask)
        hit = tree.get(t)
        out.append(None if hit is None else RoutePath((s, t), hit[1], hit[2], hit[0]))
    return out


@dataclass
class FlowRates:
    flows: list[tuple[int, int]]
    rates: np.ndarray
    objective: float = 0.0
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict[tuple[int, int], float]:
        return {f: float(q) for f, q in zip(self.flows, self.rates)}

    @property
    def total(self) -> float:
        return float(np.sum(self.rates))


def _maximize(c: np.ndarray, A, b: np.ndarray) -> tuple[np.ndarray, float]:
    """max c.x s.t. A x <= b, x >= 0 (HiGHS)."""
    if len(c) == 0:
        return np.zeros(0), 0.0
    res = linprog(-c, A_ub=A, b_ub=b, bounds=(0, None), method="highs", options=_HIGHS_OPTIONS)
    if res.status != 0:
        raise RuntimeError(f"LP solve failed: {res.message}")
    x = np.maximum(res.x, 0.0)
    return x, float(c @ x)


def _bound_rows(flows, Q, D):
    """Rows for the per-source serving and per-target demand limits."""
    rows, cols, rhs = [], [], []
    srcs: dict[int, int] = {}
    tgts: dict[int, int] = {}
    for f, (s, t) in enumerate(flows):
        if s not in srcs:
            srcs[s] = len(rhs)
            rhs.append(Q[s])
        rows.append(srcs[s])
        cols.append(f)
    for f, (s, t) in enumerate(flows):
        if t not in tgts:
            tgts[t] = len(rhs)
            rhs.append(D[t])
        rows.append(tgts[t])
        cols.append(f)
    return rows, cols, rhs


def solve_frm_relaxed(flow_weights, profile: TrafficProfile,
                      flows: Sequence[tuple[int, int]] | None = None) -> FlowRates:
    """max sum w_f q_f over the serving/demand polytope; flows with w_f <= 0 get zero."""
    flows = list(profile.flow_pairs if flows is None else flows)
    w = np.asarray(flow_weights, dtype=float)
    rates = np.zeros(len(flows))
    active = np.flatnonzero(w > 0)
    if len(active) == 0:
        return FlowRates(flows, rates, 0.0)
    sub = [flows[k] for k in active]
    Q, D = profile.serving_gbps, profile.demand_gbps
    srcs = [s for s, _ in sub]
    tgts = [t for _, t in sub]
    if len(set(srcs)) == len(srcs) and len(set(tgts)) == len(tgts):
        # constraints decouple: each flow takes its own bottleneck
        q = np.array([min(Q[s], D[t]) for s, t in sub])
    else:
        rows, cols, rhs = _bound_rows(sub, Q, D)
        A = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(rhs), len(sub)))
        q, _ = _maximize(w[active], A, np.asarray(rhs, dtype=float))
    rates[active] = q
    return FlowRates(flows, rates, float(w[active] @ q))


def capacitated_lp(flows: Sequence[tuple[int, int]], path_links: Sequence[Sequence[int] | None],
                   link_capacity: np.ndarray, profile: TrafficProfile) -> np.ndarray:
    """max sum q over routed flows with serving/demand limits and per-link capacity rows.

    ``path_links[f]`` lists the ordered-link ids of flow f's path; ``None`` pins q_f = 0.
    """
    rates = np.zeros(len(flows))
    routed = [f for f, p in enumerate(path_links) if p is not None]
    if not routed:
        return rates
    sub = [flows[f] for f in routed]
    rows, cols, rhs = _bound_rows(sub, profile.serving_gbps, profile.demand_gbps)
    link_row: dict[int, int] = {}
    for col, f in enumerate(routed):
        for k in path_links[f]:
            if k not in link_row:
                link_row[k] = len(rhs)
                rhs.append(link_capacity[k])
            rows.append(link_row[k])
            cols.append(col)
    A = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(rhs), len(sub)))
    q, _ = _maximize(np.ones(len(sub)), A, np.asarray(rhs, dtype=float))
    rates[routed] = q
    return rates


def solve_frm_capacitated(paths: Sequence[RoutePath | None], matching: Matching, graphs,
                          profile: TrafficProfile, flows: Sequence[tuple[int, int]] | None = None) -> FlowRates:
    """Throughput-maximizing rates for fixed routes over the matched links."""
    flows = list(profile.flow_pairs if flows is None else flows)
    cap = graphs.link_capacity(matching.edges)
    path_links = [None if p is None else p.link_ids for p in paths]
    for p in paths:
        if p is not None and any(cap[k] <= 0 for k in p.link_ids):
            raise ValueError(f"route for flow {p.flow} uses an unmatched link")
    rates = capacitated_lp(flows, path_links, cap, profile)
    return FlowRates(flows, rates, float(rates.sum()))

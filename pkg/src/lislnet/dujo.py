"""Lagrangian dual optimization of joint LCT matching, routing and rate allocation.

The link-rate coupling constraints are priced by one multiplier per ordered
satellite link. For fixed multipliers the relaxed problem splits into a
weighted LCT matching, one shortest-path problem per flow, and a weighted
flow-rate LP. Multipliers follow projected supergradient ascent with a
diminishing step ``alpha0 / k**beta``; the final multipliers are turned
into a feasible matching/routing/rate plan by ``convert``.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .solvers import (
    FlowRates,
    Matching,
    RoutePath,
    greedy_mwm,
    route_flows,
    solve_frm_capacitated,
    solve_frm_relaxed,
)
from .topology import ConstellationGraphs
from .traffic import TrafficProfile

logger = logging.getLogger(__name__)

Matcher = Callable[[Sequence[tuple[int, int]], np.ndarray], Matching]


@dataclass(frozen=True)
class StepSchedule:
    alpha0: float | None = None  # None -> 1 / supergradient-norm bound
    beta: float = 0.5
    iterations: int = 500

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.alpha0 is not None and not self.alpha0 > 0:
            raise ValueError("alpha0 must be positive")
        if not 0.5 <= self.beta < 1.0:
            logger.warning("beta=%g outside [0.5, 1): convergence guarantee does not apply", self.beta)

    def step_size(self, k: int, alpha0: float | None = None) -> float:
        a0 = self.alpha0 if alpha0 is None else alpha0
        return a0 / k**self.beta


@dataclass
class DualDecisions:
    matching: Matching
    routes: list[RoutePath | None]
    rates: FlowRates
    matching_weight: float
    frm_objective: float


@dataclass
class JointSolution:
    flows: list[tuple[int, int]]
    matching: Matching
    routes: dict[tuple[int, int], RoutePath]
    rates: dict[tuple[int, int], float]
    connected_pairs: list[tuple[int, int]]

    @property
    def throughput_gbps(self) -> float:
        return float(sum(self.rates.values()))

    @property
    def served_pairs(self) -> list[tuple[int, int]]:
        return [f for f in self.flows if f in self.routes]

    @property
    def unserved_flows(self) -> list[tuple[int, int]]:
        return [f for f in self.flows if f not in self.routes]

    def to_json(self) -> dict:
        return {
            "matched_pairs": [list(p) for p in self.matching.pairs],
            "routes": [{"s": f[0], "t": f[1], "nodes": list(r.nodes)} for f, r in self.routes.items()],
            "rates": [{"s": f[0], "t": f[1], "gbps": q} for f, q in self.rates.items()],
            "throughput": self.throughput_gbps,
            "unserved_flows": [list(f) for f in self.unserved_flows],
        }

    @classmethod
    def from_json(cls, data: dict, graphs: ConstellationGraphs, profile: TrafficProfile) -> "JointSolution":
        by_pair = {frozenset(p): k for k, p in enumerate(graphs.edge_pairs())}
        edges = []
        for n, m in data["matched_pairs"]:
            key = frozenset((n, m))
            if key not in by_pair:
                raise ValueError(f"matched pair {(n, m)} is not a connectable LCT pair")
            edges.append(by_pair[key])
        matching = Matching(sorted(edges), [tuple(graphs.edge_pairs()[k]) for k in sorted(edges)])
        li = graphs.sat_graph.link_index
        routes = {}
        for r in data["routes"]:
            nodes = tuple(r["nodes"])
            ids = tuple(li.get(a, -1) for a in zip(nodes[:-1], nodes[1:]))
            routes[(r["s"], r["t"])] = RoutePath((r["s"], r["t"]), nodes, ids, 0.0)
        rates = {(r["s"], r["t"]): float(r["gbps"]) for r in data["rates"]}
        cap = graphs.link_capacity(matching.edges)
        connected = [l for l, c in zip(graphs.links, cap) if c > 0]
        return cls(list(profile.flow_pairs), matching, routes, rates, connected)


def check_feasibility(sol: JointSolution, graphs: ConstellationGraphs, profile: TrafficProfile,
                      tol: float = 1e-9) -> list[str]:
    """Every violated constraint of the joint problem, as readable messages."""
    problems = []
    pairs = graphs.edge_pairs()
    seen: set[int] = set()
    for k in sol.matching.edges:
        if not 0 <= k < len(pairs):
            problems.append(f"matched edge {k} not in the LCT graph")
            continue
        for lct in pairs[k]:
            if lct in seen:
                problems.append(f"LCT {lct} matched more than once")
            seen.add(lct)
    flows = set(profile.flow_pairs)
    li = graphs.sat_graph.link_index
    load = np.zeros(graphs.num_links)
    src = np.zeros(profile.num_sats)
    dst = np.zeros(profile.num_sats)
    for f, q in sol.rates.items():
        if f not in flows:
            problems.append(f"rate given for unknown flow {f}")
            continue
        if q < -tol:
            problems.append(f"negative rate {q} on flow {f}")
        src[f[0]] += q
        dst[f[1]] += q
        if q <= tol:
            continue
        route = sol.routes.get(f)
        if route is None:
            problems.append(f"flow {f} carries {q} Gbps without a route")
            continue
        nodes = route.nodes
        if nodes[0] != f[0] or nodes[-1] != f[1] or len(set(nodes)) != len(nodes):
            problems.append(f"route of {f} is not a simple s->t path: {nodes}")
        for arc in zip(nodes[:-1], nodes[1:]):
            if arc not in li:
                problems.append(f"route of {f} uses non-neighbor arc {arc}")
            else:
                load[li[arc]] += q
    over = np.flatnonzero(src > profile.serving_gbps + tol)
    problems += [f"source {s} sends {src[s]} > Q={profile.serving_gbps[s]}" for s in over]
    over = np.flatnonzero(dst > profile.demand_gbps + tol)
    problems += [f"target {t} receives {dst[t]} > D={profile.demand_gbps[t]}" for t in over]
    cap = graphs.link_capacity([k for k in sol.matching.edges if 0 <= k < len(pairs)])
    for k in np.flatnonzero(load > cap + tol):
        problems.append(f"link {graphs.links[k]} load {load[k]} exceeds matched capacity {cap[k]}")
    return problems


def gradient_bound(graphs: ConstellationGraphs, profile: TrafficProfile) -> float:
    """Finite bound on the supergradient norm for this instance."""
    Q, D = profile.serving_gbps, profile.demand_gbps
    per_flow = sum(min(Q[s], D[t]) for s, t in profile.flow_pairs)
    flow_bound = min(per_flow, float(Q.sum()), float(D.sum()))
    cap_bound = float(graphs.bucket_total_rate.max()) if len(graphs.bucket_total_rate) else 0.0
    return math.sqrt(graphs.num_links) * max(flow_bound, cap_bound)


def default_alpha0(graphs: ConstellationGraphs, profile: TrafficProfile) -> float:
    b = gradient_bound(graphs, profile)
    return 1.0 / b if b > 0 else 1.0


def _default_matcher(edges, weights):
    return greedy_mwm(edges, weights)


def dual_value(lam, graphs: ConstellationGraphs, profile: TrafficProfile,
               matcher: Matcher | None = None, timings: dict | None = None) -> tuple[float, DualDecisions]:
    """Dual function value and the relaxed-problem decisions at ``lam``."""
    lam = np.asarray(lam, dtype=float)
    matcher = matcher or _default_matcher
    t0 = time.perf_counter()
    matching = matcher(graphs.edge_pairs(), graphs.matching_weights(lam))
    t1 = time.perf_counter()
    routes = route_flows(graphs.adjacency, lam, profile.flow_pairs)
    t2 = time.perf_counter()
    weights = np.array([-np.inf if r is None else 1.0 - r.cost for r in routes])
    rates = solve_frm_relaxed(weights, profile)
    t3 = time.perf_counter()
    if timings is not None:
        timings["mwm"] = timings.get("mwm", 0.0) + (t1 - t0) * 1e3
        timings["spf"] = timings.get("spf", 0.0) + (t2 - t1) * 1e3
        timings["frm"] = timings.get("frm", 0.0) + (t3 - t2) * 1e3
    g = -rates.objective - matching.weight
    return g, DualDecisions(matching, routes, rates, matching.weight, rates.objective)


def supergradient(lam, decisions: DualDecisions, graphs: ConstellationGraphs) -> np.ndarray:
    """Per-link routed load minus matched bucket capacity."""
    delta = -graphs.link_capacity(decisions.matching.edges)
    for route, q in zip(decisions.routes, decisions.rates.rates):
        if route is not None and q > 0:
            for k in route.link_ids:
                delta[k] += q
    return delta


def step(lam, delta, k: int, schedule: StepSchedule, alpha0: float | None = None) -> np.ndarray:
    if k < 1:
        raise ValueError("iteration index starts at 1")
    return np.maximum(np.asarray(lam) + schedule.step_size(k, alpha0) * np.asarray(delta), 0.0)


def convert(lam, graphs: ConstellationGraphs, profile: TrafficProfile,
            matcher: Matcher | None = None, timings: dict | None = None) -> JointSolution:
    """Feasible plan from multipliers: match, route over matched links, then allocate rates."""
    lam = np.asarray(lam, dtype=float)
    matcher = matcher or _default_matcher
    t0 = time.perf_counter()
    matching = matcher(graphs.edge_pairs(), graphs.matching_weights(lam))
    cap = graphs.link_capacity(matching.edges)
    t1 = time.perf_counter()
    routes = route_flows(graphs.adjacency, lam, profile.flow_pairs, link_mask=cap > 0)
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
        connected_pairs=[l for l, c in zip(graphs.links, cap) if c > 0],
    )


@dataclass
class DualTrace:
    k: list[int] = field(default_factory=list)
    g: list[float] = field(default_factory=list)
    grad_norm: list[float] = field(default_factory=list)
    throughput_gbps: list[float] = field(default_factory=list)  # nan where not converted
    wall_ms: list[float] = field(default_factory=list)

    def __len__(self):
        return len(self.k)

    @property
    def best_g(self) -> np.ndarray:
        return np.maximum.accumulate(np.asarray(self.g)) if self.g else np.zeros(0)

    def to_csv(self, record_timing: bool = True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "g", "grad_norm", "throughput_gbps", "wall_ms"])
        for row in zip(self.k, self.g, self.grad_norm, self.throughput_gbps, self.wall_ms):
            k, g, gn, tp, ms = row
            w.writerow([k, repr(g), repr(gn), "" if math.isnan(tp) else repr(tp),
                        f"{ms:.3f}" if record_timing else ""])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "DualTrace":
        tr = cls()
        for row in csv.DictReader(io.StringIO(text)):
            tr.k.append(int(row["k"]))
            tr.g.append(float(row["g"]))
            tr.grad_norm.append(float(row["grad_norm"]))
            tr.throughput_gbps.append(float(row["throughput_gbps"]) if row["throughput_gbps"] else math.nan)
            tr.wall_ms.append(float(row["wall_ms"]) if row["wall_ms"] else math.nan)
        return tr


@dataclass
class DujoResult:
    multipliers: np.ndarray
    trace: DualTrace
    solution: JointSolution
    best_solution: JointSolution
    alpha0: float
    timings_ms: dict[str, float]


def run(graphs: ConstellationGraphs, profile: TrafficProfile, schedule: StepSchedule,
        convert_every: int = 10, matcher: Matcher | None = None,
        callback: Callable[[int, np.ndarray, float, DualDecisions], None] | None = None) -> DujoResult:
    """K dual iterations from zero multipliers, then conversion of the last multipliers.

    The trace holds g at lambda^[1..K]; every ``convert_every`` iterations
    (and at k = K) the current multipliers are also converted and the
    feasible throughput recorded.
    """
    if convert_every < 1:
        raise ValueError("convert_every must be >= 1")
    alpha0 = schedule.alpha0 if schedule.alpha0 is not None else default_alpha0(graphs, profile)
    lam = np.zeros(graphs.num_links)
    trace = DualTrace()
    timings: dict[str, float] = {}
    best: JointSolution | None = None
    final: JointSolution | None = None
    K = schedule.iterations
    for k in range(1, K + 1):
        t0 = time.perf_counter()
        g, dec = dual_value(lam, graphs, profile, matcher, timings)
        t1 = time.perf_counter()
        delta = supergradient(lam, dec, graphs)
        if callback is not None:
            callback(k, lam, g, dec)
        next_lam = step(lam, delta, k, schedule, alpha0) if k < K else lam
        t2 = time.perf_counter()
        timings["sg"] = timings.get("sg", 0.0) + (t2 - t1) * 1e3
        tp = math.nan
        if k % convert_every == 0 or k == K:
            sol = convert(lam, graphs, profile, matcher, timings)
            tp = sol.throughput_gbps
            if best is None or tp > best.throughput_gbps:
                best = sol
            if k == K:
                final = sol
        trace.k.append(k)
        trace.g.append(float(g))
        trace.grad_norm.append(float(np.linalg.norm(delta)))
        trace.throughput_gbps.append(tp)
        trace.wall_ms.append((time.perf_counter() - t0) * 1e3)
        lam = next_lam
    assert final is not None and best is not None
    return DujoResult(lam, trace, final, best, alpha0, timings)


def solution_json(sol: JointSolution) -> str:
    return json.dumps(sol.to_json(), indent=1, sort_keys=True)

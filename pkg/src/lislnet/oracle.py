"""Brute-force reference solvers for tiny instances.

Nothing here is meant to scale; these routines exist so that the fast
kernels can be checked against exhaustive enumeration.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .dujo import JointSolution
from .solvers import Matching, RoutePath, capacitated_lp
from .topology import ConstellationGraphs, LctEdge
from .traffic import TrafficProfile

MAX_SATS = 8
MAX_EDGES = 10
MAX_FLOWS = 4
MAX_MWM_EDGES = 20


class InstanceTooLarge(ValueError):
    pass


# ---------------------------------------------------------------------------
# Matchings
# ---------------------------------------------------------------------------

def enumerate_matchings(edges: Sequence[tuple[int, int]]) -> Iterator[tuple[int, ...]]:
    """Every matching (as sorted edge-index tuples), including the empty one."""
    def rec(k: int, used: frozenset, chosen: tuple):
        if k == len(edges):
            yield chosen
            return
        yield from rec(k + 1, used, chosen)
        n, m = edges[k]
        if n not in used and m not in used:
            yield from rec(k + 1, used | {n, m}, chosen + (k,))
    yield from rec(0, frozenset(), ())


def maximal_matchings(edges: Sequence[tuple[int, int]]) -> list[tuple[int, ...]]:
    out = []
    for mt in enumerate_matchings(edges):
        used = {v for k in mt for v in edges[k]}
        if all(n in used or m in used for k, (n, m) in enumerate(edges) if k not in mt):
            out.append(mt)
    return out


def exact_mwm(edges: Sequence[tuple[int, int]], weights) -> Matching:
    """Maximum-weight matching by exhaustive search (at most 20 edges).

    Ties go to the lexicographically smallest edge-index tuple.
    """
    if len(edges) > MAX_MWM_EDGES:
        raise InstanceTooLarge(f"exact_mwm supports at most {MAX_MWM_EDGES} edges, got {len(edges)}")
    w = [float(x) for x in weights]
    best: tuple[int, ...] = ()
    best_w = 0.0
    for mt in enumerate_matchings(edges):
        total = sum(w[k] for k in mt)
        if total > best_w or (total == best_w and mt < best):
            best, best_w = mt, total
    return Matching(list(best), [tuple(edges[k]) for k in best], best_w)


# ---------------------------------------------------------------------------
# Paths
# ---------------------------------------------------------------------------

def enumerate_paths(links: Sequence[tuple[int, int]], s: int, t: int,
                    max_hops: int | None = None) -> list[tuple[int, ...]]:
    """All simple s->t paths (node tuples) with at most ``max_hops`` arcs."""
    adj: dict[int, list[int]] = {}
    for i, j in links:
        adj.setdefault(i, []).append(j)
    for v in adj.values():
        v.sort()
    if s == t:
        return [(s,)]
    out = []
    limit = max_hops if max_hops is not None else len({v for l in links for v in l})

    def dfs(path: list[int]):
        if len(path) - 1 >= limit:
            return
        for v in adj.get(path[-1], []):
            if v in path:
                continue
            if v == t:
                out.append(tuple(path + [v]))
            else:
                path.append(v)
                dfs(path)
                path.pop()

    dfs([s])
    return out


def path_cost(nodes: Sequence[int], link_index: dict, weights) -> float:
    return float(sum(weights[link_index[a]] for a in zip(nodes[:-1], nodes[1:])))


# ---------------------------------------------------------------------------
# Rational LP by vertex enumeration
# ---------------------------------------------------------------------------

def _solve_exact(M: list[list[Fraction]], r: list[Fraction]) -> list[Fraction] | None:
    n = len(M)
    A = [row[:] + [r[i]] for i, row in enumerate(M)]
    for col in range(n):
        piv = next((i for i in range(col, n) if A[i][col] != 0), None)
        if piv is None:
            return None
        A[col], A[piv] = A[piv], A[col]
        p = A[col][col]
        for i in range(n):
            if i != col and A[i][col] != 0:
                f = A[i][col] / p
                A[i] = [a - f * b for a, b in zip(A[i], A[col])]
    return [A[i][n] / A[i][i] for i in range(n)]


def lp_vertex_enumeration(c, A, b) -> tuple[Fraction, list[Fraction]]:
    """max c.x s.t. A x <= b, x >= 0, by enumerating basic feasible solutions.

    Exact rational arithmetic; assumes the LP is bounded and feasible.
    """
    c = [Fraction(x) for x in c]
    n = len(c)
    if n == 0:
        return Fraction(0), []
    rows = [[Fraction(x) for x in row] for row in np.asarray(A, dtype=float).reshape(-1, n).tolist()]
    rhs = [Fraction(x) for x in np.asarray(b, dtype=float).reshape(-1).tolist()]
    for i in range(n):
        rows.append([Fraction(-1 if j == i else 0) for j in range(n)])
        rhs.append(Fraction(0))
    best_val = None
    best_x: list[Fraction] = []
    for active in itertools.combinations(range(len(rows)), n):
        x = _solve_exact([rows[i] for i in active], [rhs[i] for i in active])
        if x is None:
            continue
        if all(sum(a * xi for a, xi in zip(row, x)) <= r for row, r in zip(rows, rhs)):
            val = sum(ci * xi for ci, xi in zip(c, x))
            if best_val is None or val > best_val:
                best_val, best_x = val, x
    if best_val is None:
        raise ValueError("LP has no basic feasible solution")
    return best_val, best_x


def transportation_matrix(flows, Q, D):
    """Dense (A, b) for the serving/demand limits of ``flows``."""
    srcs = sorted({s for s, _ in flows})
    tgts = sorted({t for _, t in flows})
    A = np.zeros((len(srcs) + len(tgts), len(flows)))
    for f, (s, t) in enumerate(flows):
        A[srcs.index(s), f] = 1
        A[len(srcs) + tgts.index(t), f] = 1
    b = np.array([Q[s] for s in srcs] + [D[t] for t in tgts], dtype=float)
    return A, b


def capacitated_matrix(flows, path_links, link_capacity, Q, D):
    A, b = transportation_matrix(flows, Q, D)
    used = sorted({k for p in path_links for k in p})
    L = np.zeros((len(used), len(flows)))
    for f, p in enumerate(path_links):
        for k in p:
            L[used.index(k), f] = 1
    return np.vstack([A, L]), np.concatenate([b, [link_capacity[k] for k in used]])


def rational_feasible(A, b, x, tol: Fraction = Fraction(1, 10**9)) -> bool:
    """Exact check of A x <= b + tol and x >= -tol."""
    xs = [Fraction(float(v)) for v in x]
    if any(v < -tol for v in xs):
        return False
    for row, r in zip(np.asarray(A, dtype=float).tolist(), np.asarray(b, dtype=float).tolist()):
        if sum(Fraction(a) * v for a, v in zip(row, xs)) > Fraction(r) + tol:
            return False
    return True


# ---------------------------------------------------------------------------
# Tiny joint instances
# ---------------------------------------------------------------------------

@dataclass
class TinyInstance:
    sats: int
    lct_edges: list[dict]
    flows: list[tuple[int, int]]
    Q: list[float]
    D: list[float]
    num_lcts: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.flows = [(int(s), int(t)) for s, t in self.flows]
        if self.sats > MAX_SATS or len(self.lct_edges) > MAX_EDGES or len(self.flows) > MAX_FLOWS:
            raise InstanceTooLarge(
                f"tiny instances allow <= {MAX_SATS} sats, {MAX_EDGES} LCT edges, {MAX_FLOWS} flows")
        if len(self.Q) != self.sats or len(self.D) != self.sats:
            raise ValueError("Q and D need one entry per satellite")

    @classmethod
    def from_json(cls, data: dict | str | Path) -> "TinyInstance":
        if isinstance(data, (str, Path)):
            data = json.loads(Path(data).read_text())
        return cls(int(data["sats"]), list(data["lct_edges"]),
                   [(f["s"], f["t"]) for f in data["flows"]], list(data["Q"]), list(data["D"]))

    def to_json(self) -> dict:
        return {"sats": self.sats, "lct_edges": self.lct_edges,
                "flows": [{"s": s, "t": t} for s, t in self.flows], "Q": self.Q, "D": self.D}

    def build(self) -> tuple[ConstellationGraphs, TrafficProfile]:
        edges = [LctEdge(int(e["n"]), int(e["m"]), int(e["i"]), int(e["j"]), float(e["rate"]))
                 for e in self.lct_edges]
        graphs = ConstellationGraphs(self.sats, edges, num_lcts=self.num_lcts)
        profile = TrafficProfile.explicit(self.Q, self.D, self.flows)
        profile.validate()
        return graphs, profile


def tiny_instance() -> TinyInstance:
    """Three satellites in a line; one 5 Gbps LCT pair per neighbor pair; flow 0 -> 2."""
    return TinyInstance(
        sats=3,
        lct_edges=[{"n": 0, "m": 3, "i": 0, "j": 1, "rate": 5.0},
                   {"n": 2, "m": 5, "i": 1, "j": 2, "rate": 5.0}],
        flows=[(0, 2)], Q=[10.0, 0.0, 0.0], D=[0.0, 0.0, 7.0], num_lcts=6,
    )


def random_tiny_instance(rng: np.random.Generator, sats: int = 5, lcts_per_sat: int = 2,
                         edges: int = 7, flows: int = 3) -> TinyInstance:
    """Random instance with half-integer rates and bounds (exactly representable)."""
    lct_owner = np.repeat(np.arange(sats), lcts_per_sat)
    n_lcts = sats * lcts_per_sat
    cand = [(n, m) for n in range(n_lcts) for m in range(n + 1, n_lcts) if lct_owner[n] != lct_owner[m]]
    pick = rng.choice(len(cand), size=min(edges, len(cand)), replace=False)
    lct_edges = []
    for k in sorted(pick.tolist()):
        n, m = cand[k]
        lct_edges.append({"n": n, "m": m, "i": int(lct_owner[n]), "j": int(lct_owner[m]),
                          "rate": float(rng.integers(2, 21)) / 2})
    roles = rng.permutation(sats)
    n_src = max(1, sats // 2 - int(rng.integers(0, 2)))
    servers, demanders = roles[:n_src], roles[n_src:]
    Q = [0.0] * sats
    D = [0.0] * sats
    for s in servers:
        Q[int(s)] = float(rng.integers(2, 31)) / 2
    for t in demanders:
        D[int(t)] = float(rng.integers(2, 31)) / 2
    all_pairs = [(int(s), int(t)) for s in servers for t in demanders]
    sel = rng.choice(len(all_pairs), size=min(flows, len(all_pairs)), replace=False)
    fl = sorted(all_pairs[k] for k in sel.tolist())
    # demanders without flows carry no demand so every demand has a path option
    used_t = {t for _, t in fl}
    used_s = {s for s, _ in fl}
    D = [d if i in used_t else 0.0 for i, d in enumerate(D)]
    Q = [q if i in used_s else 0.0 for i, q in enumerate(Q)]
    return TinyInstance(sats, lct_edges, fl, Q, D, num_lcts=n_lcts)


def brute_force_joint(instance: TinyInstance | tuple[ConstellationGraphs, TrafficProfile],
                      max_hops: int | None = None) -> tuple[float, JointSolution]:
    """Exact optimum of the joint matching/routing/rate problem by enumeration.

    Enumerates maximal matchings (adding a matched pair never removes
    capacity), every simple-path assignment over the matched links, and
    solves the rate LP for each combination.
    """
    if isinstance(instance, TinyInstance):
        graphs, profile = instance.build()
    else:
        graphs, profile = instance
        if graphs.num_sats > MAX_SATS or len(graphs.edges) > MAX_EDGES or len(profile.flow_pairs) > MAX_FLOWS:
            raise InstanceTooLarge("instance exceeds tiny bounds")
    flows = list(profile.flow_pairs)
    Q, D = profile.serving_gbps, profile.demand_gbps
    upper = min(float(Q.sum()), float(D.sum()), sum(min(Q[s], D[t]) for s, t in flows)) if flows else 0.0
    li = graphs.sat_graph.link_index
    edges = graphs.edge_pairs()

    best_val = -1.0
    best = None
    for mt in maximal_matchings(edges):
        cap = graphs.link_capacity(list(mt))
        lp_links = [l for l, c in zip(graphs.links, cap) if c > 0]
        options = []
        for s, t in flows:
            paths = enumerate_paths(lp_links, s, t, max_hops)
            options.append([tuple(li[a] for a in zip(p[:-1], p[1:])) for p in paths] or [None])
            options[-1] = [(p, nodes) for p, nodes in zip(options[-1], paths or [None])]
        for combo in itertools.product(*options):
            path_links = [p for p, _ in combo]
            rates = capacitated_lp(flows, path_links, cap, profile)
            val = float(rates.sum())
            if val > best_val + 1e-12:
                best_val = val
                best = (mt, combo, rates, cap)
            if best_val >= upper - 1e-12:
                break
        if best_val >= upper - 1e-12:
            break

    if best is None:
        return 0.0, JointSolution(flows, Matching([], []), {}, {f: 0.0 for f in flows}, [])
    mt, combo, rates, cap = best
    routed = [(f, p, nodes) for f, (p, nodes) in zip(flows, combo) if p is not None]
    A, b = capacitated_matrix([f for f, _, _ in routed], [p for _, p, _ in routed], cap, Q, D)
    x = [rates[flows.index(f)] for f, _, _ in routed]
    if routed and not rational_feasible(A, b, x):
        raise RuntimeError("oracle LP vertex failed the rational feasibility re-check")
    witness = JointSolution(
        flows=flows,
        matching=Matching(list(mt), [edges[k] for k in mt]),
        routes={f: RoutePath(f, nodes, p, 0.0) for f, p, nodes in routed},
        rates={f: float(q) for f, q in zip(flows, rates)},
        connected_pairs=[l for l, c in zip(graphs.links, cap) if c > 0],
    )
    return max(best_val, 0.0), witness

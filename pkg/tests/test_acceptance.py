"""End-to-end acceptance checks. Each test prints one PASS/FAIL line."""

import itertools
import json
import math
import time

import numpy as np
import pytest
from scipy import integrate

from lislnet import dujo, oracle
from lislnet.cli import build_scenario, run_methods, run_scenario
from lislnet.config import ScenarioConfig
from lislnet.dujo import StepSchedule, check_feasibility
from lislnet.optics import BeamParams, beam_radius, effective_rate, intensity, jitter_quantile
from lislnet.solvers import capacitated_lp, dijkstra_spf, greedy_mwm, solve_frm_relaxed
from lislnet.traffic import TrafficProfile

from conftest import CONFIG_DIR, record

# effective rate at 1000 km for the default beam, from an independent transcription of the formulas
FROZEN_RATE_1000KM = 2778351755.3570075
SEEDS = range(5)


def _walker_config(**overrides) -> ScenarioConfig:
    return ScenarioConfig.load(CONFIG_DIR / "walker200.json", overrides)


def test_oracle_sandwich():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    checked = lower_bad = upper_bad = greedy_upper_bad = 0
    for _ in range(60):
        inst = oracle.random_tiny_instance(rng, sats=int(rng.integers(3, 9)), edges=int(rng.integers(2, 11)),
                                           flows=int(rng.integers(1, 5)))
        graphs, prof = inst.build()
        opt, _ = oracle.brute_force_joint(inst)
        iterates = []
        res = dujo.run(graphs, prof, StepSchedule(iterations=40), convert_every=1,
                       callback=lambda k, lam, g, dec: iterates.append((lam.copy(), g)))
        for (lam, g_greedy), tp in zip(iterates, res.trace.throughput_gbps):
            g_exact, _ = dujo.dual_value(lam, graphs, prof, matcher=oracle.exact_mwm)
            checked += 1
            lower_bad += tp > opt + 1e-9
            upper_bad += opt > -g_exact + 1e-9
            greedy_upper_bad += opt > -g_greedy + 1e-9
    elapsed = time.perf_counter() - t0
    ok = lower_bad == 0 and upper_bad == 0 and elapsed < 60
    record(1, ok, f"{checked} iterates on 60 instances: feasible>opt {lower_bad}, opt>-g {upper_bad} "
                  f"(greedy-matching g: {greedy_upper_bad}), {elapsed:.1f}s")
    assert ok


def test_tiny_convergence():
    t0 = time.perf_counter()
    graphs, prof = oracle.tiny_instance().build()
    res = dujo.run(graphs, prof, StepSchedule(alpha0=0.05, beta=0.5, iterations=2000), convert_every=50)
    grid = np.round(np.arange(0.0, 1.0 + 1e-9, 0.1), 12)
    dual_opt = max(dujo.dual_value(np.array(lam), graphs, prof, matcher=oracle.exact_mwm)[0]
                   for lam in itertools.product(grid, repeat=graphs.num_links))
    best = float(res.trace.best_g[-1])
    tp = res.solution.throughput_gbps
    elapsed = time.perf_counter() - t0
    ok = abs(tp - 5.0) <= 1e-6 and abs(best - dual_opt) <= 1e-2 and elapsed < 10
    record(2, ok, f"throughput {tp:.9f} Gbps, best g {best:.6f} vs grid optimum {dual_opt:.6f}, {elapsed:.1f}s")
    assert ok


def test_supergradient_definition():
    t0 = time.perf_counter()
    rng = np.random.default_rng(99)
    bad = greedy_bad = 0
    for _ in range(200):
        inst = oracle.random_tiny_instance(rng, sats=int(rng.integers(3, 7)), edges=int(rng.integers(3, 9)),
                                           flows=int(rng.integers(1, 4)))
        graphs, prof = inst.build()
        lam, lam2 = rng.uniform(0, 1.5, (2, graphs.num_links))
        g, dec = dujo.dual_value(lam, graphs, prof, matcher=oracle.exact_mwm)
        g2, _ = dujo.dual_value(lam2, graphs, prof, matcher=oracle.exact_mwm)
        bad += g2 > g + dujo.supergradient(lam, dec, graphs) @ (lam2 - lam) + 1e-9
        gg, dg = dujo.dual_value(lam, graphs, prof)
        gg2, _ = dujo.dual_value(lam2, graphs, prof)
        greedy_bad += gg2 > gg + dujo.supergradient(lam, dg, graphs) @ (lam2 - lam) + 1e-9
    elapsed = time.perf_counter() - t0
    ok = bad == 0 and elapsed < 30
    record(3, ok, f"200 pairs, {bad} violations with exact matching "
                  f"(greedy matching: {greedy_bad}), {elapsed:.1f}s")
    assert ok


def test_clipping_monotone():
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    bad = greedy_bad = 0
    for _ in range(100):
        inst = oracle.random_tiny_instance(rng, sats=int(rng.integers(3, 7)), edges=int(rng.integers(3, 11)),
                                           flows=int(rng.integers(1, 5)))
        graphs, prof = inst.build()
        assert graphs.num_lcts <= 12
        lam = rng.uniform(0, 3, graphs.num_links)
        clipped = np.minimum(lam, 1.0)
        bad += (dujo.dual_value(clipped, graphs, prof, matcher=oracle.exact_mwm)[0]
                < dujo.dual_value(lam, graphs, prof, matcher=oracle.exact_mwm)[0] - 1e-9)
        greedy_bad += dujo.dual_value(clipped, graphs, prof)[0] < dujo.dual_value(lam, graphs, prof)[0] - 1e-9
    elapsed = time.perf_counter() - t0
    ok = bad == 0 and elapsed < 60
    record(4, ok, f"100 draws, {bad} violations with exact matching (greedy statistic: {greedy_bad}), {elapsed:.1f}s")
    assert ok


def test_kernel_oracles():
    t0 = time.perf_counter()
    rng = np.random.default_rng(31)
    mwm_bad = 0
    for _ in range(200):
        n_lcts = int(rng.integers(2, 13))
        cand = list(itertools.combinations(range(n_lcts), 2))
        k = int(rng.integers(1, min(len(cand), 14) + 1))
        edges = [cand[i] for i in sorted(rng.choice(len(cand), k, replace=False))]
        w = rng.uniform(0, 1, k)
        mwm_bad += greedy_mwm(edges, w).weight < 0.5 * oracle.exact_mwm(edges, w).weight - 1e-12
    spf_bad = 0
    for _ in range(200):
        n = int(rng.integers(2, 11))
        links = [(i, j) for i in range(n) for j in range(n) if i != j and rng.random() < 0.35]
        w = rng.uniform(0, 1, len(links))
        li = {l: k for k, l in enumerate(links)}
        s, t = rng.choice(n, 2, replace=False)
        paths = oracle.enumerate_paths(links, int(s), int(t))
        got = dijkstra_spf(links, w, int(s), int(t), n)
        if not paths:
            spf_bad += got is not None
        else:
            spf_bad += got is None or abs(got.cost - min(oracle.path_cost(p, li, w) for p in paths)) > 1e-12
    lp_bad = 0
    for _ in range(100):
        n_src, n_dst = int(rng.integers(1, 3)), int(rng.integers(1, 3))
        Q = np.r_[rng.integers(1, 20, n_src) / 2, np.zeros(n_dst)]
        D = np.r_[np.zeros(n_src), rng.integers(1, 20, n_dst) / 2]
        flows = [(s, n_src + t) for s in range(n_src) for t in range(n_dst)]
        prof = TrafficProfile.explicit(Q, D, flows)
        w = rng.integers(-3, 9, len(flows)) / 4
        active = [k for k in range(len(flows)) if w[k] > 0]
        A, b = oracle.transportation_matrix([flows[k] for k in active], Q, D)
        ref = float(oracle.lp_vertex_enumeration(w[active], A, b)[0]) if active else 0.0
        lp_bad += abs(solve_frm_relaxed(w, prof).objective - ref) > 1e-9
        n_links = 5
        cap = rng.integers(1, 16, n_links) / 2
        paths = [tuple(sorted(rng.choice(n_links, int(rng.integers(1, 4)), replace=False).tolist())) for _ in flows]
        A, b = oracle.capacitated_matrix(flows, paths, cap, Q, D)
        ref = float(oracle.lp_vertex_enumeration(np.ones(len(flows)), A, b)[0])
        lp_bad += abs(capacitated_lp(flows, paths, cap, prof).sum() - ref) > 1e-9
    elapsed = time.perf_counter() - t0
    ok = mwm_bad == 0 and spf_bad == 0 and lp_bad == 0 and elapsed < 120
    record(5, ok, f"greedy<half-exact {mwm_bad}/200, dijkstra mismatches {spf_bad}/200, "
                  f"LP mismatches {lp_bad}/200, {elapsed:.1f}s")
    assert ok


def test_optics_regression():
    t0 = time.perf_counter()
    p = BeamParams()
    rate = effective_rate(p, 1e6)
    rate_ok = abs(rate - FROZEN_RATE_1000KM) <= 1e-3 * FROZEN_RATE_1000KM
    power_ok = True
    for z in (0.0, 1e3, 1e6):
        w = beam_radius(p, z)
        total, _ = integrate.quad(lambda y: intensity(p, y, z) * 2 * math.pi * y, 0, 12 * w, epsrel=1e-10)
        power_ok &= abs(total - p.power_w) <= 1e-3 * p.power_w
    n = 1_000_000
    frac = float(np.mean(np.random.default_rng(8).rayleigh(p.jitter_sigma_rad, n) > jitter_quantile(p)))
    ci = 3 * math.sqrt(p.outage_eps * (1 - p.outage_eps) / n)
    mc_ok = abs(frac - p.outage_eps) <= ci
    elapsed = time.perf_counter() - t0
    ok = rate_ok and power_ok and mc_ok and elapsed < 10
    record(6, ok, f"r(1000 km) = {rate / 1e9:.6f} Gbps (z_R {p.rayleigh_range_m:.2f} m), power integral ok={power_ok}, "
                  f"tail fraction {frac:.6f} within +/-{ci:.6f}, {elapsed:.1f}s")
    assert ok


@pytest.fixture(scope="module")
def walker_runs():
    """Walker 10x20 scenario, all methods at beta 0.5 plus DuJo at beta 0.9, five seeds."""
    t0 = time.perf_counter()
    runs = []
    for seed in SEEDS:
        cfg = _walker_config(seed=seed, **{"output.record_timing": False})
        sc = build_scenario(cfg)
        rows, sols, trace = run_methods(cfg, sc)
        slow_cfg = cfg.with_overrides({"schedule.beta": 0.9, "methods": ["dujo"]})
        _, _, slow_trace = run_methods(slow_cfg, sc)
        for sol in sols.values():
            assert check_feasibility(sol, sc.graphs, sc.profile) == []
        runs.append({"seed": seed, "throughput": {r["method"]: float(r["throughput_gbps"]) for r in rows},
                     "trace": trace, "slow_trace": slow_trace})
    return runs, time.perf_counter() - t0


def test_baseline_dominance(walker_runs):
    runs, elapsed = walker_runs
    margins = []
    ok = elapsed < 600
    for r in runs:
        tp = r["throughput"]
        m = min(tp["dujo"] - tp[b] for b in ("mrate", "grid", "rand"))
        margins.append(m)
        ok &= m > 0
    gains = [r["throughput"]["dujo"] / max(r["throughput"][b] for b in ("mrate", "grid", "rand")) - 1 for r in runs]
    record(7, ok, f"DuJo minus best baseline per seed {[round(m, 3) for m in margins]} Gbps "
                  f"(gain over best baseline {min(gains):.0%}..{max(gains):.0%}), {elapsed:.0f}s")
    assert ok


def test_convergence_trace_shape(walker_runs):
    runs, _ = walker_runs
    monotone = all(np.all(np.diff(r["trace"].best_g) >= 0) for r in runs)
    # equal solutions can differ in the last bit through LP summation order
    wins = sum(r["trace"].throughput_gbps[-1] >= r["slow_trace"].throughput_gbps[-1] * (1 - 1e-9) for r in runs)
    ok = monotone and wins >= 4
    pairs = [(float(r["trace"].throughput_gbps[-1]), float(r["slow_trace"].throughput_gbps[-1])) for r in runs]
    record(8, ok, f"best-g nondecreasing={monotone}; beta 0.5 >= beta 0.9 at k=500 on {wins}/5 seeds {pairs}")
    assert ok


def test_complexity_scaling():
    t0 = time.perf_counter()
    sizes, per_iter = [], []
    for n in (50, 100, 200):
        cfg = _walker_config(subsample=n, **{"schedule.iterations": 60, "schedule.convert_every": 1000,
                                            "methods": ["dujo"]})
        sc = build_scenario(cfg)
        dujo.run(sc.graphs, sc.profile, StepSchedule(iterations=5))  # warm-up
        res = dujo.run(sc.graphs, sc.profile, StepSchedule(iterations=60), convert_every=1000)
        sizes.append(n)
        per_iter.append(float(np.median(res.trace.wall_ms[:-1])))
    slope = float(np.polyfit(np.log(sizes), np.log(per_iter), 1)[0])
    elapsed = time.perf_counter() - t0
    ok = slope <= 2.2 and elapsed < 900
    record(9, ok, f"per-iteration ms {dict(zip(sizes, [round(t, 2) for t in per_iter]))}, "
                  f"log-log slope {slope:.2f}, {elapsed:.0f}s")
    assert ok


def test_determinism(tmp_path):
    cfg = _walker_config(**{"schedule.iterations": 100, "output.record_timing": False})
    run_scenario(cfg, tmp_path / "a")
    run_scenario(cfg, tmp_path / "b")
    same = all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
               for f in ("summary.csv", "trace_dujo.csv"))
    tiny = json.loads((CONFIG_DIR / "tiny.json").read_text())
    record(10, same, "summary.csv and trace_dujo.csv byte-identical across two runs of the walker scenario")
    assert same and tiny["output"]["record_timing"] is False

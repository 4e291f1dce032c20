import json
import logging
import math

import numpy as np
import pytest

from lislnet import dujo, oracle
from lislnet.dujo import DualDecisions, DualTrace, JointSolution, StepSchedule, check_feasibility
from lislnet.solvers import FlowRates, Matching


def test_dual_value_tiny_at_zero(tiny_graphs):
    graphs, prof = tiny_graphs
    assert graphs.links == [(0, 1), (1, 0), (1, 2), (2, 1)]
    g, dec = dujo.dual_value(np.zeros(4), graphs, prof)
    assert g == -7.0
    assert dec.matching_weight == 0.0 and dec.rates.rates.tolist() == [7.0]
    assert dujo.supergradient(np.zeros(4), dec, graphs).tolist() == [2.0, -5.0, 2.0, -5.0]


def test_dual_value_tiny_at_one(tiny_graphs):
    graphs, prof = tiny_graphs
    g, dec = dujo.dual_value(np.ones(4), graphs, prof)
    assert g == -20.0
    assert dec.routes[0].cost == 2.0 and dec.rates.rates.tolist() == [0.0]


def test_supergradient_empty_decisions(tiny_graphs):
    graphs, prof = tiny_graphs
    dec = DualDecisions(Matching([], []), [None], FlowRates([(0, 2)], np.zeros(1)), 0.0, 0.0)
    assert dujo.supergradient(np.zeros(4), dec, graphs).tolist() == [0.0] * 4


def test_supergradient_inequality_tiny(tiny_graphs):
    graphs, prof = tiny_graphs
    rng = np.random.default_rng(0)
    for _ in range(100):
        lam, lam2 = rng.uniform(0, 1.5, 4), rng.uniform(0, 1.5, 4)
        g, dec = dujo.dual_value(lam, graphs, prof)
        g2, _ = dujo.dual_value(lam2, graphs, prof)
        assert g2 <= g + dujo.supergradient(lam, dec, graphs) @ (lam2 - lam) + 1e-9


def test_step_examples():
    sch = StepSchedule(alpha0=0.1, beta=0.5)
    assert dujo.step([0.5], [-1.0], 1, sch)[0] == pytest.approx(0.4)
    assert dujo.step([0.05], [-1.0], 1, sch)[0] == 0.0
    assert sch.step_size(4) == pytest.approx(0.05)
    with pytest.raises(ValueError):
        dujo.step([0.0], [1.0], 0, sch)


def test_schedule_validation(caplog):
    with pytest.raises(ValueError):
        StepSchedule(iterations=0)
    with pytest.raises(ValueError):
        StepSchedule(alpha0=0.0)
    with caplog.at_level(logging.WARNING):
        StepSchedule(beta=1.2)
    assert "beta" in caplog.text


def test_run_tiny(tiny_graphs):
    graphs, prof = tiny_graphs
    res = dujo.run(graphs, prof, StepSchedule(alpha0=0.05, beta=0.5, iterations=200))
    assert res.solution.throughput_gbps == pytest.approx(5.0, abs=1e-9)
    assert check_feasibility(res.solution, graphs, prof) == []
    assert np.all(np.diff(res.trace.best_g) >= 0)
    assert len(res.trace) == 200
    assert not math.isnan(res.trace.throughput_gbps[-1])
    assert math.isnan(res.trace.throughput_gbps[0])


def test_run_single_iteration_converts_zero(tiny_graphs):
    graphs, prof = tiny_graphs
    res = dujo.run(graphs, prof, StepSchedule(alpha0=0.05, iterations=1))
    at_zero = dujo.convert(np.zeros(graphs.num_links), graphs, prof)
    assert res.solution.to_json() == at_zero.to_json()
    assert res.trace.g == [-7.0]


def test_convert_tiny(tiny_graphs):
    graphs, prof = tiny_graphs
    lam = np.array([1.0, 0.0, 1.0, 0.0])
    sol = dujo.convert(lam, graphs, prof)
    assert sorted(sol.matching.edges) == [0, 1]
    assert sol.routes[(0, 2)].nodes == (0, 1, 2)
    assert sol.throughput_gbps == pytest.approx(5.0)
    assert dujo.convert(np.zeros(4), graphs, prof).throughput_gbps > 0


@pytest.mark.parametrize("seed", range(10))
def test_duality_sandwich_random_lambda(seed):
    rng = np.random.default_rng(seed)
    inst = oracle.random_tiny_instance(rng)
    graphs, prof = inst.build()
    opt, _ = oracle.brute_force_joint(inst)
    for _ in range(10):
        lam = rng.uniform(0, 1.2, graphs.num_links) * (rng.random(graphs.num_links) < 0.7)
        g, _ = dujo.dual_value(lam, graphs, prof, matcher=oracle.exact_mwm)
        sol = dujo.convert(lam, graphs, prof)
        assert check_feasibility(sol, graphs, prof) == []
        assert sol.throughput_gbps <= opt + 1e-9
        assert opt <= -g + 1e-9


@pytest.mark.parametrize("seed", range(5))
def test_supergradient_norm_bounded(seed):
    inst = oracle.random_tiny_instance(np.random.default_rng(seed))
    graphs, prof = inst.build()
    bound = dujo.gradient_bound(graphs, prof)
    norms = []
    dujo.run(graphs, prof, StepSchedule(iterations=100),
             callback=lambda k, lam, g, dec: norms.append(np.linalg.norm(dujo.supergradient(lam, dec, graphs))))
    assert max(norms) <= bound + 1e-9


def test_run_deterministic():
    inst = oracle.random_tiny_instance(np.random.default_rng(3))
    graphs, prof = inst.build()
    a = dujo.run(graphs, prof, StepSchedule(iterations=50), convert_every=5)
    b = dujo.run(graphs, prof, StepSchedule(iterations=50), convert_every=5)
    assert a.trace.to_csv(record_timing=False) == b.trace.to_csv(record_timing=False)
    assert a.multipliers.tobytes() == b.multipliers.tobytes()


def test_trace_csv_round_trip():
    tr = DualTrace([1, 2], [-7.0, -6.6000000000000005], [7.6, 7.6], [math.nan, 5.0], [0.5, 0.25])
    text = tr.to_csv()
    assert text.splitlines()[0] == "k,g,grad_norm,throughput_gbps,wall_ms"
    back = DualTrace.from_csv(text)
    assert back.g == tr.g and back.k == tr.k
    assert math.isnan(back.throughput_gbps[0]) and back.throughput_gbps[1] == 5.0
    assert DualTrace.from_csv(tr.to_csv(record_timing=False)).g == tr.g


def test_solution_json_round_trip(tiny_graphs):
    graphs, prof = tiny_graphs
    sol = dujo.convert(np.array([1.0, 0.0, 1.0, 0.0]), graphs, prof)
    data = json.loads(dujo.solution_json(sol))
    assert set(data) == {"matched_pairs", "routes", "rates", "throughput", "unserved_flows"}
    back = JointSolution.from_json(data, graphs, prof)
    assert back.to_json() == sol.to_json()
    assert data["throughput"] == sum(r["gbps"] for r in data["rates"])


def test_feasibility_checker_flags_violations(tiny_graphs):
    graphs, prof = tiny_graphs
    sol = dujo.convert(np.array([1.0, 0.0, 1.0, 0.0]), graphs, prof)
    sol.rates[(0, 2)] = 6.0
    assert any("exceeds matched capacity" in p for p in check_feasibility(sol, graphs, prof))
    sol.rates[(0, 2)] = 8.0
    assert any("> D=" in p for p in check_feasibility(sol, graphs, prof))
    sol.matching = Matching([0, 0], [(0, 3), (0, 3)])
    assert any("more than once" in p for p in check_feasibility(sol, graphs, prof))

"""Command-line runner: ``run``, ``sweep``, ``oracle`` and ``validate``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import dujo, oracle
from .baselines import BaselineScheme, run_baseline
from .config import ConfigError, ScenarioConfig, parse_override_value
from .dujo import JointSolution, StepSchedule, check_feasibility, solution_json
from .scenario import (
    GroundSite,
    SatelliteState,
    SimulationEpoch,
    load_sites,
    load_snapshot,
    load_tle_file,
    propagate_all,
    synthetic_sites,
    walker_delta,
)
from .topology import ConstellationGraphs
from .traffic import TrafficProfile, build_flow_pairs, build_profile

logger = logging.getLogger(__name__)

STAGES = ("mwm", "spf", "frm", "sg", "p_mwm", "p_spf", "p_frm")
SUMMARY_FIELDS = ["method", "I", "N", "E", "F", "throughput_gbps", "wall_ms_total"] + [f"ms_{s}" for s in STAGES]
SWEEP_AXES = {
    "satellites": "subsample",
    "lcts": "lct.per_sat",
    "for_angle": "lct.for_half_angle_deg",
}
BASELINE_RULES = {"mrate": "max_rate", "grid": "grid", "rand": "random"}


@dataclass
class Scenario:
    states: list[SatelliteState]
    sites: list[GroundSite]
    graphs: ConstellationGraphs
    profile: TrafficProfile
    epoch: SimulationEpoch


def load_constellation(cfg: ScenarioConfig, epoch: SimulationEpoch) -> list[SatelliteState]:
    src = cfg.data["source"]
    if src["snapshot"] is not None:
        states = load_snapshot(cfg.resolve(src["snapshot"]))
    elif src["tle"] is not None:
        states = propagate_all(load_tle_file(cfg.resolve(src["tle"])), epoch)
    else:
        w = src["walker"]
        elements = walker_delta(int(w["planes"]), int(w["sats_per_plane"]), math.radians(float(w["inclination_deg"])),
                                float(w["altitude_km"]) * 1e3, int(w.get("phasing", 0)), epoch.reference_time)
        states = propagate_all(elements, epoch)
    n = cfg.data["subsample"]
    if n is not None:
        if n > len(states):
            raise ConfigError("subsample", f"{n} exceeds the {len(states)} loaded satellites", cfg.path)
        rng = np.random.default_rng(cfg.seed_streams()["subsample"])
        keep = np.sort(rng.choice(len(states), size=n, replace=False))
        states = [SatelliteState(i, states[k].position, states[k].velocity) for i, k in enumerate(keep)]
    return states


def build_scenario(cfg: ScenarioConfig) -> Scenario:
    epoch = SimulationEpoch(float(cfg.data["epoch"]["t_s"]), cfg.reference_time())
    states = load_constellation(cfg, epoch)
    streams = cfg.seed_streams()
    if cfg.data["sites"]["file"] is not None:
        sites = load_sites(cfg.resolve(cfg.data["sites"]["file"]))
    else:
        sites = synthetic_sites(cfg.synthetic_params(), np.random.default_rng(streams["sites"]))
    lct = cfg.data["lct"]
    graphs = ConstellationGraphs.from_states(states, cfg.beam_params(), int(lct["per_sat"]),
                                             cfg.for_half_angle, cfg.max_range_m)
    params = cfg.traffic_params()
    ex = cfg.data["traffic"]["explicit"]
    if ex is not None:
        if len(ex["serving_gbps"]) != len(states) or len(ex["demand_gbps"]) != len(states):
            raise ConfigError("traffic.explicit", f"needs {len(states)} entries per rate list", cfg.path)
        profile = TrafficProfile.explicit(ex["serving_gbps"], ex["demand_gbps"], ex.get("flows") or [])
        if not ex.get("flows"):
            profile.flow_pairs = build_flow_pairs(profile, states, params)
    else:
        profile = build_profile(sites, states, params, epoch, np.random.default_rng(streams["traffic"]))
    try:
        profile.validate()
    except ValueError as exc:
        raise ConfigError("traffic", str(exc), cfg.path) from None
    return Scenario(states, sites, graphs, profile, epoch)


def _fmt(x: float, record_timing: bool) -> str:
    return f"{x:.3f}" if record_timing else ""


def run_methods(cfg: ScenarioConfig, sc: Scenario) -> tuple[list[dict], dict[str, JointSolution], dujo.DualTrace | None]:
    rows, sols = [], {}
    trace = None
    g, p = sc.graphs, sc.profile
    rec = bool(cfg.data["output"]["record_timing"])
    sch = cfg.data["schedule"]
    for method in cfg.data["methods"]:
        timings: dict[str, float] = {}
        t0 = time.perf_counter()
        if method == "dujo":
            schedule = StepSchedule(sch["alpha0"], float(sch["beta"]), int(sch["iterations"]))
            res = dujo.run(g, p, schedule, convert_every=int(sch["convert_every"]))
            sol, trace = res.solution, res.trace
            timings = res.timings_ms
        else:
            rule = BASELINE_RULES[method]
            seed = cfg.rand_baseline_seed() if rule == "random" else None
            sol = run_baseline(BaselineScheme(rule, seed), g, p, sc.states, timings)
        total = (time.perf_counter() - t0) * 1e3
        logger.info("%s: %.6g Gbps in %.1f ms", method, sol.throughput_gbps, total)
        sols[method] = sol
        row = {"method": method, "I": g.num_sats, "N": g.num_lcts, "E": len(g.edges), "F": len(p.flow_pairs),
               "throughput_gbps": repr(sol.throughput_gbps), "wall_ms_total": _fmt(total, rec)}
        for s in STAGES:
            row[f"ms_{s}"] = _fmt(timings[s], rec) if s in timings else ""
        rows.append(row)
    return rows, sols, trace


def summary_csv(rows: Sequence[dict], extra: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(extra) + SUMMARY_FIELDS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def run_scenario(cfg: ScenarioConfig, out_dir: str | Path | None = None) -> list[dict]:
    """Build the scenario, run every configured method and write the outputs.

    Writes ``summary.csv``, ``solution_<method>.json`` and, when DuJo runs,
    ``trace_dujo.csv`` under the output directory.
    """
    out = Path(out_dir) if out_dir is not None else cfg.output_dir()
    sc = build_scenario(cfg)
    rows, sols, trace = run_methods(cfg, sc)
    out.mkdir(parents=True, exist_ok=True)
    for method, sol in sols.items():
        (out / f"solution_{method}.json").write_text(solution_json(sol))
    if trace is not None:
        (out / "trace_dujo.csv").write_text(trace.to_csv(bool(cfg.data["output"]["record_timing"])))
    (out / "summary.csv").write_text(summary_csv(rows))
    return rows


def _sweep_point(args):
    cfg, axis, value, out = args
    point = cfg.with_overrides({SWEEP_AXES[axis]: value})
    rows = run_scenario(point, out / f"{axis}_{value}")
    return [{"axis": axis, "value": value, **r} for r in rows]


def sweep(cfg: ScenarioConfig, axis: str, values: Sequence, parallel: int = 0) -> list[dict]:
    """Repeat ``run_scenario`` with one axis substituted; writes ``sweep_<axis>.csv``."""
    if axis not in SWEEP_AXES:
        raise ConfigError("axis", f"unknown sweep axis {axis!r}; expected one of {sorted(SWEEP_AXES)}", cfg.path)
    if not values:
        raise ConfigError("values", "at least one sweep value required", cfg.path)
    out = cfg.output_dir()
    jobs = [(cfg, axis, v, out) for v in values]
    if parallel > 1:
        with ProcessPoolExecutor(parallel) as pool:
            parts = list(pool.map(_sweep_point, jobs))
    else:
        parts = [_sweep_point(j) for j in jobs]
    rows = [r for part in parts for r in part]
    out.mkdir(parents=True, exist_ok=True)
    (out / f"sweep_{axis}.csv").write_text(summary_csv(rows, ["axis", "value"]))
    return rows


def validate_solution(solution_path: str | Path, cfg: ScenarioConfig) -> list[str]:
    sc = build_scenario(cfg)
    data = json.loads(Path(solution_path).read_text())
    sol = JointSolution.from_json(data, sc.graphs, sc.profile)
    problems = check_feasibility(sol, sc.graphs, sc.profile)
    if abs(sol.throughput_gbps - float(data.get("throughput", sol.throughput_gbps))) > 1e-9:
        problems.append(f"reported throughput {data['throughput']} != sum of rates {sol.throughput_gbps}")
    return problems


# ---------------------------------------------------------------------------

def _split_overrides(extra: list[str]) -> dict:
    out = {}
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--") or len(tok) <= 2:
            raise ConfigError(tok, "expected --field.path value")
        key = tok[2:]
        if "=" in key:
            key, val = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra):
                raise ConfigError(key, "missing value")
            val = extra[i + 1]
            i += 2
        out[key] = parse_override_value(val)
    return out


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lislnet", description="Joint LISL matching and routing experiments.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run every configured method on one scenario")
    r.add_argument("config")
    s = sub.add_parser("sweep", help="repeat a scenario along one axis")
    s.add_argument("config")
    s.add_argument("--axis", required=True, choices=sorted(SWEEP_AXES))
    s.add_argument("--values", required=True, nargs="*", type=parse_override_value)
    s.add_argument("--parallel", type=int, default=0, help="worker processes (0 = sequential)")
    o = sub.add_parser("oracle", help="exact optimum of a tiny instance")
    o.add_argument("instance")
    o.add_argument("--max-hops", type=int, default=None)
    v = sub.add_parser("validate", help="re-check feasibility of a solution file")
    v.add_argument("solution")
    v.add_argument("config")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    ap = _parser()
    args, extra = ap.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = _split_overrides(extra)
        if overrides and args.command not in ("run", "sweep", "validate"):
            ap.error(f"unrecognized arguments: {' '.join(extra)}")
        if args.command == "run":
            rows = run_scenario(ScenarioConfig.load(args.config, overrides))
            sys.stdout.write(summary_csv(rows))
        elif args.command == "sweep":
            rows = sweep(ScenarioConfig.load(args.config, overrides), args.axis, args.values, args.parallel)
            sys.stdout.write(summary_csv(rows, ["axis", "value"]))
        elif args.command == "oracle":
            path = Path(args.instance)
            if not path.is_file():
                raise ConfigError("instance", f"file not found: {path}", path)
            opt, witness = oracle.brute_force_joint(oracle.TinyInstance.from_json(path), args.max_hops)
            print(json.dumps({"opt_throughput_gbps": opt, "witness": witness.to_json()}, indent=1, sort_keys=True))
        else:
            problems = validate_solution(args.solution, ScenarioConfig.load(args.config, overrides))
            for p in problems:
                print(f"INFEASIBLE: {p}")
            if problems:
                return 1
            print("feasible")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

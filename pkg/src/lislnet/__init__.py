"""Joint laser inter-satellite link matching, routing and rate allocation.

Lagrangian dual ascent over LCT matching and shortest-path routing, with
separate matching-then-OSPF baselines and brute-force oracles for tiny
instances.
"""

from .dujo import JointSolution, StepSchedule, check_feasibility, convert, dual_value, run, supergradient
from .optics import BeamParams, effective_rate
from .topology import ConstellationGraphs
from .traffic import TrafficParams, TrafficProfile

__version__ = "0.1.0"

__all__ = [
    "BeamParams",
    "ConstellationGraphs",
    "JointSolution",
    "StepSchedule",
    "TrafficParams",
    "TrafficProfile",
    "check_feasibility",
    "convert",
    "dual_value",
    "effective_rate",
    "run",
    "supergradient",
]

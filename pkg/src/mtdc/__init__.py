"""Frequency control of AC areas coupled through a multi-terminal HVDC grid.

Closed-loop assembly, stability certificates, steady-state bounds and
simulation for droop and secondary (complete-graph, projected and
consensus-based) controllers.
"""

from .analysis import (
    BoundSet,
    EquilibriumReport,
    StabilityCertificate,
    bounds_decentralized,
    bounds_distributed,
    certify_stability,
    equilibrium,
    lyapunov_value,
    verify_objective,
)
from .netgraph import GraphKind, WeightedGraph, laplacian
from .plant import Config, ControllerGains, PlantParams, assemble
from .sim import Event, Scenario, SimMode, integrate, sweep

__version__ = "0.1.0"

__all__ = [
    "BoundSet",
    "Config",
    "ControllerGains",
    "EquilibriumReport",
    "Event",
    "GraphKind",
    "PlantParams",
    "Scenario",
    "SimMode",
    "StabilityCertificate",
    "WeightedGraph",
    "assemble",
    "bounds_decentralized",
    "bounds_distributed",
    "certify_stability",
    "equilibrium",
    "integrate",
    "laplacian",
    "lyapunov_value",
    "sweep",
    "verify_objective",
]

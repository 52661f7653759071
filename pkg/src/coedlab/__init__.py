"""Consistency-maintenance laboratory for replicated plain text.

Engines (operational transformation in sound and deliberately unsound
control modes, a tombstone sequence CRDT, and a positional-identifier
CRDT in strict and patched flavors) share one document/operation model
and are driven by a deterministic multi-site simulator with convergence,
intention, and interleaving oracles, plus operation-count benchmarks.
"""
from .core import (
    Engine,
    ExternalOp,
    Ordering,
    OutOfBounds,
    VersionVector,
    WireOp,
    apply_external,
    causal_compare,
    causally_ready,
    vv_merge,
)
from .harness import Report, Simulation, enumerate_schedules, run_scenario
from .scenario import Action, DeliverySpec, Scenario, ScenarioInvalid, TooLarge

__version__ = "0.1.0"

__all__ = [
    "Action",
    "DeliverySpec",
    "Engine",
    "ExternalOp",
    "Ordering",
    "OutOfBounds",
    "Report",
    "Scenario",
    "ScenarioInvalid",
    "Simulation",
    "TooLarge",
    "VersionVector",
    "WireOp",
    "apply_external",
    "causal_compare",
    "causally_ready",
    "enumerate_schedules",
    "run_scenario",
    "vv_merge",
    "__version__",
]

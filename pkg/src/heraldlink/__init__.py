"""Simulation and analysis of heralded two-memory entanglement over fiber.

The package splits into closed-form budgets (budget), truncated
number-state checks (fock), the Monte Carlo protocol (protocol, presets,
scenario), interferometer stabilization (phaselock), estimators
(analysis), bundled reference tables (reference), and output writers
(report).  The `heraldlink` console script fronts the common runs.
"""

__version__ = "0.1.0"

from .budget import (DetectorParams, FiberSegment, LinkParams, fiber_loss_db,
                     herald_stats, plob_bound, plob_crossing, scaling_fit)
from .errors import (HeraldLinkError, ParameterError, ScenarioFormatError)
from .phaselock import (DualBandParams, InterferometerGeometry,
                        LockLoopConfig, envelope_fit, simulate_lock)
from .presets import get_preset, list_presets
from .protocol import (Scenario, herald_tally, hom_experiment, run_campaign,
                       run_fringe_scan)
from .scenario import parse_scenario, parse_scenario_text

__all__ = [
    "DetectorParams", "FiberSegment", "LinkParams", "fiber_loss_db",
    "herald_stats", "plob_bound", "plob_crossing", "scaling_fit",
    "HeraldLinkError", "ParameterError", "ScenarioFormatError",
    "DualBandParams", "InterferometerGeometry", "LockLoopConfig",
    "envelope_fit", "simulate_lock",
    "get_preset", "list_presets",
    "Scenario", "herald_tally", "hom_experiment", "run_campaign",
    "run_fringe_scan",
    "parse_scenario", "parse_scenario_text",
    "__version__",
]

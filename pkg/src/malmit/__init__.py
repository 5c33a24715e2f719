"""Multi-virus SIS propagation on networks with passivity-based defenses.

Simulation engines (exact Gillespie, exact master equation, deterministic
mean-field), storage-function design matrices, minimum-cost static patching,
three adaptive mitigation laws, and closed-form performance bounds. The hot
kernels run on a compiled extension when available (see malmit.kernels).
"""

from . import (bounds, control, design, errors, linalg, markov, meanfield,
               passivity, scenario, topology, virus)
from .kernels import HAVE_EXT, active_lane
from .topology import Network, erdos_renyi, from_edge_list
from .virus import VirusModel, coexisting, competing

__version__ = "0.1.0"

__all__ = [
    "Network", "VirusModel", "erdos_renyi", "from_edge_list", "coexisting",
    "competing", "HAVE_EXT", "active_lane", "bounds", "control", "design",
    "errors", "linalg", "markov", "meanfield", "passivity", "scenario",
    "topology", "virus",
]

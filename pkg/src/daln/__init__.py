"""Point processes on directed acyclic linear networks.

Simulation, likelihood fitting and residual diagnostics for Poisson,
Hawkes-type and self-correcting models specified by conditional intensities.
"""
from .errors import *  # noqa: F401,F403
from .network import (
    DirectedPath,
    DirectedSegment,
    Network,
    NetworkLocation,
    Vertex,
    build_network,
)
from .patterns import IntereventRecord, MarkedPointPattern, PointPattern
from .models import (
    ExponentialKernel,
    HawkesModel,
    InhomogeneousPoissonModel,
    ModifiedHawkesModel,
    MultitypeHawkesModel,
    NonlinearHawkesModel,
    PoissonModel,
    SelfCorrectingModel,
    model_from_spec,
)
from .simulation import SimulationConfig, simulate, simulate_marked

__version__ = "0.1.0"

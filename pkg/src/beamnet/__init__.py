"""beamnet - Intrinsic beam network simulation and nodal profile control.

Networks of geometrically exact beams are simulated in their intrinsic
(velocities and internal forces) form, boundary controls reproducing
prescribed nodal profiles are synthesised, and positions and rotations are
reconstructed from intrinsic solutions.

Features:
- Riemann-invariant diagonalisation of x-varying beam coefficients
- Forward and sidewise characteristic solvers with rigid-joint node coupling
- Constructive nodal profile control on the A-shaped network and a general
  control-path planner
- Quaternion-based reconstruction and compatibility checks
- YAML run configurations validated with Pydantic

Example:
    >>> from beamnet.config_loader import NetworkLoader
    >>> run = NetworkLoader().load("a_network_unit")
    >>> run.network.beam_indices
    [1, 2, 3, 4, 5]

Time Complexity: Varies per component
Space Complexity: Varies per component
"""

__version__ = "1.0.0"
__license__ = "MIT"

from beamnet.beam import BeamSpec, DiagonalizedBeam, diagonalize
from beamnet.config_loader import LoadedRun, NetworkLoader, load_config
from beamnet.control import (
    ControlProblem,
    ControlResult,
    controllability_time,
    synthesize,
    transmission_time,
    verify_initial_recovery,
)
from beamnet.exceptions import (
    BeamNetError,
    BeamNetWarning,
    BlowUpError,
    CompatibilityWarning,
    ConfigParseError,
    ConfigValidationError,
    InvalidControlProblemError,
    PlanStalledError,
    ProfileIncompatibleError,
)
from beamnet.geb import GebField, reconstruct, reconstruct_network, transform
from beamnet.models import RunConfig
from beamnet.network import NetworkSpec, NodeKind, TimeSeries, diagonalize_network
from beamnet.planner import Plan, PlanInput, build_plan, execute_plan
from beamnet.solver import Grid, Trajectory, solve_forward, solve_sidewise

__all__ = [
    # Version info
    "__version__",
    "__license__",
    # Beams and networks
    "BeamSpec",
    "DiagonalizedBeam",
    "diagonalize",
    "NetworkSpec",
    "NodeKind",
    "TimeSeries",
    "diagonalize_network",
    # Solvers
    "Grid",
    "Trajectory",
    "solve_forward",
    "solve_sidewise",
    # Control and planning
    "ControlProblem",
    "ControlResult",
    "transmission_time",
    "controllability_time",
    "synthesize",
    "verify_initial_recovery",
    "Plan",
    "PlanInput",
    "build_plan",
    "execute_plan",
    # Reconstruction
    "GebField",
    "transform",
    "reconstruct",
    "reconstruct_network",
    # Configuration
    "RunConfig",
    "NetworkLoader",
    "LoadedRun",
    "load_config",
    # Exceptions
    "BeamNetError",
    "BlowUpError",
    "ConfigParseError",
    "ConfigValidationError",
    "InvalidControlProblemError",
    "PlanStalledError",
    "ProfileIncompatibleError",
    "BeamNetWarning",
    "CompatibilityWarning",
]

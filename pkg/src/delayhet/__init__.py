"""Client selection for federated averaging that trades off round delay against data heterogeneity."""

from .core import ClientRoster, RoundRecord, SelectionDecision, make_roster, round_delay
from .datagen import QuadraticProblem, generate_quadratic
from .engine import EngineConfig, RunResult, run

__all__ = [
    "ClientRoster",
    "EngineConfig",
    "QuadraticProblem",
    "RoundRecord",
    "RunResult",
    "SelectionDecision",
    "generate_quadratic",
    "make_roster",
    "round_delay",
    "run",
]
__version__ = "0.1.0"

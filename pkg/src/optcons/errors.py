"""Exception hierarchy.

Each pipeline failure kind carries the process exit status the CLI reports
and a short statement of the violated precondition.
"""

from __future__ import annotations


class ConsensusError(Exception):
    """Base class for all toolkit failures."""

    exit_code = 1
    kind = "error"
    condition = ""


class ValidationError(ConsensusError, ValueError):
    kind = "validation"
    condition = "input data well formed"


class ConfigError(ValidationError):
    """Bad configuration document; ``path`` names the offending key."""

    kind = "config"

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class GraphNotConnected(ConsensusError):
    exit_code = 2
    kind = "graph_not_connected"
    condition = "communication graph connected (exactly one zero Laplacian eigenvalue)"


class RiccatiError(ConsensusError):
    exit_code = 3
    kind = "riccati_failure"
    condition = "ARE A'P + PA + Q - P B R^+ B' P = 0 admits a solution P >= 0"


class ModalSplitError(RiccatiError):
    kind = "modal_split_failure"
    condition = "closed-loop matrix admits a well-conditioned stable/unstable block split"


class RegularityViolation(ConsensusError):
    exit_code = 4
    kind = "regularity_violation"
    condition = "regularity B'P = R R^+ B'P of the ARE solution"

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class Unstabilizable(ConsensusError):
    exit_code = 5
    kind = "unstabilizable"
    condition = "pair (A - B R^+ B'P, B(I - R^+ R)) stabilizable"

    def __init__(self, message: str, eigenvalue: complex | None = None):
        super().__init__(message)
        self.eigenvalue = eigenvalue


class SimulationDivergence(ConsensusError):
    exit_code = 6
    kind = "simulation_divergence"
    condition = "closed-loop trajectories remain bounded"

    def __init__(self, message: str, time: float):
        super().__init__(message)
        self.time = time

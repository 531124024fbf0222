"""Distributed optimal-consensus controller.

Each agent applies

    u_i = -F x_i + Pi K sum_j a_ij (x_j - x_i),

where ``F = R^+ B' P`` is the local LQ feedback, ``Pi = I - R^+ R`` projects
onto the inputs that carry no cost, and ``K = [0  K_u] T1^{-1}`` acts only
on the non-Hurwitz part of ``A_cal = A - B F``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GraphNotConnected, RegularityViolation, Unstabilizable, ValidationError
from .graph import CommGraph, LaplacianSpectrum, kappa, laplacian_spectrum
from .matlib import EPS_SPLIT, ModalSplit, max_real_part, pinv, spectrum, split_stable_unstable
from .riccati import RegularAreSolution, solve_care, solve_regular_are
from .simulator import LtiAgentModel

_PBH_TOL = 1e-8


@dataclass(frozen=True)
class ClosedLoopPair:
    A_cal: np.ndarray
    B_cal: np.ndarray


def closed_loop_pair(model: LtiAgentModel, P) -> ClosedLoopPair:
    """``A_cal = A - B R^+ B' P`` and ``B_cal = B (I - R^+ R)``."""
    P = np.asarray(P, dtype=float)
    n, m = model.n, model.m
    if P.shape != (n, n):
        raise ValidationError(f"P must be {n}x{n}, got {P.shape}")
    Rp = pinv(model.R)
    A_cal = model.A - model.B @ Rp @ model.B.T @ P
    B_cal = model.B @ (np.eye(m) - Rp @ model.R)
    return ClosedLoopPair(A_cal, B_cal)


def check_stabilizable(A, B, tol: float = _PBH_TOL) -> None:
    """PBH rank test at every eigenvalue with real part >= -EPS_SPLIT.

    Raises :class:`Unstabilizable` naming the first uncontrollable mode.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    n = A.shape[0]
    scale = 1.0 + np.linalg.norm(A) + np.linalg.norm(B)
    for lam in spectrum(A):
        if lam.real < -EPS_SPLIT:
            continue
        M = np.hstack([A - lam * np.eye(n), B.astype(complex)])
        s = np.linalg.svd(M, compute_uv=False)
        if s[n - 1] <= tol * scale:
            raise Unstabilizable(
                f"mode lambda = {lam:.6g} is not stabilisable through the free inputs "
                f"(PBH singular value {s[n - 1]:.3e})",
                eigenvalue=complex(lam),
            )


def unstable_are_residual(A_u, B_u, P_u) -> float:
    A_u, B_u, P_u = (np.asarray(x, dtype=float) for x in (A_u, B_u, P_u))
    n = A_u.shape[0]
    return float(
        np.linalg.norm(A_u.T @ P_u + P_u @ A_u - P_u @ B_u @ B_u.T @ P_u + np.eye(n))
    )


def solve_unstable_are(A_u, B_u) -> np.ndarray:
    """Positive definite solution of ``A_u'P + P A_u - P B_u B_u' P + I = 0``."""
    A_u = np.asarray(A_u, dtype=float)
    B_u = np.asarray(B_u, dtype=float)
    n = A_u.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    check_stabilizable(A_u, B_u)
    P_u = solve_care(A_u, B_u, np.eye(n), np.eye(B_u.shape[1]))
    if np.linalg.eigvalsh(P_u).min() <= 0:
        raise Unstabilizable("unstable-block Riccati solution is not positive definite")
    return P_u


@dataclass(frozen=True)
class ConsensusController:
    F: np.ndarray
    Pi: np.ndarray
    Kgain: np.ndarray
    kappa: float
    P: np.ndarray
    P_u: np.ndarray
    split: ModalSplit
    are: RegularAreSolution | None = None

    @property
    def relative_gain(self) -> np.ndarray:
        """Gain on ``sum_j a_ij (x_j - x_i)`` as applied: ``Pi @ Kgain``."""
        return self.Pi @ self.Kgain

    def control(self, X: np.ndarray, L: np.ndarray) -> np.ndarray:
        """Inputs for all agents; ``X`` is ``(N, n)``, returns ``(N, m)``."""
        return -X @ self.F.T - (L @ X) @ self.relative_gain.T


def synthesize(
    model: LtiAgentModel,
    graph: CommGraph,
    allow_irregular: bool = False,
    are: RegularAreSolution | None = None,
) -> ConsensusController:
    """Build the distributed controller.

    With ``allow_irregular`` a non-regular ARE solution is used anyway
    instead of raising :class:`RegularityViolation`.
    """
    if model.N is not None and model.N != graph.n_agents:
        raise ValidationError(f"model has N = {model.N} but graph has {graph.n_agents} agents")
    spec = laplacian_spectrum(graph)
    if not spec.connected:
        raise GraphNotConnected(
            f"communication graph is not connected (lambda_2 = {spec.fiedler:.3e})"
        )
    k = kappa(spec)

    if are is None:
        are = solve_regular_are(model.A, model.B, model.Q, model.R)
    if not are.regular and not allow_irregular:
        raise RegularityViolation(
            f"ARE solution violates B'P = R R^+ B'P (residual {are.residual_reg:.3e})",
            residual=are.residual_reg,
        )
    P = are.P
    Rp = pinv(model.R)
    F = Rp @ model.B.T @ P
    Pi = np.eye(model.m) - Rp @ model.R
    pair = closed_loop_pair(model, P)

    split = split_stable_unstable(pair.A_cal, pair.B_cal)
    P_u = solve_unstable_are(split.A_u, split.B_u)
    K_u = k * split.B_u.T @ P_u
    K_basis = np.hstack([np.zeros((model.m, split.n_s)), K_u])
    Kgain = K_basis @ split.T1_inv
    return ConsensusController(F, Pi, Kgain, k, P, P_u, split, are)


@dataclass(frozen=True)
class ModeDiagnostic:
    laplacian_eigenvalue: float
    max_real_full: float
    max_real_unstable_block: float


@dataclass(frozen=True)
class ModeCheck:
    """Result of the per-mode stability check; truthy when all modes are stable."""

    stable: bool
    stable_block_max_real: float
    modes: list[ModeDiagnostic] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.stable


def verify_mode_stability(
    ctrl: ConsensusController, pair: ClosedLoopPair, spectrum: LaplacianSpectrum
) -> ModeCheck:
    """Check ``A_cal - lambda_i B_cal K`` is Hurwitz for i = 2..N.

    The block form is checked too: the stable block and every
    ``A_u - lambda_i B_u K_u`` must be Hurwitz.
    """
    if not spectrum.connected:
        raise GraphNotConnected("mode check requires a connected graph")
    split = ctrl.split
    K_u = (ctrl.Kgain @ split.T1)[:, split.n_s:]
    stable_max = max_real_part(split.A_s)
    ok = stable_max < -EPS_SPLIT
    modes = []
    for lam in spectrum.nonzero:
        full = max_real_part(pair.A_cal - lam * pair.B_cal @ ctrl.Kgain)
        block = max_real_part(split.A_u - lam * split.B_u @ K_u)
        ok = ok and full < -EPS_SPLIT and block < -EPS_SPLIT
        modes.append(ModeDiagnostic(float(lam), full, block))
    return ModeCheck(bool(ok), stable_max, modes)

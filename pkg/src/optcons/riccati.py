"""Regular algebraic Riccati equation with a semidefinite control weight.

The singular weight ``R`` is rotated into ``diag(R1, 0)`` by an orthogonal
input change; the penalised inputs give a standard ARE in ``(A, B1, Q, R1)``
and the free inputs ``B2`` must satisfy ``B2' P = 0`` (regularity).
A zero-terminal Riccati ODE integrated backwards provides an independent
check of the algebraic solution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import RiccatiError, ValidationError
from .matlib import is_hurwitz, pinv

#: ARE residual tolerance, scaled by ``1 + ||P||**2``.
TAU_ARE = 1e-8
#: Regularity tolerance, scaled by ``1 + ||P||``.
TAU_REG = 1e-8
_PSD_TOL = 1e-10


def _check_symmetric_psd(M: np.ndarray, name: str, tol: float = _PSD_TOL) -> None:
    scale = 1.0 + np.linalg.norm(M)
    if np.linalg.norm(M - M.T) > tol * scale:
        raise ValidationError(f"{name} is not symmetric")
    if M.shape[0] and np.linalg.eigvalsh((M + M.T) / 2).min() < -tol * scale:
        raise ValidationError(f"{name} is not positive semidefinite")


@dataclass(frozen=True)
class WeightReduction:
    """Orthogonal input rotation ``T_bar' R T_bar = diag(R1, 0)``."""

    T_bar: np.ndarray
    R1: np.ndarray
    B1: np.ndarray
    B2: np.ndarray

    @property
    def m1(self) -> int:
        return self.R1.shape[0]


def reduce_control_weight(R, B) -> WeightReduction:
    R = np.asarray(R, dtype=float)
    B = np.asarray(B, dtype=float)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise ValidationError(f"R must be square, got {R.shape}")
    if B.shape[1] != R.shape[0]:
        raise ValidationError(f"B has {B.shape[1]} columns but R is {R.shape[0]}x{R.shape[0]}")
    _check_symmetric_psd(R, "R")
    m = R.shape[0]
    if m == 0:
        return WeightReduction(np.zeros((0, 0)), np.zeros((0, 0)), B.copy(), B.copy())

    w, V = np.linalg.eigh((R + R.T) / 2)
    # descending, ties keep their original order so diagonal R gives T_bar = I
    order = np.argsort(-w, kind="stable")
    w, V = w[order], V[:, order]
    for k in range(m):
        if V[np.argmax(np.abs(V[:, k])), k] < 0:
            V[:, k] = -V[:, k]
    m1 = int(np.sum(w > _PSD_TOL * max(w[0], 0.0)))
    R1 = V[:, :m1].T @ R @ V[:, :m1]
    R1 = (R1 + R1.T) / 2
    BT = B @ V
    return WeightReduction(V, R1, BT[:, :m1].copy(), BT[:, m1:].copy())


def _observable_basis(A: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Orthonormal complement of the unobservable subspace of ``(Q, A)``."""
    n = A.shape[0]
    nq = np.linalg.norm(Q)
    if nq == 0.0:
        return np.zeros((n, 0))
    na = np.linalg.norm(A)
    Ah = A / na if na > 0 else A
    blocks = [Q / nq]
    for _ in range(n - 1):
        blocks.append(blocks[-1] @ Ah)
    _, s, Vt = np.linalg.svd(np.vstack(blocks))
    rank = int(np.sum(s > 1e-10 * s[0]))
    return Vt[:rank].T


def _hamiltonian_care(A, S, Q) -> np.ndarray:
    """Stabilising solution of ``A'P + PA + Q - P S P = 0`` from the Hamiltonian."""
    n = A.shape[0]
    H = np.block([[A, -S], [-Q, -A.T]])
    scale = 1.0 + np.linalg.norm(H)
    ev = np.linalg.eigvals(H)
    closest = np.abs(ev.real).min()
    if closest < 1e-9 * scale:
        raise RiccatiError(
            f"Hamiltonian has an eigenvalue on the imaginary axis "
            f"(|Re| = {closest:.3e}); no stabilising solution"
        )
    _, U, sdim = scipy.linalg.schur(H, output="real", sort=lambda re, im: re < 0)
    if sdim != n:
        raise RiccatiError(f"stable subspace has dimension {sdim}, expected {n}")
    U11 = U[:n, :n]
    U21 = U[n:, :n]
    if np.linalg.cond(U11) > 1e12:
        raise RiccatiError("stable invariant subspace is not a graph; (A, B1) not stabilisable")
    P = np.linalg.solve(U11.T, U21.T).T
    return (P + P.T) / 2


def _newton_step(A, S, Q, P) -> np.ndarray:
    """One Kleinman iteration; returns ``P`` unchanged if it does not help."""
    Ac = A - S @ P
    if not is_hurwitz(Ac):
        return P
    P_new = scipy.linalg.solve_continuous_lyapunov(Ac.T, -(Q + P @ S @ P))
    P_new = (P_new + P_new.T) / 2
    if care_residual(A, S, Q, P_new) <= care_residual(A, S, Q, P):
        return P_new
    return P


def care_residual(A, S, Q, P) -> float:
    return float(np.linalg.norm(A.T @ P + P @ A + Q - P @ S @ P))


def solve_care(A, B1, Q, R1) -> np.ndarray:
    """Minimal positive semidefinite solution of the standard ARE

        A'P + PA + Q - P B1 R1^{-1} B1' P = 0.

    The solution vanishes on the unobservable subspace of ``(Q, A)``; on the
    observable part it is the stabilising solution, obtained from the stable
    invariant subspace of the Hamiltonian and polished with one Newton step.
    With no penalised inputs (``B1`` has zero columns) the observable part
    reduces to a Lyapunov equation, which needs that part to be Hurwitz.

    Raises
    ------
    RiccatiError
        If no positive semidefinite solution can be found.
    """
    A = np.asarray(A, dtype=float)
    B1 = np.asarray(B1, dtype=float)
    Q = np.asarray(Q, dtype=float)
    R1 = np.asarray(R1, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or Q.shape != (n, n) or B1.shape[0] != n:
        raise ValidationError("solve_care: inconsistent dimensions")
    if R1.shape != (B1.shape[1], B1.shape[1]):
        raise ValidationError("solve_care: R1 does not match B1")
    _check_symmetric_psd(Q, "Q")
    if n == 0:
        return np.zeros((0, 0))

    W = _observable_basis(A, Q)
    r = W.shape[1]
    if r == 0:
        return np.zeros((n, n))
    Ar = W.T @ A @ W
    Qr = W.T @ Q @ W
    Qr = (Qr + Qr.T) / 2
    Br = W.T @ B1

    if B1.shape[1] == 0:
        if not is_hurwitz(Ar):
            raise RiccatiError(
                "no penalised inputs and the observable part of A is not Hurwitz: "
                "the cost is unbounded"
            )
        Pr = scipy.linalg.solve_continuous_lyapunov(Ar.T, -Qr)
    else:
        Sr = Br @ np.linalg.solve(R1, Br.T)
        Sr = (Sr + Sr.T) / 2
        Pr = _hamiltonian_care(Ar, Sr, Qr)
        Pr = _newton_step(Ar, Sr, Qr, Pr)
    Pr = (Pr + Pr.T) / 2
    P = W @ Pr @ W.T
    P = (P + P.T) / 2

    if n and np.linalg.eigvalsh(P).min() < -1e-8 * (1.0 + np.linalg.norm(P)):
        raise RiccatiError("computed ARE solution is not positive semidefinite")
    return P


@dataclass(frozen=True)
class RegularAreSolution:
    P: np.ndarray
    residual_are: float
    residual_reg: float
    regular: bool
    reduction: WeightReduction


def are_residual(A, B, Q, R, P) -> float:
    """``||A'P + PA + Q - P B R^+ B' P||`` (Frobenius)."""
    S = B @ pinv(R) @ B.T
    return care_residual(A, S, Q, P)


def regularity_residual(B, R, P) -> float:
    """``||(I - R R^+) B' P||`` (Frobenius)."""
    m = R.shape[0]
    return float(np.linalg.norm((np.eye(m) - R @ pinv(R)) @ B.T @ P))


def solve_regular_are(A, B, Q, R) -> RegularAreSolution:
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    Q = np.asarray(Q, dtype=float)
    R = np.asarray(R, dtype=float)
    red = reduce_control_weight(R, B)
    _check_symmetric_psd(Q, "Q")
    P = solve_care(A, red.B1, Q, red.R1)
    res_are = are_residual(A, B, Q, R, P)
    res_reg = regularity_residual(B, R, P)
    regular = res_reg <= TAU_REG * (1.0 + np.linalg.norm(P))
    return RegularAreSolution(P, res_are, res_reg, bool(regular), red)


def riccati_ode_oracle(A, B, Q, R, T: float, steps: int | None = None) -> np.ndarray:
    """``P_T(0)`` for the Riccati ODE with terminal condition ``P(T) = 0``.

    Integrates ``dP/ds = A'P + PA + Q - P B R^+ B' P`` in reversed time
    ``s = T - t`` with fixed-step RK4. ``steps`` defaults to a step of
    1e-3. ``steps == 0`` returns the terminal condition.

    Raises
    ------
    RiccatiError
        If ``||P||`` exceeds 1e12 (no solution on this horizon).
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    Q = np.asarray(Q, dtype=float)
    R = np.asarray(R, dtype=float)
    n = A.shape[0]
    P = np.zeros((n, n))
    if steps is None:
        steps = max(1, int(np.ceil(T / 1e-3)))
    if steps == 0:
        return P
    if T <= 0:
        raise ValidationError("horizon T must be positive")
    S = B @ pinv(R) @ B.T
    At = A.T

    def rhs(P):
        return At @ P + P @ A + Q - P @ S @ P

    h = T / steps
    for k in range(steps):
        k1 = rhs(P)
        k2 = rhs(P + 0.5 * h * k1)
        k3 = rhs(P + 0.5 * h * k2)
        k4 = rhs(P + h * k3)
        P = P + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(P)) or np.abs(P).max() > 1e12:
            raise RiccatiError(f"Riccati ODE diverged at s = {(k + 1) * h:.4g}")
    return (P + P.T) / 2

"""Dense real-matrix kernels: pseudoinverse, spectra, modal splitting, expm.

Matrices are plain ``numpy.ndarray`` objects of dtype float64. Empty
matrices (a zero dimension) are accepted everywhere and propagate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ModalSplitError, ValidationError

#: Penrose-identity tolerance.
TAU_MP = 1e-10
#: Eigenvalues with real part >= -EPS_SPLIT count as unstable.
EPS_SPLIT = 1e-9


def as_matrix(M, name: str = "matrix") -> np.ndarray:
    """Coerce scalars and nested sequences to a finite 2-D float array."""
    arr = np.asarray(M, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ValidationError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} has non-finite entries")
    return arr


def _require_square(M: np.ndarray, name: str = "matrix") -> None:
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {M.shape}")


def pinv(M) -> np.ndarray:
    """Moore-Penrose pseudoinverse via SVD.

    Singular values below ``max(rows, cols) * eps * sigma_max`` are treated
    as zero.
    """
    M = np.asarray(M, dtype=float)
    rows, cols = M.shape
    if rows == 0 or cols == 0:
        return np.zeros((cols, rows))
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    cutoff = max(rows, cols) * np.finfo(float).eps * s[0]
    keep = s > cutoff
    s_inv = np.zeros_like(s)
    s_inv[keep] = 1.0 / s[keep]
    return (Vt.T * s_inv) @ U.T


def penrose_residuals(M, Mp) -> tuple[float, float, float, float]:
    """Scaled residuals of the four Penrose identities for candidate ``Mp``."""
    M = np.asarray(M, dtype=float)
    Mp = np.asarray(Mp, dtype=float)
    nM = 1.0 + np.linalg.norm(M)
    nMp = 1.0 + np.linalg.norm(Mp)
    MMp = M @ Mp
    MpM = Mp @ M
    return (
        float(np.linalg.norm(MMp @ M - M) / nM),
        float(np.linalg.norm(MpM @ Mp - Mp) / nMp),
        float(np.linalg.norm(MMp - MMp.T)),
        float(np.linalg.norm(MpM - MpM.T)),
    )


def range_contained(L, N) -> bool:
    """True iff ``L X = N`` is solvable, i.e. ``L L^+ N = N``."""
    L = np.asarray(L, dtype=float)
    N = np.asarray(N, dtype=float)
    if L.shape[0] != N.shape[0]:
        raise ValidationError(
            f"row mismatch: L has {L.shape[0]} rows, N has {N.shape[0]}"
        )
    resid = np.linalg.norm(L @ pinv(L) @ N - N)
    return bool(resid <= TAU_MP * (1.0 + np.linalg.norm(N)))


def spectrum(M) -> np.ndarray:
    """Eigenvalues with multiplicity, sorted by (real part, imaginary part)."""
    M = np.asarray(M, dtype=float)
    _require_square(M)
    if M.shape[0] == 0:
        return np.zeros(0, dtype=complex)
    ev = np.linalg.eigvals(M).astype(complex)
    order = np.lexsort((ev.imag, ev.real))
    return ev[order]


def max_real_part(M) -> float:
    ev = spectrum(M)
    return float(ev.real.max()) if ev.size else -np.inf


def is_hurwitz(M) -> bool:
    """True iff every eigenvalue has real part below ``-EPS_SPLIT``.

    The empty matrix is vacuously Hurwitz.
    """
    return max_real_part(M) < -EPS_SPLIT


@dataclass(frozen=True)
class ModalSplit:
    """Real similarity ``T1`` separating stable and unstable dynamics.

    ``T1_inv @ A @ T1 == blockdiag(A_s, A_u)`` and
    ``T1_inv @ B == vstack(B_s, B_u)``; the stable block comes first.
    """

    T1: np.ndarray
    T1_inv: np.ndarray
    A_s: np.ndarray
    A_u: np.ndarray
    B_s: np.ndarray
    B_u: np.ndarray

    @property
    def n_s(self) -> int:
        return self.A_s.shape[0]

    @property
    def n_u(self) -> int:
        return self.A_u.shape[0]

    def reassemble(self) -> np.ndarray:
        return self.T1 @ scipy.linalg.block_diag(self.A_s, self.A_u) @ self.T1_inv


def split_stable_unstable(A, B, tol: float = 1e-8) -> ModalSplit:
    """Block-diagonalise ``A`` into stable and unstable parts.

    An ordered real Schur form puts the stable cluster first; the coupling
    block is then removed with a Sylvester solve, giving
    ``T1 = Z [[I, X], [0, I]]``.

    Raises
    ------
    ModalSplitError
        If the reassembled matrix or the block-diagonal form misses ``tol``
        relative to ``||A||`` (clusters too close to decouple).
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    _require_square(A, "A")
    n = A.shape[0]
    if B.shape[0] != n:
        raise ValidationError(f"B has {B.shape[0]} rows, A is {n}x{n}")
    m = B.shape[1]
    if n == 0:
        empty = np.zeros((0, 0))
        return ModalSplit(empty, empty, empty, empty, np.zeros((0, m)), np.zeros((0, m)))

    T, Z, n_s = scipy.linalg.schur(
        A, output="real", sort=lambda re, im: re < -EPS_SPLIT
    )
    T11 = T[:n_s, :n_s]
    T12 = T[:n_s, n_s:]
    T22 = T[n_s:, n_s:]
    X = np.zeros((n_s, n - n_s))
    if 0 < n_s < n:
        # T11 X - X T22 = -T12
        X = scipy.linalg.solve_sylvester(T11, -T22, -T12)
    S = np.eye(n)
    S[:n_s, n_s:] = X
    S_inv = np.eye(n)
    S_inv[:n_s, n_s:] = -X
    T1 = Z @ S
    T1_inv = S_inv @ Z.T

    D = T1_inv @ A @ T1
    A_s = D[:n_s, :n_s].copy()
    A_u = D[n_s:, n_s:].copy()
    TB = T1_inv @ B
    split = ModalSplit(T1, T1_inv, A_s, A_u, TB[:n_s].copy(), TB[n_s:].copy())

    scale = 1.0 + np.linalg.norm(A)
    coupling = max(
        np.linalg.norm(D[:n_s, n_s:]) if n_s and n - n_s else 0.0,
        np.linalg.norm(D[n_s:, :n_s]) if n_s and n - n_s else 0.0,
    )
    recon = np.linalg.norm(split.reassemble() - A)
    if recon > tol * scale or coupling > tol * scale:
        raise ModalSplitError(
            f"stable/unstable split failed: reassembly residual {recon:.3e}, "
            f"off-diagonal residual {coupling:.3e} (scale {scale:.3e})"
        )
    if n_s and not is_hurwitz(A_s):
        raise ModalSplitError("stable block misclassified after reordering")
    if n - n_s and spectrum(A_u).real.min() < -EPS_SPLIT:
        raise ModalSplitError("unstable block misclassified after reordering")
    return split


def expm_apply(M, t: float, v) -> np.ndarray:
    """Return ``expm(M t) @ v``."""
    M = np.asarray(M, dtype=float)
    v = np.asarray(v, dtype=float)
    _require_square(M)
    if M.shape[0] == 0:
        return v.copy()
    return scipy.linalg.expm(M * t) @ v

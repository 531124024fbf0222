"""Undirected weighted communication topology and its Laplacian spectrum."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import GraphNotConnected, ValidationError

#: Laplacian eigenvalues at or below this count as zero.
EPS_CONN = 1e-8


@dataclass(frozen=True)
class CommGraph:
    """Symmetric nonnegative adjacency with zero diagonal.

    Validation happens on construction; a bad entry raises
    :class:`ValidationError` naming its (1-based) position.
    """

    adjacency: np.ndarray

    def __post_init__(self):
        W = np.array(self.adjacency, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1] or W.shape[0] < 1:
            raise ValidationError(f"adjacency must be a non-empty square matrix, got {W.shape}")
        if not np.all(np.isfinite(W)):
            i, j = np.argwhere(~np.isfinite(W))[0]
            raise ValidationError(f"adjacency[{i + 1},{j + 1}] is not finite")
        neg = np.argwhere(W < 0)
        if neg.size:
            i, j = neg[0]
            raise ValidationError(f"adjacency[{i + 1},{j + 1}] = {W[i, j]} is negative")
        diag = np.flatnonzero(np.diag(W))
        if diag.size:
            i = diag[0]
            raise ValidationError(f"adjacency[{i + 1},{i + 1}] = {W[i, i]} must be zero")
        asym = np.argwhere(W != W.T)
        if asym.size:
            i, j = asym[0]
            raise ValidationError(
                f"adjacency not symmetric: a[{i + 1},{j + 1}] = {W[i, j]} "
                f"but a[{j + 1},{i + 1}] = {W[j, i]}"
            )
        W.setflags(write=False)
        object.__setattr__(self, "adjacency", W)

    @property
    def n_agents(self) -> int:
        return self.adjacency.shape[0]

    @classmethod
    def from_edges(cls, n_agents: int, edges: Iterable[Sequence[float]]) -> "CommGraph":
        """Build from 1-based ``(i, j)`` or ``(i, j, weight)`` triples.

        Missing weights default to 1.0; repeated edges overwrite.
        """
        if n_agents < 1:
            raise ValidationError("n_agents must be >= 1")
        W = np.zeros((n_agents, n_agents))
        for k, edge in enumerate(edges):
            if len(edge) not in (2, 3):
                raise ValidationError(f"edge {k}: expected [i, j] or [i, j, weight]")
            i, j = int(edge[0]), int(edge[1])
            if edge[0] != i or edge[1] != j:
                raise ValidationError(f"edge {k}: endpoints must be integers")
            w = float(edge[2]) if len(edge) == 3 else 1.0
            if not (1 <= i <= n_agents and 1 <= j <= n_agents):
                raise ValidationError(f"edge {k}: endpoint out of range 1..{n_agents}")
            if i == j:
                raise ValidationError(f"edge {k}: self-loop at agent {i}")
            W[i - 1, j - 1] = W[j - 1, i - 1] = w
        return cls(W)


@dataclass(frozen=True)
class LaplacianSpectrum:
    eigenvalues: np.ndarray
    connected: bool

    @property
    def fiedler(self) -> float:
        return float(self.eigenvalues[1]) if self.eigenvalues.size > 1 else 0.0

    @property
    def nonzero(self) -> np.ndarray:
        """Eigenvalues lambda_2..lambda_N."""
        return self.eigenvalues[1:]


def laplacian(g: CommGraph) -> np.ndarray:
    W = g.adjacency
    return np.diag(W.sum(axis=1)) - W


def laplacian_spectrum(g: CommGraph) -> LaplacianSpectrum:
    ev = np.linalg.eigvalsh(laplacian(g))
    ev = np.sort(ev)
    # single agent counts as trivially connected
    connected = g.n_agents == 1 or bool(ev[1] > EPS_CONN)
    return LaplacianSpectrum(ev, connected)


def kappa(s: LaplacianSpectrum) -> float:
    """Scaling ``max(1, 1 / lambda_2)`` so that ``kappa * lambda_i >= 1``."""
    if not s.connected:
        raise GraphNotConnected(
            f"graph is not connected (lambda_2 = {s.fiedler:.3e}); kappa undefined"
        )
    if s.eigenvalues.size < 2:
        return 1.0
    return max(1.0, 1.0 / s.fiedler)


def reduced_disagreement_matrix(g: CommGraph) -> np.ndarray:
    """``L22 + 1 alpha'`` driving the errors ``x_i - x_1``, i = 2..N."""
    if g.n_agents < 2:
        raise ValidationError("reduced disagreement matrix needs at least two agents")
    L = laplacian(g)
    alpha = g.adjacency[0, 1:]
    return L[1:, 1:] + np.outer(np.ones(g.n_agents - 1), alpha)


def component_count(g: CommGraph) -> int:
    """Connected components by union-find over positive-weight edges."""
    parent = list(range(g.n_agents))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in zip(*np.nonzero(g.adjacency)):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
    return len({find(i) for i in range(g.n_agents)})

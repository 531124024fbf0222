"""Random problem generators shared by the property and acceptance tests."""

from __future__ import annotations

import numpy as np
import scipy.linalg
from scipy.stats import ortho_group

from optcons.graph import CommGraph
from optcons.simulator import LtiAgentModel

LQR_MARGIN = 0.25


def random_orthogonal(rng, n):
    if n == 1:
        return np.array([[rng.choice([-1.0, 1.0])]])
    return ortho_group.rvs(n, random_state=rng)


def random_pd(rng, n, lo=0.5):
    M = rng.standard_normal((n, n))
    return M @ M.T / n + lo * np.eye(n)


def random_rank_deficient(rng, rows, cols, rank):
    return rng.standard_normal((rows, rank)) @ rng.standard_normal((rank, cols))


def random_connected_graph(rng, N, p_extra=0.3, wmin=0.2, wmax=2.0):
    """Random spanning tree plus extra edges; weights uniform in [wmin, wmax]."""
    W = np.zeros((N, N))
    order = rng.permutation(N)
    for k in range(1, N):
        i, j = order[k], order[rng.integers(0, k)]
        W[i, j] = W[j, i] = rng.uniform(wmin, wmax)
    for i in range(N):
        for j in range(i + 1, N):
            if W[i, j] == 0 and rng.random() < p_extra:
                W[i, j] = W[j, i] = rng.uniform(wmin, wmax)
    return CommGraph(W)


def random_graph(rng, N, p=0.4):
    """Erdos-Renyi graph, possibly disconnected."""
    W = np.triu((rng.random((N, N)) < p) * rng.uniform(0.1, 2.0, (N, N)), 1)
    return CommGraph(W + W.T)


def _designed_block(rng, nb):
    """Real ``nb x nb`` matrix with eigenvalues either marginal/mildly unstable
    (real part in [0, 0.2]) or well damped (real part in [-2.5, -0.5])."""
    T = np.triu(rng.standard_normal((nb, nb)) * 0.3, 1)
    k = 0
    while k < nb:
        unstable = rng.random() < 0.6
        re = rng.uniform(0.0, 0.2) if unstable else rng.uniform(-2.5, -0.5)
        if k + 1 < nb and rng.random() < 0.4:
            w = rng.uniform(0.3, 1.5)
            T[k:k + 2, k:k + 2] = [[re, w], [-w, re]]
            k += 2
        else:
            T[k, k] = re
            k += 1
    U = random_orthogonal(rng, nb)
    return U @ T @ U.T


def random_regular_instance(rng, deficient: bool) -> LtiAgentModel:
    """Random stabilisable model whose regular ARE is solvable.

    With ``deficient`` the control weight is singular and the free inputs
    act on a block of the state that is invisible to ``Q``, which makes the
    regularity condition hold with a nontrivial free-input matrix. That
    block is fully actuated with singular values in [0.5, 2], so the
    consensus modes decay at a rate visible on a T = 50 horizon. Otherwise
    ``R`` is positive definite. Draws whose LQR closed loop on the
    Q-visible part has spectral abscissa above ``-LQR_MARGIN`` are redrawn.
    State and input coordinates are then rotated by random orthogonal
    matrices.
    """
    while True:
        if deficient:
            na = int(rng.integers(1, 4))
            nb = int(rng.integers(1, 4))
            n = na + nb
            m1 = int(rng.integers(1, 3))
            m2 = nb
            A = np.zeros((n, n))
            A[:na, :na] = rng.standard_normal((na, na))
            A[na:, :na] = 0.2 * rng.standard_normal((nb, na))
            A[na:, na:] = _designed_block(rng, nb)
            B1 = rng.standard_normal((n, m1))
            B1[na:] *= 0.2
            B2 = np.zeros((n, m2))
            # well-conditioned actuation of the Q-invisible block
            B2[na:] = random_orthogonal(rng, nb) @ np.diag(rng.uniform(0.5, 2.0, nb)) @ random_orthogonal(rng, nb)
            Q = np.zeros((n, n))
            Q[:na, :na] = random_pd(rng, na)
            R1 = random_pd(rng, m1)
            B = np.hstack([B1, B2])
            R = scipy.linalg.block_diag(R1, np.zeros((m2, m2)))
            Aq, Bq, Qq, Rq = A[:na, :na], B1[:na], Q[:na, :na], R1
        else:
            n = int(rng.integers(1, 5))
            m = int(rng.integers(1, 3))
            A = rng.standard_normal((n, n))
            B = rng.standard_normal((n, m))
            Q = random_pd(rng, n)
            R = random_pd(rng, m)
            Aq, Bq, Qq, Rq = A, B, Q, R
        # reject slow optimal closed loops (independent scipy CARE)
        P = scipy.linalg.solve_continuous_are(Aq, Bq, Qq, Rq)
        if np.linalg.eigvals(Aq - Bq @ np.linalg.solve(Rq, Bq.T @ P)).real.max() <= -LQR_MARGIN:
            break
    Us = random_orthogonal(rng, n)
    Ui = random_orthogonal(rng, B.shape[1])
    A = Us @ A @ Us.T
    B = Us @ B @ Ui.T
    Q = Us @ Q @ Us.T
    R = Ui @ R @ Ui.T
    Q = (Q + Q.T) / 2
    R = (R + R.T) / 2
    return LtiAgentModel(A, B, Q, R)

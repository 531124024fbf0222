"""Closed-loop simulation of N identical agents under the consensus protocol.

Integration is classical fixed-step RK4 on the stacked state ``X`` of shape
``(N, n)``. Costs are trapezoidal quadratures of the running cost over the
recorded samples.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, NamedTuple

import numpy as np
import scipy.linalg

from .errors import SimulationDivergence, ValidationError
from .graph import CommGraph, laplacian
from .matlib import as_matrix, expm_apply

if TYPE_CHECKING:
    from .synthesis import ConsensusController

DIVERGENCE_NORM = 1e12


@dataclass(frozen=True)
class LtiAgentModel:
    """Per-agent dynamics ``x' = A x + B u`` and weights ``x'Qx + u'Ru``."""

    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    N: int | None = None

    def __post_init__(self):
        for name in ("A", "B", "Q", "R"):
            object.__setattr__(self, name, as_matrix(getattr(self, name), name))
        n, m = self.B.shape
        if self.A.shape != (n, n):
            raise ValidationError(f"A must be {n}x{n} to match B, got {self.A.shape}")
        if self.Q.shape != (n, n):
            raise ValidationError(f"Q must be {n}x{n}, got {self.Q.shape}")
        if self.R.shape != (m, m):
            raise ValidationError(f"R must be {m}x{m}, got {self.R.shape}")
        for name in ("Q", "R"):
            M = getattr(self, name)
            scale = 1.0 + np.linalg.norm(M)
            if np.linalg.norm(M - M.T) > 1e-10 * scale:
                raise ValidationError(f"{name} is not symmetric")
            if M.size and np.linalg.eigvalsh((M + M.T) / 2).min() < -1e-10 * scale:
                raise ValidationError(f"{name} is not positive semidefinite")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True)
class SimConfig:
    x0: np.ndarray
    T: float = 20.0
    h: float = 1e-3
    record_every: int = 1

    def __post_init__(self):
        x0 = np.array(self.x0, dtype=float)
        if x0.ndim == 1:
            x0 = x0.reshape(-1, 1)
        if x0.ndim != 2 or not np.all(np.isfinite(x0)):
            raise ValidationError("x0 must be a finite (N, n) array")
        object.__setattr__(self, "x0", x0)
        if not (self.T > 0 and self.h > 0 and self.h <= self.T):
            raise ValidationError(f"need T > 0 and 0 < h <= T (T = {self.T}, h = {self.h})")
        if self.record_every < 1:
            raise ValidationError("record_every must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.h))


class PredictedCost(NamedTuple):
    alpha: float
    J_star: float
    converged: bool


@dataclass
class SimReport:
    times: np.ndarray
    states: np.ndarray  # (K, N, n)
    controls: np.ndarray  # (K, N, m)
    disagreement: np.ndarray  # (K,) or empty when N == 1
    mean_traj: np.ndarray  # (K, n)
    mean_error: np.ndarray  # (K,) max_i ||x_i - y||^2
    h: float
    cost_per_agent: np.ndarray | None = None
    cost_total: float = float("nan")
    predicted_cost: float = float("nan")
    alpha: float = float("nan")
    alpha_converged: bool = True


def consensus_error(report: SimReport) -> np.ndarray:
    """Max over agent pairs of ``||x_i - x_j||^2`` at each sample."""
    S = report.states
    N = S.shape[1]
    if N < 2:
        return np.zeros(0)
    out = np.zeros(S.shape[0])
    for i in range(N - 1):
        d = S[:, i + 1:, :] - S[:, i:i + 1, :]
        out = np.maximum(out, np.einsum("kjn,kjn->kj", d, d).max(axis=1))
    return out


def _running_cost(report: SimReport, model: LtiAgentModel) -> np.ndarray:
    X, U = report.states, report.controls
    return np.einsum("kia,ab,kib->ki", X, model.Q, X) + np.einsum(
        "kia,ab,kib->ki", U, model.R, U
    )


def cost_quadrature(report: SimReport, model: LtiAgentModel) -> tuple[np.ndarray, float]:
    """Trapezoidal cost per agent over the recorded horizon, and the total."""
    if report.times.size < 2:
        per = np.zeros(report.states.shape[1])
        return per, 0.0
    f = _running_cost(report, model)
    per = np.trapezoid(f, report.times, axis=0)
    # integrand is a sum of PSD forms; clip rounding below zero
    per = np.maximum(per, 0.0)
    return per, float(per.sum())


def _range_basis(P: np.ndarray) -> np.ndarray:
    if P.size == 0:
        return np.zeros((P.shape[0], 0))
    w, U = np.linalg.eigh((P + P.T) / 2)
    keep = np.abs(w) > 1e-12 * max(np.abs(w).max(), 1e-300)
    return U[:, keep]


def predicted_cost(P, cfg: SimConfig, A_cal, horizon_factor: float = 10.0) -> PredictedCost:
    """``sum_i x_i(0)'P x_i(0) - alpha N`` with ``alpha = lim y'Py``.

    The limit is approximated at ``horizon_factor * cfg.T`` along
    ``y' = A_cal y`` from the mean initial state; ``converged`` is False when
    ``d(y'Py)/dt`` is still above tolerance there.
    """
    P = np.asarray(P, dtype=float)
    A_cal = np.asarray(A_cal, dtype=float)
    x0 = cfg.x0
    N = x0.shape[0]
    y0 = x0.mean(axis=0)
    t_alpha = horizon_factor * cfg.T
    # y'Py only sees range(P). When ker P is A_cal-invariant the range
    # coordinates z = W'y evolve on their own, so modes growing inside
    # ker P cannot leak into alpha through rounding.
    W = _range_basis(P)
    V = np.eye(P.shape[0]) - W @ W.T
    if np.linalg.norm(W.T @ A_cal @ V) <= 1e-10 * (1.0 + np.linalg.norm(A_cal)):
        P_r, A_r, v0 = W.T @ P @ W, W.T @ A_cal @ W, W.T @ y0
    else:
        P_r, A_r, v0 = P, A_cal, y0
    y = expm_apply(A_r, t_alpha, v0)
    with np.errstate(all="ignore"):
        alpha = float(y @ P_r @ y)
        rate = float(y @ (A_r.T @ P_r + P_r @ A_r) @ y)
    converged = bool(np.isfinite(alpha) and abs(rate) <= 1e-8 * (1.0 + abs(alpha)))
    initial = float(np.einsum("ia,ab,ib->", x0, P, x0))
    return PredictedCost(alpha, initial - alpha * N, converged)


def mean_trajectory_check(report: SimReport, A_cal) -> float:
    """Max deviation of the simulated mean from ``expm(A_cal t) y(0)``."""
    y = report.mean_traj
    if y.shape[0] == 0:
        return 0.0
    A_cal = np.asarray(A_cal, dtype=float)
    # expm in the complex Schur basis keeps the diagonal exact; expm(A t)
    # directly loses several digits at large t when A is far from normal
    T, U = scipy.linalg.schur(A_cal, output="complex")
    z0 = U.conj().T @ y[0]
    dev = 0.0
    for t, yt in zip(report.times, y):
        ref = (U @ (scipy.linalg.expm(T * t) @ z0)).real
        dev = max(dev, float(np.linalg.norm(yt - ref)))
    return dev


def decay_rate(times, series, floor: float = 1e-24, tail: float = 0.5) -> float:
    """Exponential rate ``rho`` from a log-linear fit ``series ~ C exp(-rho t)``.

    Uses samples in the last ``tail`` fraction of the horizon that lie above
    ``floor``. Returns ``inf`` if the series is already at the floor there.
    """
    times = np.asarray(times, dtype=float)
    series = np.asarray(series, dtype=float)
    start = times[0] + (1.0 - tail) * (times[-1] - times[0])
    mask = (times >= start) & (series > floor)
    if mask.sum() < 2:
        return float("inf")
    slope, _ = np.polyfit(times[mask], np.log(series[mask]), 1)
    return float(-slope)


def simulate(
    model: LtiAgentModel,
    ctrl: "ConsensusController",
    graph: CommGraph,
    cfg: SimConfig,
) -> SimReport:
    """Integrate all agents with the consensus law and fill in the costs.

    Raises
    ------
    SimulationDivergence
        If any state entry exceeds 1e12 in magnitude.
    """
    N = graph.n_agents
    if cfg.x0.shape != (N, model.n):
        raise ValidationError(f"x0 must be ({N}, {model.n}), got {cfg.x0.shape}")
    L = laplacian(graph)
    Acl_T = (model.A - model.B @ ctrl.F).T
    G_T = (model.B @ ctrl.relative_gain).T

    def rhs(X):
        return X @ Acl_T - (L @ X) @ G_T

    h = cfg.h
    n_steps = cfg.n_steps
    rec = list(range(0, n_steps + 1, cfg.record_every))
    if rec[-1] != n_steps:
        rec.append(n_steps)
    K = len(rec)
    states = np.empty((K, N, model.n))
    X = cfg.x0.copy()
    states[0] = X
    r = 1
    for k in range(1, n_steps + 1):
        k1 = rhs(X)
        k2 = rhs(X + 0.5 * h * k1)
        k3 = rhs(X + 0.5 * h * k2)
        k4 = rhs(X + h * k3)
        X = X + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.abs(X) <= DIVERGENCE_NORM):
            raise SimulationDivergence(f"state norm exceeded 1e12 at t = {k * h:.6g}", time=k * h)
        if r < K and rec[r] == k:
            states[r] = X
            r += 1

    times = np.array(rec, dtype=float) * h
    controls = np.stack([ctrl.control(S, L) for S in states])
    mean = states.mean(axis=1)
    dev = states - mean[:, None, :]
    report = SimReport(
        times=times,
        states=states,
        controls=controls,
        disagreement=np.zeros(0),
        mean_traj=mean,
        mean_error=np.einsum("kia,kia->ki", dev, dev).max(axis=1),
        h=h,
    )
    report.disagreement = consensus_error(report)
    report.cost_per_agent, report.cost_total = cost_quadrature(report, model)
    pred = predicted_cost(ctrl.P, cfg, model.A - model.B @ ctrl.F)
    report.alpha = pred.alpha
    report.predicted_cost = pred.J_star
    report.alpha_converged = pred.converged
    return report

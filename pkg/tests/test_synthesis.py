import dataclasses

import numpy as np
import pytest
import scipy.linalg

from optcons.errors import GraphNotConnected, RegularityViolation, Unstabilizable
from optcons.graph import CommGraph, laplacian, laplacian_spectrum
from optcons.matlib import is_hurwitz
from optcons.riccati import solve_regular_are
from optcons.simulator import LtiAgentModel
from optcons.synthesis import (
    closed_loop_pair,
    solve_unstable_are,
    synthesize,
    unstable_are_residual,
    verify_mode_stability,
)

from _instances import random_connected_graph, random_regular_instance

SQ3 = np.sqrt(3.0)
EX1_MODEL = LtiAgentModel(
    A=[[0.0, 1.0], [0.0, 0.0]], B=[[0.0, 0.0], [0.0, 1.0]], Q=np.zeros((2, 2)), R=np.diag([1.0, 0.0])
)
EX1_GRAPH = CommGraph.from_edges(4, [(1, 2), (1, 3), (2, 3), (3, 4)])
EX2_MODEL = LtiAgentModel(A=[[0.0]], B=[[1.0, 1.0]], Q=[[1.0]], R=np.diag([1.0, 0.0]))


def test_closed_loop_pair_examples():
    pair = closed_loop_pair(EX1_MODEL, np.zeros((2, 2)))
    np.testing.assert_array_equal(pair.A_cal, EX1_MODEL.A)
    np.testing.assert_array_equal(pair.B_cal, [[0.0, 0.0], [0.0, 1.0]])

    pair = closed_loop_pair(EX2_MODEL, [[1.0]])
    np.testing.assert_allclose(pair.A_cal, [[-1.0]], atol=1e-15)
    np.testing.assert_allclose(pair.B_cal, [[0.0, 1.0]], atol=1e-15)


def test_solve_unstable_are_examples():
    assert solve_unstable_are(np.zeros((0, 0)), np.zeros((0, 1))).shape == (0, 0)
    # 2p - p^2 + 1 = 0
    np.testing.assert_allclose(solve_unstable_are([[1.0]], [[1.0]]), [[1 + np.sqrt(2.0)]], atol=1e-12)
    P_u = solve_unstable_are(EX1_MODEL.A, [[0.0, 0.0], [0.0, 1.0]])
    np.testing.assert_allclose(P_u, [[SQ3, 1.0], [1.0, SQ3]], atol=1e-12)


def test_singular_reference_candidate_is_not_a_solution():
    # the singular candidate [[1, sqrt3], [sqrt3, 3]] leaves a large residual
    candidate = np.array([[1.0, SQ3], [SQ3, 3.0]])
    B_u = np.array([[0.0, 0.0], [0.0, 1.0]])
    assert unstable_are_residual(EX1_MODEL.A, B_u, candidate) >= 1.0
    assert abs(np.linalg.det(candidate)) <= 1e-12


def test_unstable_are_rejects_unreachable_mode():
    with pytest.raises(Unstabilizable) as ei:
        solve_unstable_are(np.diag([1.0, 2.0]), np.array([[1.0], [0.0]]))
    assert abs(ei.value.eigenvalue - 2.0) < 1e-12


def test_synthesize_example1():
    ctrl = synthesize(EX1_MODEL, EX1_GRAPH)
    assert ctrl.kappa == 1.0
    np.testing.assert_array_equal(ctrl.F, np.zeros((2, 2)))
    np.testing.assert_array_equal(ctrl.Pi, np.diag([0.0, 1.0]))
    assert ctrl.split.n_u == 2
    np.testing.assert_allclose(ctrl.P_u, [[SQ3, 1.0], [1.0, SQ3]], atol=1e-12)
    np.testing.assert_allclose(ctrl.relative_gain, [[0.0, 0.0], [1.0, SQ3]], atol=1e-12)


def test_synthesize_example2_requires_flag():
    g = CommGraph.from_edges(3, [(1, 2), (2, 3)])
    with pytest.raises(RegularityViolation) as ei:
        synthesize(EX2_MODEL, g)
    assert abs(ei.value.residual - 1.0) < 1e-10
    ctrl = synthesize(EX2_MODEL, g, allow_irregular=True)
    np.testing.assert_allclose(ctrl.F, [[1.0], [0.0]], atol=1e-12)
    assert ctrl.split.n_u == 0
    np.testing.assert_array_equal(ctrl.Kgain, np.zeros((2, 1)))


def test_synthesize_zero_weight():
    # all inputs free: the whole gain comes from the unstable block
    m = LtiAgentModel([[0.0, 1.0], [0.0, 0.0]], [[0.0], [1.0]], np.zeros((2, 2)), [[0.0]])
    ctrl = synthesize(m, CommGraph.from_edges(2, [(1, 2)]))
    np.testing.assert_array_equal(ctrl.F, np.zeros((1, 2)))
    np.testing.assert_array_equal(ctrl.Pi, [[1.0]])
    np.testing.assert_allclose(ctrl.relative_gain, [[1.0, SQ3]], atol=1e-12)


def test_synthesize_disconnected_graph():
    with pytest.raises(GraphNotConnected):
        synthesize(EX1_MODEL, CommGraph.from_edges(4, [(1, 2), (3, 4)]))


def test_synthesize_unstabilizable():
    # P = 0 is minimal, so the unstable mode is left to the (absent) free inputs
    m = LtiAgentModel([[1.0]], [[1.0]], [[0.0]], [[1.0]])
    with pytest.raises(Unstabilizable):
        synthesize(m, CommGraph.from_edges(2, [(1, 2)]))


def test_kappa_scales_gain():
    g = CommGraph.from_edges(2, [(1, 2, 0.25)])  # lambda_2 = 0.5
    ctrl = synthesize(EX1_MODEL, g)
    assert ctrl.kappa == 2.0
    np.testing.assert_allclose(ctrl.relative_gain, 2.0 * np.array([[0.0, 0.0], [1.0, SQ3]]), atol=1e-12)


def test_verify_modes_examples():
    ctrl = synthesize(EX1_MODEL, EX1_GRAPH)
    pair = closed_loop_pair(EX1_MODEL, ctrl.P)
    check = verify_mode_stability(ctrl, pair, laplacian_spectrum(EX1_GRAPH))
    assert check and len(check.modes) == 3
    assert all(d.max_real_full < 0 for d in check.modes)

    g = CommGraph.from_edges(3, [(1, 2), (2, 3)])
    ctrl2 = synthesize(EX2_MODEL, g, allow_irregular=True)
    pair2 = closed_loop_pair(EX2_MODEL, ctrl2.P)
    assert verify_mode_stability(ctrl2, pair2, laplacian_spectrum(g))

    zero = dataclasses.replace(ctrl, Kgain=np.zeros_like(ctrl.Kgain))
    assert not verify_mode_stability(zero, pair, laplacian_spectrum(EX1_GRAPH))


def _random_setups(seed, count):
    rng = np.random.default_rng(seed)
    for k in range(count):
        model = random_regular_instance(rng, deficient=k % 2 == 0)
        graph = random_connected_graph(rng, int(rng.integers(2, 7)))
        yield model, graph


def test_lyapunov_certificate_random():
    # P_u certifies every mode: with lambda * kappa >= 1, the derivative
    # form is bounded by -I
    for model, graph in _random_setups(21, 30):
        ctrl = synthesize(model, graph)
        s = ctrl.split
        if s.n_u == 0:
            continue
        K_u = (ctrl.Kgain @ s.T1)[:, s.n_s:]
        for lam in laplacian_spectrum(graph).nonzero:
            Acl = s.A_u - lam * s.B_u @ K_u
            M = Acl.T @ ctrl.P_u + ctrl.P_u @ Acl
            assert np.linalg.eigvalsh((M + M.T) / 2).max() <= -1.0 + 1e-6 * (1 + np.linalg.norm(ctrl.P_u))


def test_mode_check_random():
    for model, graph in _random_setups(22, 30):
        ctrl = synthesize(model, graph)
        pair = closed_loop_pair(model, ctrl.P)
        assert verify_mode_stability(ctrl, pair, laplacian_spectrum(graph))


def test_projector_structure_random():
    for model, graph in _random_setups(23, 30):
        ctrl = synthesize(model, graph)
        Pi, R = ctrl.Pi, model.R
        sc = 1 + np.linalg.norm(R)
        np.testing.assert_allclose(Pi @ Pi, Pi, atol=1e-10)
        np.testing.assert_allclose(Pi, Pi.T, atol=1e-10)
        np.testing.assert_allclose(R @ Pi, 0.0, atol=1e-10 * sc)
        # relative input carries no cost: R (u + F x) = 0
        rng = np.random.default_rng(0)
        X = rng.standard_normal((graph.n_agents, model.n))
        U = ctrl.control(X, laplacian(graph))
        np.testing.assert_allclose((U + X @ ctrl.F.T) @ R, 0.0, atol=1e-8 * sc * (1 + np.abs(U).max()))


def test_invertible_weight_gives_no_coupling():
    rng = np.random.default_rng(24)
    for _ in range(10):
        model = random_regular_instance(rng, deficient=False)
        ctrl = synthesize(model, random_connected_graph(rng, 4))
        assert np.abs(ctrl.Pi).max() <= 1e-10
        assert np.abs(ctrl.relative_gain).max() <= 1e-8 * (1 + np.abs(ctrl.Kgain).max())
        # optimal local loop is Hurwitz on its own
        assert is_hurwitz(model.A - model.B @ ctrl.F)


def test_local_gain_matches_scipy_for_invertible_weight():
    rng = np.random.default_rng(25)
    for _ in range(10):
        model = random_regular_instance(rng, deficient=False)
        P_ref = scipy.linalg.solve_continuous_are(model.A, model.B, model.Q, model.R)
        sol = solve_regular_are(model.A, model.B, model.Q, model.R)
        np.testing.assert_allclose(sol.P, P_ref, atol=1e-8 * (1 + np.linalg.norm(P_ref)))

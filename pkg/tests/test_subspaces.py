import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from unhinged_dynamics.shapes import ProblemShape, build_coupling, random_state
from unhinged_dynamics.subspaces import (TAGS, apply_b, b_eigenbasis, decompose, eigenvalue_of,
                                         project_e1, project_e2, project_e3)

shapes = st.builds(ProblemShape, st.integers(1, 6), st.integers(2, 5), st.integers(1, 4),
                   st.floats(0.0, 2.0))


def pair_norm(Z):
    return math.sqrt(sum(np.vdot(x, x) for x in Z))


def dense_b(shape):
    # B acting on vec([H, W]) with H columns first, built from the dense M
    M = build_coupling(shape).M
    n, C = shape.n_samples, shape.C
    B = np.zeros((n + C, n + C))
    B[:n, n:] = M.T       # H_out = W M, so column k of H_out = sum_c W[:, c] M[c, k]
    B[n:, :n] = M
    return B


@settings(max_examples=50)
@given(shapes, st.integers(0, 2**32 - 1))
def test_decomposition_orthogonal_and_complete(shape, seed):
    Z = random_state(shape, seed).hw
    d = decompose(Z, shape)
    energy = pair_norm(Z) ** 2
    comps = d.components
    for i in range(5):
        for j in range(i + 1, 5):
            ip = np.vdot(comps[i].H, comps[j].H) + np.vdot(comps[i].W, comps[j].W)
            assert abs(ip) < 1e-10 * energy
    H, W = d.reconstruct()
    assert pair_norm((H - Z[0], W - Z[1])) < 1e-10 * math.sqrt(energy)


@settings(max_examples=50)
@given(shapes, st.integers(0, 2**32 - 1))
def test_projectors_are_idempotent(shape, seed):
    d = decompose(random_state(shape, seed).hw, shape)
    for comp in d.components:
        again = decompose(comp.hw, shape)[comp.tag]
        assert pair_norm((again.H - comp.H, again.W - comp.W)) < 1e-12 * max(1.0, pair_norm(comp.hw))


@settings(max_examples=50)
@given(shapes, st.integers(0, 2**32 - 1))
def test_spectral_reconstruction_of_b(shape, seed):
    Z = random_state(shape, seed).hw
    d = decompose(Z, shape)
    BH, BW = apply_b(Z, shape)
    SH = sum(c.eigenvalue * c.H for c in d.components)
    SW = sum(c.eigenvalue * c.W for c in d.components)
    assert pair_norm((BH - SH, BW - SW)) <= 1e-10 * max(pair_norm((BH, BW)), 1e-300) + 1e-300


@pytest.mark.parametrize("dims", [(3, 2, 1), (4, 3, 2), (2, 4, 3)])
@pytest.mark.parametrize("gamma", [0.0, 0.3, 1.0])
def test_eigenbasis_diagonalizes_dense_b(dims, gamma):
    shape = ProblemShape(*dims, gamma)
    U, sigma = b_eigenbasis(shape)
    np.testing.assert_allclose(U.T @ U, np.eye(U.shape[0]), atol=1e-13)
    np.testing.assert_allclose(dense_b(shape) @ U, U * sigma, atol=1e-13)
    dense = np.sort(np.linalg.eigvalsh(dense_b(shape)))
    np.testing.assert_allclose(np.sort(sigma), dense, atol=1e-13)


def test_eigenvalues():
    shape = ProblemShape(4, 100, 10, 0.05)
    assert abs(eigenvalue_of("E2-", shape)) == pytest.approx(3.95 / (100 * math.sqrt(10)))
    assert eigenvalue_of("E1+", shape) == pytest.approx(1.05 / (100 * math.sqrt(10)))
    # at gamma = 1/(C-1) the E2 pair collapses onto the null eigenvalue
    neutral = ProblemShape(4, 5, 2, 1 / 4)
    assert neutral.sigma1 == pytest.approx((5 / 4) / (5 * math.sqrt(2)), rel=1e-15)
    assert neutral.sigma2 == 0.0
    edge = ProblemShape(4, 6, 2, 2 / 4)
    assert abs(edge.sigma2) == pytest.approx(edge.sigma1)
    small = ProblemShape(1, 2, 1, 1.0)
    assert small.sigma1 == 1.0 and small.sigma2 == 0.0
    with pytest.raises(ValueError):
        eigenvalue_of("E4", shape)


def test_projection_examples():
    shape = ProblemShape(3, 4, 2, 0.2)
    rng = np.random.default_rng(0)
    W = rng.normal(size=(3, 4))
    W -= W.mean(axis=1, keepdims=True)
    comp = project_e1((np.zeros((3, 8)), W), shape, 1)
    np.testing.assert_allclose(comp.W, W / 2, atol=1e-15)
    np.testing.assert_allclose(comp.H, np.repeat(W, 2, axis=1) / (2 * math.sqrt(2)), atol=1e-15)

    h0 = rng.normal(size=3)
    for sign in (1, -1):
        comp = project_e2((np.zeros((3, 8)), np.outer(h0, np.ones(4))), shape, sign)
        np.testing.assert_allclose(comp.W, np.outer(h0 / 2, np.ones(4)), atol=1e-15)
        np.testing.assert_allclose(comp.H, sign / (2 * math.sqrt(2)) * np.outer(h0, np.ones(8)),
                                   atol=1e-15)

    H3 = project_e3((rng.normal(size=(3, 8)), W), shape)
    assert np.all(H3.W == 0)
    for tag in ("E1+", "E1-", "E2+", "E2-"):
        c = decompose(H3.hw, shape)[tag]
        assert pair_norm(c.hw) < 1e-15


def test_e3_vanishes_for_single_sample_classes():
    shape = ProblemShape(3, 4, 1, 0.2)
    c = project_e3(random_state(shape, 1).hw, shape)
    assert not np.any(c.H) and not np.any(c.W)


def test_zero_input():
    shape = ProblemShape(3, 4, 2, 0.2)
    d = decompose((np.zeros((3, 8)), np.zeros((3, 4))), shape)
    assert all(pair_norm(c.hw) == 0 for c in d.components)
    assert [c.tag for c in d.components] == list(TAGS)


def test_sign_must_be_unit():
    shape = ProblemShape(3, 4, 2, 0.2)
    with pytest.raises(ValueError):
        project_e1(random_state(shape, 0).hw, shape, 0)

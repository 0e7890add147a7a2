"""Smoke tests for the python bindings."""

import math

import numpy as np
import pytest

import lano


def test_softmax_attention_rows_mix_values():
    rng = np.random.default_rng(0)
    n, d = 6, 4
    q = rng.standard_normal((n, d))
    k = rng.standard_normal((n, d))
    v = rng.standard_normal((n, d))
    out = lano.softmax_attention(q, k, v, 1.0 / math.sqrt(d))

    scores = (q @ k.T) / math.sqrt(d)
    w = np.exp(scores - scores.max(axis=1, keepdims=True))
    w /= w.sum(axis=1, keepdims=True)
    np.testing.assert_allclose(out, w @ v, rtol=1e-10, atol=1e-12)


def test_agent_attention_matches_composed_product():
    rng = np.random.default_rng(1)
    n, m, d = 9, 3, 4
    q = rng.standard_normal((n, d))
    k = rng.standard_normal((n, d))
    v = rng.standard_normal((n, d))
    a = lano.agent_pool(q, m)
    scale = 1.0 / math.sqrt(d)
    out = lano.agent_attention_core(q, k, v, a, scale=scale)

    def softmax(x):
        e = np.exp(x - x.max(axis=1, keepdims=True))
        return e / e.sum(axis=1, keepdims=True)

    s1 = softmax(a @ k.T * scale)
    s2 = softmax(q @ a.T * scale)
    np.testing.assert_allclose(out, (s2 @ s1) @ v, rtol=1e-9, atol=1e-11)


def test_agent_pool_segments():
    q = np.arange(10, dtype=float).reshape(5, 2)
    pooled = lano.agent_pool(q, 5)
    np.testing.assert_allclose(pooled, q)
    mean = lano.agent_pool(q, 1)
    np.testing.assert_allclose(mean[0], q.mean(axis=0))


def test_build_biases_interpolates():
    u1 = np.zeros((1, 2))
    v1 = np.array([[0.0, 1.0]])
    u2 = np.zeros((1, 2))
    v2 = np.zeros((1, 2))
    b1, b2 = lano.build_biases(u1, v1, u2, v2, 3)
    np.testing.assert_allclose(b1[0, 0], [0.0, 0.5, 1.0])
    assert b2.shape == (1, 3, 2)


def test_darcy_solver_boundary_and_positivity():
    a = lano.gen_coefficient(7, 16)
    assert set(np.unique(a)) == {3.0, 12.0}
    u = lano.solve_darcy_fd(a, np.ones((16, 16)))
    assert np.all(u[0, :] == 0) and np.all(u[-1, :] == 0)
    assert np.all(u[:, 0] == 0) and np.all(u[:, -1] == 0)
    assert np.all(u >= 0)
    assert u.max() > 0


def test_relative_l2_values():
    truth = np.array([[1.0], [1.0]])
    assert lano.relative_l2(truth, truth) == 0.0
    assert lano.relative_l2(np.array([[1.0], [0.0]]), truth) == pytest.approx(
        1 / math.sqrt(2)
    )
    with pytest.raises(lano.LanoError):
        lano.relative_l2(truth, np.zeros((2, 1)))


def test_flop_count_closed_forms():
    dominant, _ = lano.flop_count("agent", 1000, 64, 128, 8)
    assert dominant == 4 * 1000 * 64 * 128
    dominant, _ = lano.flop_count("softmax", 1000, 0, 128, 8)
    assert dominant == 2 * 1000 * 1000 * 128


def test_resample_grid_identity_and_linear():
    field = np.add.outer(np.linspace(0, 2, 5), np.linspace(0, 1, 5))
    up = lano.resample_grid(field, 9, 9)
    want = np.add.outer(np.linspace(0, 2, 9), np.linspace(0, 1, 9))
    np.testing.assert_allclose(up, want, atol=1e-12)

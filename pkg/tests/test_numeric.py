import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mllmcl.errors import DimensionMismatch, InsufficientPoints, NonPositiveTemperature, ZeroNorm
from mllmcl.numeric import (
    cosine_similarity,
    finite_difference_check,
    js_divergence,
    kl_divergence,
    normalized_distance,
    pairwise_distance_matrix,
    pca_project,
    softmax_with_temperature,
)

import oracles


def test_cosine_examples():
    assert cosine_similarity([1, 0], [1, 0]) == 1.0
    assert cosine_similarity([1, 0], [0, 1]) == 0.0
    assert cosine_similarity([1, 1], [1, 0]) == pytest.approx(0.7071067811865475, abs=1e-15)


def test_cosine_errors():
    with pytest.raises(DimensionMismatch):
        cosine_similarity([1, 0], [1, 0, 0])
    with pytest.raises(ZeroNorm):
        cosine_similarity([0, 0], [1, 0])


def test_normalized_distance_examples():
    assert normalized_distance([2, 0], [1, 0]) == 1.0
    assert normalized_distance([1, 0], [-1, 0]) == 0.0
    assert normalized_distance([1, 0], [0, 3]) == 0.5


def test_distance_matrix_small_cases():
    np.testing.assert_array_equal(pairwise_distance_matrix(np.array([[0.3, -2.0]])), [[1.0]])
    np.testing.assert_allclose(pairwise_distance_matrix(np.array([[1.0, 2.0], [1.0, 2.0]])), 1.0, atol=1e-15)


def test_distance_matrix_matches_double_loop():
    rng = np.random.default_rng(3)
    for _ in range(20):
        h = rng.standard_normal((int(rng.integers(1, 12)), 5))
        np.testing.assert_allclose(pairwise_distance_matrix(h), oracles.distance_matrix(h.tolist()), atol=1e-12)


def test_distance_matrix_reports_zero_row():
    h = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]])
    with pytest.raises(ZeroNorm) as err:
        pairwise_distance_matrix(h)
    assert err.value.row == 1


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 8), st.integers(1, 6)),
              elements=st.floats(-10, 10).filter(lambda x: abs(x) > 1e-3)))
def test_distance_matrix_invariants(h):
    D = pairwise_distance_matrix(h)
    assert np.all(D >= 0) and np.all(D <= 1)
    np.testing.assert_allclose(D, D.T, atol=1e-12)
    np.testing.assert_array_equal(np.diag(D), 1.0)


def test_softmax_examples():
    np.testing.assert_allclose(softmax_with_temperature([0.0, 0.0], 1.0), [0.5, 0.5])
    np.testing.assert_allclose(softmax_with_temperature([math.log(2), 0.0], 1.0), [2 / 3, 1 / 3], atol=1e-15)
    big = softmax_with_temperature([1000.0, 0.0], 1.0)
    assert np.all(np.isfinite(big))
    np.testing.assert_allclose(big, [1.0, 0.0], atol=1e-300)
    with pytest.raises(NonPositiveTemperature):
        softmax_with_temperature([1.0], 0.0)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.integers(1, 8), elements=st.floats(-50, 50)),
       st.floats(0.05, 10), st.floats(-100, 100))
def test_softmax_sums_to_one_and_is_shift_invariant(z, tau, shift):
    p = softmax_with_temperature(z, tau)
    assert abs(p.sum() - 1.0) < 1e-9
    np.testing.assert_allclose(softmax_with_temperature(z + shift, tau), p, atol=1e-9)


def test_kl_examples():
    p = np.array([0.2, 0.3, 0.5])
    assert kl_divergence(p, p) == 0.0
    assert kl_divergence([1, 0], [0.5, 0.5]) == pytest.approx(0.6931471805599453, abs=1e-15)
    assert kl_divergence([0.5, 0.5], [0.25, 0.75]) == pytest.approx(0.1438410362258904, abs=1e-15)
    with pytest.raises(DimensionMismatch):
        kl_divergence([1.0], [0.5, 0.5])


def test_js_examples():
    assert js_divergence([0.1, 0.9], [0.1, 0.9]) == 0.0
    assert js_divergence([1, 0], [0, 1]) == pytest.approx(math.log(2), abs=1e-15)


prob_vectors = st.integers(2, 6).flatmap(
    lambda n: st.tuples(
        arrays(np.float64, n, elements=st.floats(0, 1)),
        arrays(np.float64, n, elements=st.floats(0, 1)),
    )).filter(lambda pq: pq[0].sum() > 1e-6 and pq[1].sum() > 1e-6).map(
    lambda pq: (pq[0] / pq[0].sum(), pq[1] / pq[1].sum()))


@settings(max_examples=100, deadline=None)
@given(prob_vectors)
def test_divergence_bounds_and_symmetry(pq):
    p, q = pq
    assert kl_divergence(p, p) == pytest.approx(0.0, abs=1e-12)
    assert kl_divergence(p, q) >= -1e-12
    js = js_divergence(p, q)
    assert -1e-12 <= js <= math.log(2) + 1e-12
    assert abs(js - js_divergence(q, p)) <= 1e-12
    assert js == pytest.approx(oracles.js(p.tolist(), q.tolist()), abs=1e-12)


def test_finite_difference_check_quadratic():
    x = np.array([0.3, -1.2, 2.0])
    assert finite_difference_check(lambda v: 0.5 * v @ v, x, x) < 1e-7


def test_finite_difference_check_detects_wrong_gradient():
    x = np.array([0.3, -1.2, 2.0])
    err = finite_difference_check(lambda v: 0.5 * v @ v, x, 2 * x)
    assert err == pytest.approx(0.5, abs=1e-6)


def test_pca_in_subspace_is_lossless():
    rng = np.random.default_rng(0)
    basis = np.linalg.qr(rng.standard_normal((6, 2)))[0].T
    pts = rng.standard_normal((15, 2)) @ basis + 3.0
    proj = pca_project(pts, 2)
    from mllmcl.numeric import pca_components
    mean, comps = pca_components(pts, 2)
    recon = mean + proj @ comps
    assert np.max(np.abs(recon - pts)) < 1e-8


def test_pca_two_points_preserves_distance():
    pts = np.array([[1.0, 2.0, 3.0], [-1.0, 0.5, 4.0]])
    proj = pca_project(pts, 1)
    assert abs(proj[0, 0] - proj[1, 0]) == pytest.approx(np.linalg.norm(pts[0] - pts[1]), abs=1e-10)


def test_pca_matches_dense_eigensolver():
    rng = np.random.default_rng(11)
    pts = rng.standard_normal((10, 8)) * np.linspace(3, 0.5, 8)
    proj = pca_project(pts, 2)
    centered = pts - pts.mean(axis=0)
    vals, vecs = np.linalg.eigh(centered.T @ centered / 9)
    ref = centered @ vecs[:, ::-1][:, :2]
    for c in range(2):
        sign = np.sign(ref[:, c] @ proj[:, c])
        np.testing.assert_allclose(proj[:, c], sign * ref[:, c], atol=1e-6)
    assert np.var(proj, axis=0).sum() <= np.var(pts, axis=0).sum()


def test_pca_needs_two_points():
    with pytest.raises(InsufficientPoints):
        pca_project(np.ones((1, 3)), 1)

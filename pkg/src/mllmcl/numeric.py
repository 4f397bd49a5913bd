"""Numeric primitives: cosine geometry, tempered softmax, divergences,
finite-difference checking and PCA.

All functions operate on float64 numpy arrays and are pure.
"""

import numpy as np

from .errors import (
    DimensionMismatch,
    InsufficientPoints,
    NonFiniteValue,
    NonPositiveTemperature,
    ValidationError,
    ZeroNorm,
)

NORM_FLOOR = 1e-12
PROB_FLOOR = 1e-12


def as_vec(values):
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionMismatch(f"expected a 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValue("vector contains NaN or Inf")
    return arr


def _as_rows(rows):
    arr = np.asarray(getattr(rows, "rows", rows), dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D row matrix, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise ValidationError("empty batch")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValue("embedding rows contain NaN or Inf")
    return arr


def cosine_similarity(a, b):
    a, b = as_vec(a), as_vec(b)
    if a.shape != b.shape:
        raise DimensionMismatch(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na <= NORM_FLOOR or nb <= NORM_FLOOR:
        raise ZeroNorm("cosine similarity of a zero-norm vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def normalized_distance(a, b):
    """Map cosine similarity from [-1, 1] onto [0, 1]; 1 means identical direction."""
    return (1.0 + cosine_similarity(a, b)) / 2.0


def row_norms(rows):
    rows = _as_rows(rows)
    norms = np.linalg.norm(rows, axis=1)
    bad = np.flatnonzero(norms <= NORM_FLOOR)
    if bad.size:
        raise ZeroNorm(f"row {int(bad[0])} has zero norm", row=int(bad[0]))
    return norms


def cosine_similarity_matrix(rows):
    """All pairwise cosine similarities; the diagonal is exactly 1."""
    rows = _as_rows(rows)
    unit = rows / row_norms(rows)[:, None]
    sim = np.clip(unit @ unit.T, -1.0, 1.0)
    sim = 0.5 * (sim + sim.T)
    np.fill_diagonal(sim, 1.0)
    return sim


def pairwise_distance_matrix(batch):
    """Normalized cosine matrix D_ij = (1 + s(h_i, h_j)) / 2 for an embedding batch."""
    return 0.5 * (1.0 + cosine_similarity_matrix(batch))


def cosine_matrix_backward(rows, grad_sim):
    """Chain a gradient on the cosine matrix back to the raw rows.

    The diagonal of ``grad_sim`` is ignored because self-similarity is the
    constant 1.
    """
    rows = _as_rows(rows)
    norms = row_norms(rows)
    unit = rows / norms[:, None]
    g = np.array(grad_sim, dtype=np.float64, copy=True)
    np.fill_diagonal(g, 0.0)
    grad_unit = (g + g.T) @ unit
    radial = np.sum(grad_unit * unit, axis=1, keepdims=True)
    return (grad_unit - radial * unit) / norms[:, None]


def distance_matrix_backward(rows, grad_dist):
    return cosine_matrix_backward(rows, 0.5 * np.asarray(grad_dist, dtype=np.float64))


def _check_tau(tau):
    if not tau > 0:
        raise NonPositiveTemperature(f"temperature must be positive, got {tau}")


def log_softmax(logits, tau=1.0):
    _check_tau(tau)
    z = np.asarray(logits, dtype=np.float64) / tau
    z = z - np.max(z, axis=-1, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=-1, keepdims=True))


def softmax_with_temperature(logits, tau=1.0):
    """Row-wise softmax of ``logits / tau`` using a max shift; works on 1-D or 2-D input."""
    _check_tau(tau)
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise NonFiniteValue("logits contain NaN or Inf")
    z = z / tau
    e = np.exp(z - np.max(z, axis=-1, keepdims=True))
    return e / np.sum(e, axis=-1, keepdims=True)


def softmax_backward(probs, grad_probs):
    """Given p = softmax(z) and dL/dp, return dL/dz."""
    probs = np.asarray(probs, dtype=np.float64)
    grad_probs = np.asarray(grad_probs, dtype=np.float64)
    return probs * (grad_probs - np.sum(grad_probs * probs, axis=-1, keepdims=True))


def _pair(p, q):
    p, q = as_vec(p), as_vec(q)
    if p.shape != q.shape:
        raise DimensionMismatch(f"dimension mismatch: {p.shape[0]} vs {q.shape[0]}")
    return p, q


def kl_divergence(p, q):
    """KL(p || q) in nats. Terms with p_i = 0 vanish; q is floored at 1e-12."""
    p, q = _pair(p, q)
    total = 0.0
    for pi, qi in zip(p, q):
        if pi > 0.0:
            total += pi * np.log(pi / max(qi, PROB_FLOOR))
    return float(total)


def js_divergence(p, q):
    p, q = _pair(p, q)
    m = 0.5 * (p + q)
    return 0.5 * kl_divergence(p, m) + 0.5 * kl_divergence(q, m)


def finite_difference_check(f, point, analytic_grad, h=1e-5):
    """Worst component-wise relative error between ``analytic_grad`` and
    central differences of ``f`` at ``point``.

    Relative error uses the denominator max(|a|, |b|, 1e-8).
    """
    x = np.array(point, dtype=np.float64, copy=True).ravel()
    analytic = np.asarray(analytic_grad, dtype=np.float64).ravel()
    if analytic.shape != x.shape:
        raise DimensionMismatch("gradient and point differ in size")
    worst = 0.0
    for i in range(x.size):
        orig = x[i]
        x[i] = orig + h
        f_plus = f(x.copy())
        x[i] = orig - h
        f_minus = f(x.copy())
        x[i] = orig
        numeric = (f_plus - f_minus) / (2.0 * h)
        a = analytic[i]
        err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
        worst = max(worst, err)
    return worst


def pca_components(points, k, max_iter=200, tol=1e-10, seed=0):
    """Top-k principal directions via power iteration with deflation.

    Returns (mean, components) with components of shape (k, dim). Each
    direction is sign-normalized so its largest-magnitude entry is positive.
    """
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise InsufficientPoints("PCA needs at least 2 points")
    n, dim = x.shape
    if not 1 <= k <= dim:
        raise DimensionMismatch(f"k={k} must lie in [1, {dim}]")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (n - 1)
    rng = np.random.default_rng(seed)
    components = np.zeros((k, dim))
    for c in range(k):
        v = rng.standard_normal(dim)
        # stay orthogonal to directions already found
        v -= components[:c].T @ (components[:c] @ v)
        v /= np.linalg.norm(v)
        for _ in range(max_iter):
            w = cov @ v
            w -= components[:c].T @ (components[:c] @ w)
            norm = np.linalg.norm(w)
            if norm <= NORM_FLOOR:
                break
            w /= norm
            if np.dot(w, v) < 0:
                w = -w
            done = np.linalg.norm(w - v) < tol
            v = w
            if done:
                break
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        components[c] = v
        eig = v @ cov @ v
        cov = cov - eig * np.outer(v, v)
    return mean, components


def pca_project(points, k, max_iter=200, tol=1e-10):
    mean, components = pca_components(points, k, max_iter=max_iter, tol=tol)
    return (np.asarray(points, dtype=np.float64) - mean) @ components.T

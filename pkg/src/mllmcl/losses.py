"""Loss functions. Each returns a :class:`LossResult` holding the scalar value
and the gradient with respect to each differentiable input.

Contrastive losses take embedding rows and return gradients on those rows
(key ``"h"``). The distance polarization regularizer works on a distance
matrix and returns a gradient on it (key ``"D"``); use
:func:`polarization_on_embeddings` to chain it back to rows.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BatchTooSmall,
    DimensionMismatch,
    EmptyTargets,
    InvalidMargin,
    LabelOutOfRange,
    NonPositiveTemperature,
    ShapeMismatch,
    ValidationError,
)
from .numeric import (
    PROB_FLOOR,
    cosine_matrix_backward,
    cosine_similarity_matrix,
    distance_matrix_backward,
    log_softmax,
    pairwise_distance_matrix,
    softmax_with_temperature,
)


@dataclass
class LossResult:
    value: float
    input_grads: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.input_grads[key]

    def renamed(self, mapping):
        return LossResult(self.value, {mapping.get(k, k): g for k, g in self.input_grads.items()})


@dataclass(frozen=True)
class MarginConfig:
    delta_plus: float = 0.2
    delta_minus: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.delta_plus < self.delta_minus < 1.0:
            raise InvalidMargin(
                f"need 0 < delta_plus < delta_minus < 1, got {self.delta_plus}, {self.delta_minus}")


def _check_tau(tau):
    if not tau > 0:
        raise NonPositiveTemperature(f"temperature must be positive, got {tau}")


def _rows(batch):
    return np.asarray(getattr(batch, "rows", batch), dtype=np.float64)


def _offdiag_log_softmax(scaled):
    """Row-wise log-softmax over k != i; the diagonal comes back as -inf."""
    z = scaled.copy()
    np.fill_diagonal(z, -np.inf)
    return log_softmax(z)


def self_supervised_contrastive(batch, tau_sc, positive=None, allow_single_pair=False):
    """In-batch contrastive loss over the 2N ordered positive pairs.

    Each anchor's denominator covers every other row in the batch, the
    positive included. ``positive`` defaults to ``batch.positive``.
    ``allow_single_pair`` permits N = 1, where the loss is identically 0.
    """
    _check_tau(tau_sc)
    h = _rows(batch)
    pos = np.asarray(batch.positive if positive is None else positive, dtype=np.int64)
    m = len(h)
    if m % 2 or len(pos) != m or np.any(pos < 0) or np.any(pos[pos] != np.arange(m)):
        raise ShapeMismatch("self-supervised contrastive loss needs a complete pair mapping")
    if m // 2 < 2 and not (allow_single_pair and m == 2):
        raise BatchTooSmall("need at least 2 pairs for in-batch negatives")
    sim = cosine_similarity_matrix(h)
    logp = _offdiag_log_softmax(sim / tau_sc)
    idx = np.arange(m)
    value = -np.sum(logp[idx, pos]) / m
    grad_scaled = np.exp(logp)
    grad_scaled[idx, pos] -= 1.0
    grad_sim = grad_scaled / (m * tau_sc)
    return LossResult(float(value), {"h": cosine_matrix_backward(h, grad_sim)})


def distance_polarization(D, margin):
    """L1 norm of min((D - d+)(D - d-), 0) over every entry of D."""
    if not isinstance(margin, MarginConfig):
        raise InvalidMargin("margin must be a MarginConfig")
    D = np.asarray(D, dtype=np.float64)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ShapeMismatch(f"distance matrix must be square, got {D.shape}")
    if not np.all(np.isfinite(D)) or D.min() < 0.0 or D.max() > 1.0:
        raise ValidationError("distance entries must lie in [0, 1]")
    a, b = margin.delta_plus, margin.delta_minus
    prod = (D - a) * (D - b)
    inside = prod < 0.0
    value = -np.sum(prod[inside])
    grad = np.where(inside, -(2.0 * D - a - b), 0.0)
    return LossResult(float(value), {"D": grad})


def polarization_on_embeddings(batch, margin):
    """Distance polarization of a batch's distance matrix, chained to the rows."""
    h = _rows(batch)
    res = distance_polarization(pairwise_distance_matrix(h), margin)
    return LossResult(res.value, {"h": distance_matrix_backward(h, res["D"])})


def supervised_contrastive(batch, labels, tau_c):
    """Label-aware contrastive loss on one side's rows, normalized by 1/N.

    Anchors without a same-label partner contribute nothing.
    """
    _check_tau(tau_c)
    h = _rows(batch)
    labels = np.asarray(labels, dtype=np.int64)
    n = len(h)
    if len(labels) != n:
        raise ShapeMismatch("one label per row is required")
    if n < 2:
        raise BatchTooSmall("need at least 2 rows")
    sim = cosine_similarity_matrix(h)
    logp = _offdiag_log_softmax(sim / tau_c)
    same = (labels[:, None] == labels[None, :]) & ~np.eye(n, dtype=bool)
    value = -np.sum(logp[same]) / n
    n_pos = same.sum(axis=1, keepdims=True)
    grad_scaled = n_pos * np.exp(logp) - same
    grad_sim = grad_scaled / (n * tau_c)
    return LossResult(float(value), {"h": cosine_matrix_backward(h, grad_sim)})


def _prob_rows(probs):
    p = np.asarray(probs, dtype=np.float64)
    return p[None, :] if p.ndim == 1 else p


def _xlogy_ratio(p, q):
    """Elementwise p * ln(p / max(q, floor)) with 0 where p == 0."""
    safe_p = np.where(p > 0, p, 1.0)
    return np.where(p > 0, p * np.log(safe_p / np.maximum(q, PROB_FLOOR)), 0.0)


def mutual_learning(probs_clean, probs_noisy):
    """Sum over pairs of JS(p_clean_i || p_noisy_i).

    Gradients are with respect to both probability matrices; chain them to
    logits with :func:`mllmcl.numeric.softmax_backward`.
    """
    p, q = _prob_rows(probs_clean), _prob_rows(probs_noisy)
    if p.shape != q.shape:
        raise DimensionMismatch(f"probability lists differ in shape: {p.shape} vs {q.shape}")
    if len(p) == 0:
        raise DimensionMismatch("empty probability lists")
    m = 0.5 * (p + q)
    value = 0.5 * np.sum(_xlogy_ratio(p, m)) + 0.5 * np.sum(_xlogy_ratio(q, m))
    mf = np.maximum(m, PROB_FLOOR)
    grad_p = 0.5 * np.log(np.maximum(p, PROB_FLOOR) / mf)
    grad_q = 0.5 * np.log(np.maximum(q, PROB_FLOOR) / mf)
    return LossResult(float(value), {"probs_clean": grad_p, "probs_noisy": grad_q})


def _is_one_hot(row):
    return np.count_nonzero(row == 1.0) == 1 and np.count_nonzero(row) == 1


def distillation_targets(prev, tau_d):
    """Temper cached distributions; exact one-hot rows pass through unchanged."""
    prev = _prob_rows(prev)
    tempered = softmax_with_temperature(np.log(np.maximum(prev, PROB_FLOOR)), tau_d)
    one_hot = np.array([_is_one_hot(r) for r in prev])
    tempered[one_hot] = prev[one_hot]
    return tempered


def self_distillation(prev, current_logits, tau_d):
    """(1/N) sum_i tau^2 KL(temper(prev_i) || softmax(z_i / tau)).

    ``prev`` is a constant cache, so only the current logits get a gradient.
    """
    _check_tau(tau_d)
    z = _prob_rows(current_logits)
    prev = _prob_rows(prev)
    if prev.shape != z.shape:
        raise DimensionMismatch(f"cache rows {prev.shape} vs logits {z.shape}")
    n = len(z)
    target = distillation_targets(prev, tau_d)
    logq = log_softmax(z, tau_d)
    safe_t = np.where(target > 0, target, 1.0)
    kl = np.sum(np.where(target > 0, target * (np.log(safe_t) - logq), 0.0), axis=1)
    value = tau_d ** 2 * np.sum(kl) / n
    grad = tau_d * (np.exp(logq) - target) / n
    return LossResult(float(value), {"logits": grad})


def _check_labels(labels, n, num_classes):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (n,):
        raise ShapeMismatch(f"expected {n} labels, got shape {labels.shape}")
    if np.any(labels < 0) or np.any(labels >= num_classes):
        raise LabelOutOfRange(f"labels must lie in [0, {num_classes})")
    return labels


def cross_entropy(logits, labels, reduction="sum"):
    """Negative log-likelihood of the gold labels; sum over rows by default."""
    z = _prob_rows(logits)
    n, c = z.shape
    labels = _check_labels(labels, n, c)
    logp = log_softmax(z)
    idx = np.arange(n)
    grad = np.exp(logp)
    grad[idx, labels] -= 1.0
    value = -np.sum(logp[idx, labels])
    if reduction == "mean":
        value, grad = value / n, grad / n
    elif reduction != "sum":
        raise ValidationError(f"unknown reduction {reduction!r}")
    return LossResult(float(value), {"logits": grad})


def mlm_loss(logits, targets):
    """Mean cross-entropy over masked positions."""
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] == 0:
        raise EmptyTargets("MLM loss needs at least one masked target")
    res = cross_entropy(z, targets, reduction="mean")
    return LossResult(res.value, {"mlm_logits": res["logits"]})


def combine(terms):
    """Weighted sum of LossResults; gradients sharing a key are added.

    Terms with weight exactly 0 are left out of both value and gradient.
    """
    value = 0.0
    grads = {}
    for weight, res in terms:
        if weight == 0:
            continue
        value += weight * res.value
        for key, g in res.input_grads.items():
            grads[key] = grads[key] + weight * g if key in grads else weight * g
    return LossResult(float(value), grads)


def compose_pretrain(l_sc, l_reg, l_mlm, lambda_reg, lambda_pt):
    """lambda_pt * (L_sc + lambda_reg * L_reg) + (1 - lambda_pt) * L_mlm."""
    sc_reg = combine([(1.0, l_sc), (lambda_reg, l_reg)])
    return combine([(lambda_pt, sc_reg), (1.0 - lambda_pt, l_mlm)])


def compose_finetune(l_ce, l_mut, l_creg, l_d, alpha, beta, gamma):
    """L_ce + alpha * L_mut + beta * L_creg + gamma * L_d."""
    return combine([(1.0, l_ce), (alpha, l_mut), (beta, l_creg), (gamma, l_d)])

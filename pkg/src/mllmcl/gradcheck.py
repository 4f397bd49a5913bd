"""Finite-difference verification of every hand-derived gradient.

Each check draws random small instances, evaluates the analytic gradient,
and compares it with central differences. Instances that put a pairwise
distance within ``KINK_GAP`` of a margin boundary are redrawn, because the
polarization penalty is not differentiable there.
"""

from dataclasses import dataclass

import numpy as np

from . import losses as L
from .encoder import EmbeddingBatch, backward, classify, encode, init_params, mlm_logits
from .numeric import finite_difference_check, pairwise_distance_matrix, softmax_backward, softmax_with_temperature

TOLERANCE = 1e-4
KINK_GAP = 1e-3
MARGIN = L.MarginConfig(0.2, 0.5)


@dataclass
class CheckResult:
    name: str
    instances: int
    max_rel_error: float

    @property
    def passed(self):
        return self.max_rel_error < TOLERANCE


def _near_kink(D, margin=MARGIN):
    off = D[~np.eye(len(D), dtype=bool)]
    return np.any(np.abs(off - margin.delta_plus) < KINK_GAP) or np.any(
        np.abs(off - margin.delta_minus) < KINK_GAP)


def _rows(rng, m, d):
    while True:
        h = rng.standard_normal((m, d))
        if not _near_kink(pairwise_distance_matrix(h)):
            return h


def _check_rows(fn, h):
    """fn(h) -> LossResult with gradient key 'h'."""
    shape = h.shape
    return finite_difference_check(lambda x: fn(x.reshape(shape)).value, h, fn(h)["h"])


def check_self_supervised(rng):
    n, d = int(rng.integers(2, 5)), int(rng.integers(2, 9))
    h = _rows(rng, 2 * n, d)
    pos = EmbeddingBatch.paired(h[:n], h[n:]).positive
    tau = float(rng.uniform(0.1, 1.0))
    return _check_rows(lambda x: L.self_supervised_contrastive(x, tau, positive=pos), h)


def check_polarization_matrix(rng):
    m = int(rng.integers(2, 9))
    while True:
        D = pairwise_distance_matrix(rng.standard_normal((m, 3)))
        if not _near_kink(D):
            break
    res = L.distance_polarization(D, MARGIN)
    return finite_difference_check(
        lambda x: L.distance_polarization(np.clip(x.reshape(D.shape), 0, 1), MARGIN).value, D, res["D"])


def check_polarization_rows(rng):
    m, d = int(rng.integers(2, 9)), int(rng.integers(2, 9))
    h = _rows(rng, m, d)
    return _check_rows(lambda x: L.polarization_on_embeddings(x, MARGIN), h)


def check_supervised(rng):
    n, d = int(rng.integers(2, 9)), int(rng.integers(2, 9))
    labels = rng.integers(0, 3, size=n)
    h = _rows(rng, n, d)
    tau = float(rng.uniform(0.1, 1.0))
    return _check_rows(lambda x: L.supervised_contrastive(x, labels, tau), h)


def check_large_margin_supervised(rng):
    n, d = int(rng.integers(2, 9)), int(rng.integers(2, 9))
    labels = rng.integers(0, 3, size=n)
    h = _rows(rng, n, d)

    def fn(x):
        return L.combine([(1.0, L.supervised_contrastive(x, labels, 0.2)),
                          (0.15, L.polarization_on_embeddings(x, MARGIN))])
    return _check_rows(fn, h)


def check_mutual(rng):
    n, c = int(rng.integers(1, 5)), int(rng.integers(2, 5))
    zp, zq = rng.standard_normal((n, c)), rng.standard_normal((n, c))

    def value(x):
        a, b = x[:n * c].reshape(n, c), x[n * c:].reshape(n, c)
        return L.mutual_learning(softmax_with_temperature(a), softmax_with_temperature(b)).value

    pp, pq = softmax_with_temperature(zp), softmax_with_temperature(zq)
    res = L.mutual_learning(pp, pq)
    grad = np.concatenate([softmax_backward(pp, res["probs_clean"]).ravel(),
                           softmax_backward(pq, res["probs_noisy"]).ravel()])
    return finite_difference_check(value, np.concatenate([zp.ravel(), zq.ravel()]), grad)


def check_distillation(rng):
    n, c = int(rng.integers(1, 5)), int(rng.integers(2, 5))
    z = rng.standard_normal((n, c))
    if rng.random() < 0.5:
        prev = np.eye(c)[rng.integers(0, c, size=n)]
    else:
        prev = softmax_with_temperature(rng.standard_normal((n, c)))
    tau = float(rng.uniform(1.0, 6.0))
    res = L.self_distillation(prev, z, tau)
    return finite_difference_check(
        lambda x: L.self_distillation(prev, x.reshape(n, c), tau).value, z, res["logits"])


def check_cross_entropy(rng):
    n, c = int(rng.integers(1, 9)), int(rng.integers(2, 5))
    z = rng.standard_normal((n, c))
    y = rng.integers(0, c, size=n)
    res = L.cross_entropy(z, y)
    return finite_difference_check(lambda x: L.cross_entropy(x.reshape(n, c), y).value, z, res["logits"])


def check_mlm(rng):
    t, v = int(rng.integers(1, 6)), int(rng.integers(4, 17))
    z = rng.standard_normal((t, v))
    y = rng.integers(0, v, size=t)
    res = L.mlm_loss(z, y)
    return finite_difference_check(lambda x: L.mlm_loss(x.reshape(t, v), y).value, z, res["mlm_logits"])


# ---------------------------------------------------------------------------
# losses composed with the encoder, checked against parameter gradients

def _token_rows(rng, m, vocab_size):
    rows = np.zeros((m, 6), dtype=np.int64)
    for i in range(m):
        length = int(rng.integers(2, 7))
        rows[i, 0] = 3
        rows[i, 1:length] = rng.integers(4, vocab_size, size=length - 1)
    return rows


def _small_model(rng):
    vocab_size, d, d_out, c = 12, 4, 4, 3
    params = init_params(vocab_size, d, d_out, c, int(rng.integers(1 << 30)))
    # larger weights than the default init so every path carries signal
    return params.map(lambda a: a * 8.0)


def _check_params(params, value_fn, grads):
    return finite_difference_check(lambda x: value_fn(params.from_flat(x)), params.flat(), grads.flat())


def check_encoder_cross_entropy(rng):
    params = _small_model(rng)
    tokens = _token_rows(rng, 4, params.vocab_size)
    y = rng.integers(0, params.num_classes, size=4)

    def value(p):
        return L.cross_entropy(classify(p, encode(p, tokens)), y).value

    res = L.cross_entropy(classify(params, encode(params, tokens)), y)
    return _check_params(params, value, backward(params, tokens, grad_logits=res["logits"]))


def _pretrain_value(p, tokens, masked, positions, targets, n):
    h = encode(p, tokens).rows
    emb = EmbeddingBatch.paired(h[:n], h[n:])
    total = L.compose_pretrain(
        L.self_supervised_contrastive(emb, 0.2), L.polarization_on_embeddings(emb, MARGIN),
        L.mlm_loss(mlm_logits(p, masked, positions), targets), 0.1, 0.5)
    return total


def check_encoder_pretrain(rng):
    while True:
        params = _small_model(rng)
        n = 3
        tokens = _token_rows(rng, 2 * n, params.vocab_size)
        if not _near_kink(pairwise_distance_matrix(encode(params, tokens).rows)):
            break
    masked = tokens.copy()
    positions = np.array([[i, 1] for i in range(2 * n)])
    targets = tokens[:, 1].copy()
    masked[:, 1] = 2
    total = _pretrain_value(params, tokens, masked, positions, targets, n)
    grads = backward(params, tokens, grad_embeddings=total["h"]) + backward(
        params, masked, masked_positions=positions, grad_mlm_logits=total["mlm_logits"])
    return _check_params(
        params, lambda p: _pretrain_value(p, tokens, masked, positions, targets, n).value, grads)


def _finetune_side(p, tokens, y, prev, q_probs):
    h = encode(p, tokens).rows
    logits = classify(p, h)
    creg = L.combine([(1.0, L.supervised_contrastive(h, y, 0.2)),
                      (0.15, L.polarization_on_embeddings(h, MARGIN))])
    probs = softmax_with_temperature(logits)
    mut = L.mutual_learning(probs, q_probs)
    value = L.compose_finetune(L.cross_entropy(logits, y), mut, creg,
                               L.self_distillation(prev, logits, 5.0), 1.0, 0.1, 0.7)
    return value, creg, mut, probs, logits


def check_encoder_finetune(rng):
    while True:
        params = _small_model(rng)
        tokens = _token_rows(rng, 5, params.vocab_size)
        if not _near_kink(pairwise_distance_matrix(encode(params, tokens).rows)):
            break
    y = rng.integers(0, params.num_classes, size=5)
    prev = softmax_with_temperature(rng.standard_normal((5, params.num_classes)))
    q_probs = softmax_with_temperature(rng.standard_normal((5, params.num_classes)))
    _, creg, mut, probs, logits = _finetune_side(params, tokens, y, prev, q_probs)
    g_logits = (L.cross_entropy(logits, y)["logits"]
                + 0.7 * L.self_distillation(prev, logits, 5.0)["logits"]
                + softmax_backward(probs, mut["probs_clean"]))
    grads = backward(params, tokens, grad_embeddings=0.1 * creg["h"], grad_logits=g_logits)
    return _check_params(params, lambda p: _finetune_side(p, tokens, y, prev, q_probs)[0].value, grads)


LOSS_CHECKS = {
    "self_supervised_contrastive": check_self_supervised,
    "distance_polarization": check_polarization_matrix,
    "distance_polarization_embeddings": check_polarization_rows,
    "supervised_contrastive": check_supervised,
    "large_margin_supervised_contrastive": check_large_margin_supervised,
    "mutual_learning": check_mutual,
    "self_distillation": check_distillation,
    "cross_entropy": check_cross_entropy,
    "mlm_loss": check_mlm,
}

ENCODER_CHECKS = {
    "encoder_cross_entropy": check_encoder_cross_entropy,
    "encoder_pretrain_objective": check_encoder_pretrain,
    "encoder_finetune_objective": check_encoder_finetune,
}


def run_suite(instances=20, encoder_instances=5, seed=0):
    rng = np.random.default_rng(seed)
    results = []
    for name, check in LOSS_CHECKS.items():
        errors = [check(rng) for _ in range(instances)]
        results.append(CheckResult(name, instances, max(errors)))
    for name, check in ENCODER_CHECKS.items():
        errors = [check(rng) for _ in range(encoder_instances)]
        results.append(CheckResult(name, encoder_instances, max(errors)))
    return results


def format_report(results):
    lines = [f"{'check':40s} {'n':>4s} {'max_rel_err':>12s}  status"]
    for r in results:
        lines.append(f"{r.name:40s} {r.instances:4d} {r.max_rel_error:12.3e}  {'PASS' if r.passed else 'FAIL'}")
    return "\n".join(lines) + "\n"

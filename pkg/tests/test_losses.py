import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mllmcl.encoder import EmbeddingBatch
from mllmcl.errors import (
    BatchTooSmall,
    DimensionMismatch,
    EmptyTargets,
    InvalidMargin,
    LabelOutOfRange,
    NonPositiveTemperature,
)
from mllmcl.losses import (
    LossResult,
    MarginConfig,
    combine,
    compose_finetune,
    compose_pretrain,
    cross_entropy,
    distance_polarization,
    mlm_loss,
    mutual_learning,
    self_distillation,
    self_supervised_contrastive,
    supervised_contrastive,
)
from mllmcl.numeric import pairwise_distance_matrix, softmax_with_temperature

import oracles

MARGIN = MarginConfig(0.2, 0.5)


def paired(rng, n, d):
    h = rng.standard_normal((2 * n, d))
    return EmbeddingBatch.paired(h[:n], h[n:])


def random_probs(rng, n, c):
    return softmax_with_temperature(rng.standard_normal((n, c)) * 2)


# -- self-supervised contrastive ---------------------------------------------

def test_single_pair_is_zero():
    rng = np.random.default_rng(0)
    res = self_supervised_contrastive(paired(rng, 1, 4), 0.2, allow_single_pair=True)
    assert res.value == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(res["h"], 0.0, atol=1e-12)


def test_single_pair_rejected_by_default():
    with pytest.raises(BatchTooSmall):
        self_supervised_contrastive(paired(np.random.default_rng(0), 1, 4), 0.2)
    with pytest.raises(NonPositiveTemperature):
        self_supervised_contrastive(paired(np.random.default_rng(0), 2, 4), 0.0)


def test_self_supervised_matches_oracle():
    rng = np.random.default_rng(1)
    for _ in range(30):
        n = int(rng.integers(2, 7))
        batch = paired(rng, n, int(rng.integers(2, 8)))
        tau = float(rng.uniform(0.1, 1.0))
        ref = oracles.self_supervised_contrastive(batch.rows.tolist(), batch.positive.tolist(), tau)
        assert self_supervised_contrastive(batch, tau).value == pytest.approx(ref, abs=1e-10)


# -- polarization --------------------------------------------------------------

def test_polarization_single_entry():
    assert distance_polarization([[0.35]], MARGIN).value == pytest.approx(0.0225, abs=1e-12)


def test_polarization_zero_outside_margin():
    D = np.array([[1.0, 0.1, 0.2], [0.1, 1.0, 0.5], [0.2, 0.5, 1.0]])
    res = distance_polarization(D, MARGIN)
    assert res.value == 0.0
    assert np.all(res["D"] == 0)


def test_polarization_matches_oracle():
    rng = np.random.default_rng(2)
    for _ in range(30):
        D = pairwise_distance_matrix(rng.standard_normal((6, 3)))
        ref = oracles.polarization(D.tolist(), 0.2, 0.5)
        assert distance_polarization(D, MARGIN).value == pytest.approx(ref, abs=1e-12)


def test_invalid_margins():
    for a, b in [(0.5, 0.2), (0.0, 0.5), (0.2, 1.0), (0.3, 0.3)]:
        with pytest.raises(InvalidMargin):
            MarginConfig(a, b)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=16), st.integers(0, 15))
def test_polarization_positive_iff_inside_margin(values, k):
    m = int(math.isqrt(len(values)))
    if m == 0:
        return
    D = np.array(values[:m * m]).reshape(m, m)
    inside = np.any((D > 0.2) & (D < 0.5))
    value = distance_polarization(D, MARGIN).value
    assert value >= 0
    assert (value > 0) == inside


# -- supervised contrastive ------------------------------------------------------

def test_supervised_distinct_labels_is_zero():
    h = np.random.default_rng(3).standard_normal((4, 3))
    res = supervised_contrastive(h, [0, 1, 2, 3], 0.2)
    assert res.value == 0.0
    np.testing.assert_allclose(res["h"], 0.0, atol=1e-15)


def test_supervised_matches_oracle():
    rng = np.random.default_rng(4)
    h = rng.standard_normal((3, 4))
    ref = oracles.supervised_contrastive(h.tolist(), [0, 0, 1], 0.2)
    assert supervised_contrastive(h, [0, 0, 1], 0.2).value == pytest.approx(ref, abs=1e-10)
    for _ in range(30):
        n = int(rng.integers(2, 13))
        h = rng.standard_normal((n, int(rng.integers(2, 8))))
        y = rng.integers(0, 3, size=n)
        ref = oracles.supervised_contrastive(h.tolist(), y.tolist(), 0.3)
        assert supervised_contrastive(h, y, 0.3).value == pytest.approx(ref, abs=1e-10)


def test_supervised_needs_two_rows():
    with pytest.raises(BatchTooSmall):
        supervised_contrastive(np.ones((1, 3)), [0], 0.2)


def test_contrastive_losses_are_scale_invariant():
    rng = np.random.default_rng(5)
    batch = paired(rng, 4, 5)
    scaled = EmbeddingBatch(batch.rows * 3, batch.origin, batch.positive)
    assert abs(self_supervised_contrastive(batch, 0.2).value
               - self_supervised_contrastive(scaled, 0.2).value) < 1e-9
    y = [0, 1, 0, 1, 2, 2, 0, 1]
    assert abs(supervised_contrastive(batch, y, 0.2).value
               - supervised_contrastive(scaled, y, 0.2).value) < 1e-9


# -- mutual learning -------------------------------------------------------------

def test_mutual_examples():
    p = random_probs(np.random.default_rng(6), 3, 4)
    assert mutual_learning(p, p).value == 0.0
    assert mutual_learning([[1.0, 0.0]], [[0.0, 1.0]]).value == pytest.approx(math.log(2), abs=1e-12)
    with pytest.raises(DimensionMismatch):
        mutual_learning(p, p[:2])


def test_mutual_symmetric_and_matches_oracle():
    rng = np.random.default_rng(7)
    for _ in range(30):
        n, c = int(rng.integers(1, 9)), int(rng.integers(2, 5))
        p, q = random_probs(rng, n, c), random_probs(rng, n, c)
        v = mutual_learning(p, q).value
        assert abs(v - mutual_learning(q, p).value) <= 1e-12
        assert v == pytest.approx(oracles.mutual(p.tolist(), q.tolist()), abs=1e-10)
        assert v >= 0


# -- self-distillation -------------------------------------------------------------

def test_distillation_one_hot_example():
    res = self_distillation([[1.0, 0.0]], [[0.0, 0.0]], 5.0)
    assert res.value == pytest.approx(25 * math.log(2), abs=1e-9)


def test_distillation_zero_when_prev_matches():
    rng = np.random.default_rng(8)
    z = rng.standard_normal((3, 4))
    # prev whose tempered form equals softmax(z / tau): prev = softmax(z)
    prev = softmax_with_temperature(z)
    assert self_distillation(prev, z, 5.0).value == pytest.approx(0.0, abs=1e-12)


def test_distillation_matches_oracle():
    rng = np.random.default_rng(9)
    for _ in range(30):
        n, c = int(rng.integers(1, 6)), int(rng.integers(2, 5))
        z = rng.standard_normal((n, c))
        prev = random_probs(rng, n, c)
        prev[0] = np.eye(c)[0]
        ref = oracles.self_distillation(prev.tolist(), z.tolist(), 5.0)
        assert self_distillation(prev, z, 5.0).value == pytest.approx(ref, abs=1e-10)


def test_distillation_errors():
    with pytest.raises(NonPositiveTemperature):
        self_distillation([[1.0, 0.0]], [[0.0, 0.0]], 0.0)
    with pytest.raises(DimensionMismatch):
        self_distillation([[1.0, 0.0]], [[0.0, 0.0, 0.0]], 5.0)


# -- cross-entropy and MLM ---------------------------------------------------------

def test_cross_entropy_examples():
    assert cross_entropy([[0.0, 0.0, 0.0, 0.0]], [2]).value == pytest.approx(math.log(4), abs=1e-12)
    assert cross_entropy([[50.0, 0.0]], [0]).value == pytest.approx(0.0, abs=1e-12)
    z = np.random.default_rng(10).standard_normal((5, 3))
    y = [0, 2, 1, 1, 0]
    assert cross_entropy(z, y).value == pytest.approx(oracles.cross_entropy(z.tolist(), y), abs=1e-10)
    assert cross_entropy(z, y, reduction="mean").value == pytest.approx(cross_entropy(z, y).value / 5)
    with pytest.raises(LabelOutOfRange):
        cross_entropy(z, [0, 3, 1, 1, 0])


def test_mlm_examples():
    assert mlm_loss(np.zeros((1, 8)), [3]).value == pytest.approx(math.log(8), abs=1e-12)
    forced = np.zeros((1, 8))
    forced[0, 5] = 60.0
    assert mlm_loss(forced, [5]).value == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(EmptyTargets):
        mlm_loss(np.zeros((0, 8)), [])


# -- composition -------------------------------------------------------------------

def scalar(v, g):
    return LossResult(v, {"h": np.array(g, dtype=float)})


def test_compose_pretrain_example():
    res = compose_pretrain(scalar(1.0, [1, 0]), scalar(0.2, [0, 1]), LossResult(2.0, {"m": np.ones(2)}), 0.1, 0.5)
    assert res.value == pytest.approx(1.51, abs=1e-12)
    np.testing.assert_allclose(res["h"], [0.5, 0.05], atol=1e-12)
    np.testing.assert_allclose(res["m"], [0.5, 0.5], atol=1e-12)


def test_compose_pretrain_without_mlm():
    res = compose_pretrain(scalar(1.0, [1]), scalar(0.2, [1]), LossResult(2.0, {"m": np.ones(1)}), 0.1, 1.0)
    assert res.value == pytest.approx(1.02, abs=1e-12)
    assert "m" not in res.input_grads


def test_compose_finetune_examples():
    parts = [scalar(v, [v, -v]) for v in (1.0, 2.0, 3.0, 4.0)]
    res = compose_finetune(*parts, 1.0, 0.1, 1.0)
    assert res.value == pytest.approx(7.3, abs=1e-12)
    np.testing.assert_allclose(res["h"], [7.3, -7.3], atol=1e-12)
    only_ce = compose_finetune(*parts, 0.0, 0.0, 0.0)
    assert only_ce.value == 1.0
    np.testing.assert_array_equal(only_ce["h"], [1.0, -1.0])


def test_combine_is_linear():
    rng = np.random.default_rng(11)
    g = [rng.standard_normal(5) for _ in range(3)]
    w = rng.standard_normal(3)
    res = combine([(wi, LossResult(1.0, {"h": gi})) for wi, gi in zip(w, g)])
    np.testing.assert_allclose(res["h"], sum(wi * gi for wi, gi in zip(w, g)), atol=1e-12)


def test_nonnegative_losses():
    rng = np.random.default_rng(12)
    for _ in range(20):
        z = rng.standard_normal((4, 3)) * 3
        y = rng.integers(0, 3, size=4)
        assert cross_entropy(z, y).value >= 0
        assert mlm_loss(z, y).value >= 0
        assert self_distillation(random_probs(rng, 4, 3), z, 2.0).value >= -1e-12
        assert distance_polarization(pairwise_distance_matrix(rng.standard_normal((4, 3))), MARGIN).value >= 0

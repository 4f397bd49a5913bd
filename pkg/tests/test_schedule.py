import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mllmcl.encoder import init_params
from mllmcl.errors import InvalidConfig, ShapeMismatch
from mllmcl.schedule import AnnealConfig, adam_step, annealing_coefficient, init_optim_state, warmup_lr

CFG = AnnealConfig(0.5, 5000)


def test_annealing_examples():
    assert annealing_coefficient(1, CFG) == 0.0
    assert annealing_coefficient(1251, CFG) == 0.5
    assert annealing_coefficient(2501, CFG) == 1.0
    assert annealing_coefficient(4000, CFG) == 1.0
    assert annealing_coefficient(5001, CFG) == 0.0


def test_annealing_rejects_bad_input():
    with pytest.raises(InvalidConfig):
        annealing_coefficient(0, CFG)
    with pytest.raises(InvalidConfig):
        AnnealConfig(0.0, 10)
    with pytest.raises(InvalidConfig):
        AnnealConfig(0.5, 0)


@given(st.floats(0.01, 1.0), st.integers(1, 400), st.integers(1, 2000))
def test_annealing_periodic_and_bounded(R, G, t):
    cfg = AnnealConfig(R, G)
    g = annealing_coefficient(t, cfg)
    assert 0.0 <= g <= 1.0
    assert g == annealing_coefficient(t + G, cfg)


def test_annealing_ramp_is_monotone_then_flat():
    cfg = AnnealConfig(0.5, 40)
    values = [annealing_coefficient(t, cfg) for t in range(1, 41)]
    assert all(a <= b for a, b in zip(values[:21], values[1:21]))
    assert values[20] == 1.0
    assert all(v == 1.0 for v in values[20:])


def test_warmup_examples():
    assert warmup_lr(1, 1e-3, 4000) == pytest.approx(2.5e-7, rel=1e-12)
    assert warmup_lr(4000, 1e-3, 4000) == 1e-3
    assert warmup_lr(10 ** 6, 1e-3, 4000) == 1e-3


def test_adam_zero_gradients_is_identity():
    params = init_params(6, 3, 3, 2, seed=0)
    state = init_optim_state(params)
    p = params
    for _ in range(5):
        state, p = adam_step(state, p, params.zeros_like(), 1e-2)
    np.testing.assert_array_equal(p.flat(), params.flat())


def test_adam_first_step():
    lr, eps = 1e-3, 1e-8
    state = init_optim_state(np.zeros(1))
    state, p = adam_step(state, np.zeros(1), np.ones(1), lr, eps=eps)
    assert p[0] == pytest.approx(-lr / (1 + eps), rel=1e-12)
    assert state.t == 1


def test_adam_is_deterministic_and_pure():
    params = init_params(6, 3, 3, 2, seed=1)
    grads = init_params(6, 3, 3, 2, seed=2)
    before = params.flat().copy()
    a = adam_step(init_optim_state(params), params, grads, 1e-3)[1]
    b = adam_step(init_optim_state(params), params, grads, 1e-3)[1]
    assert a.flat().tobytes() == b.flat().tobytes()
    np.testing.assert_array_equal(params.flat(), before)


def test_adam_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        adam_step(init_optim_state(np.zeros(2)), np.zeros(2), np.zeros(3), 1e-3)

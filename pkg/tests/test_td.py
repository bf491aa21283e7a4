import math

import numpy as np
import pytest

from ictd import equivalence, td
from ictd.kernels import KernelSpec
from ictd.mrp import Transitions
from ictd.rng import make_rng


def single():
    return Transitions(np.array([[1.0, 0.0]]), np.array([1.0]), np.array([[0.0, 0.0]]))


def test_one_step_by_hand():
    tr = single()
    cfg = td.TdConfig(0.9, (0.5,), KernelSpec.exponential(1.0))
    s0 = td.TdState.initial(tr)
    assert np.all(s0.v_states == 0) and np.array_equal(s0.residuals, [1.0, 0.0])
    s1 = td.td_step(s0, tr, [1.0, 0.0], cfg, 0)
    assert s1.v_states[0] == pytest.approx(0.5 * math.e, abs=1e-15)
    assert s1.v_next[0] == pytest.approx(0.5, abs=1e-15)
    assert s1.residuals[0] == pytest.approx(1 + 0.45 - 0.5 * math.e, abs=1e-15)
    res = td.residual_step(s0.residuals, tr, [1.0, 0.0], cfg, 0)
    assert np.allclose(res, s1.residuals, atol=1e-15)


def test_step_index_must_match():
    tr = single()
    cfg = td.TdConfig(0.9, (0.5, 0.5))
    with pytest.raises(ValueError):
        td.td_step(td.TdState.initial(tr), tr, [0.0, 0.0], cfg, 1)


def test_config_validation():
    with pytest.raises(ValueError):
        td.TdConfig(1.0, (0.1,))
    with pytest.raises(ValueError):
        td.TdConfig(0.5, ())
    cfg = td.TdConfig.shared(2.0, 4, 3, 0.9)
    assert cfg.alphas == (0.5, 0.5, 0.5) and cfg.layers == 3


def test_gamma_zero_is_kernel_regression_step():
    rng = make_rng(4)
    tr = equivalence.random_transitions(rng, 5, 2)
    q = np.array([0.2, -0.1])
    kernel = KernelSpec.exponential(1.0)
    cfg = td.TdConfig(0.0, (0.3,), kernel)
    raw, _, value = td.evaluate_value(tr, q, cfg)
    expect = 0.3 * sum(r * math.exp(s @ q) for s, r in zip(tr.states, tr.rewards))
    assert value == pytest.approx(expect, rel=1e-13)
    assert raw == pytest.approx(value, rel=1e-13)


def test_dual_form_and_residual_recursion_agree():
    cases = equivalence.dual_form_suite(seed=3)
    assert all(c.passed for c in cases), max(c.max_dev for c in cases)


def test_value_linear_in_rewards():
    rng = make_rng(12)
    tr = equivalence.random_transitions(rng, 6, 2)
    q = np.array([0.5, 0.5])
    cfg = td.TdConfig.shared(0.7, 6, 8, 0.9)
    scaled = Transitions(tr.states, 3.0 * tr.rewards, tr.next_states)
    assert td.evaluate_value(scaled, q, cfg)[2] == pytest.approx(3.0 * td.evaluate_value(tr, q, cfg)[2], rel=1e-12)


def test_offset_identity():
    variation, value = equivalence.offset_suite(queries=20, seed=1)
    assert variation.max_dev <= 1e-9 and value.max_dev <= 1e-9


def test_truncated_evaluation():
    tr = single()
    cfg = td.TdConfig(0.9, (0.5, 0.5, 0.5))
    full = td.run_td(tr, [1.0, 0.0], cfg)
    assert td.evaluate_value(tr, [1.0, 0.0], cfg, layers=1)[0] == pytest.approx(-full[1].residuals[-1])
    with pytest.raises(ValueError):
        td.evaluate_value(tr, [1.0, 0.0], cfg, layers=4)


def test_zero_rewards_stay_zero():
    rng = make_rng(5)
    tr = equivalence.random_transitions(rng, 4, 2)
    zero = Transitions(tr.states, np.zeros(4), tr.next_states)
    cfg = td.TdConfig.shared(1.0, 4, 5, 0.9)
    for state in td.run_td(zero, [0.1, 0.1], cfg):
        assert not state.residuals.any() and not state.v_states.any()
    assert not td.residual_step(np.zeros(5), tr, [0.1, 0.1], cfg, 0).any()

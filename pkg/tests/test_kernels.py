import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ictd.kernels import (KernelFamily, KernelOverflowError, KernelSpec, activate, affinity_matrix,
                          kernel_eval, state_affinity)

coords = st.floats(-3.0, 3.0, allow_nan=False)
vec2 = st.tuples(coords, coords)


def test_trivial_values():
    assert kernel_eval(KernelSpec.exponential(1.0), [0, 0], [1, 2]) == 1.0
    assert kernel_eval(KernelSpec.exponential(2.0), [1, 0], [1, 0]) == pytest.approx(math.exp(0.5))
    assert kernel_eval(KernelSpec.linear(), [1, 2], [3, -1]) == 1.0


def test_overflow_raises_with_context():
    with pytest.raises(KernelOverflowError) as info:
        kernel_eval(KernelSpec.exponential(1.0), [30.0, 0.0], [30.0, 0.0])
    assert info.value.inner_product == 900.0
    assert "temperature" in str(info.value)
    with pytest.raises(KernelOverflowError):
        activate(KernelSpec.exponential(0.1), np.array([[100.0]]))


def test_bad_temperature_rejected():
    with pytest.raises(ValueError):
        KernelSpec.exponential(0.0)


def test_spec_round_trip():
    for spec in (KernelSpec.exponential(0.3), KernelSpec.linear(), KernelSpec.softmax(2.0)):
        assert KernelSpec.from_dict(spec.to_dict()) == spec
    assert KernelSpec.linear().guarantee_bearing
    assert not KernelSpec.softmax().guarantee_bearing


@settings(max_examples=60, deadline=None)
@given(vec2, vec2, st.floats(0.1, 10.0))
def test_exponential_symmetric_positive(x, y, delta):
    spec = KernelSpec.exponential(delta)
    a, b = kernel_eval(spec, x, y), kernel_eval(spec, y, x)
    assert a == b and a > 0


@settings(max_examples=30, deadline=None)
@given(st.lists(vec2, min_size=1, max_size=6), st.floats(0.2, 5.0))
def test_exponential_gram_is_psd(points, delta):
    S = np.array(points)
    G = state_affinity(KernelSpec.exponential(delta), S, S)
    assert np.allclose(G, G.T)
    assert np.linalg.eigvalsh(G).min() > -1e-9 * max(1.0, G.max())


def test_softmax_columns_sum_to_one():
    rng = np.random.default_rng(3)
    K, Q = rng.normal(size=(2, 7)), rng.normal(size=(2, 4))
    A = affinity_matrix(KernelSpec.softmax(1.0), K, Q)
    assert np.allclose(A.sum(axis=0), 1.0, atol=1e-14)
    assert KernelSpec.softmax().family is KernelFamily.SOFTMAX


@pytest.mark.parametrize("spec", [KernelSpec.exponential(1.0), KernelSpec.exponential(0.3), KernelSpec.linear()])
def test_affinity_matches_scalar_loop(spec):
    rng = np.random.default_rng(11)
    keys, queries = rng.uniform(-1, 1, size=(5, 2)), rng.uniform(-1, 1, size=(4, 2))
    fast = state_affinity(spec, keys, queries)
    slow = np.array([[kernel_eval(spec, k, q) for q in queries] for k in keys])
    assert np.allclose(fast, slow, rtol=1e-13, atol=1e-15)


def test_empty_keys_rejected():
    with pytest.raises(ValueError):
        affinity_matrix(KernelSpec.linear(), np.zeros((2, 0)), np.zeros((2, 3)))

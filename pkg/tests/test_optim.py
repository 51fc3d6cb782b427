import numpy as np
import pytest

from endorestore.errors import ShapeError
from endorestore.nn.optim import AdamState, adam_step


def test_zero_gradients_leave_params():
    p = {"w": np.array([1.0, -2.0])}
    adam_step(p, {"w": np.zeros(2)}, AdamState())
    np.testing.assert_array_equal(p["w"], [1.0, -2.0])


def test_quadratic_first_step():
    p = {"w": np.array([1.0])}
    state = AdamState()
    adam_step(p, {"w": 2 * p["w"].copy()}, state, lr=1e-4)
    # m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps)
    expected = 1.0 - 1e-4 * 2.0 / (2.0 + 1e-8)
    assert abs(p["w"][0] - expected) < 1e-12
    assert state.t == 1


def test_closed_form_sequence():
    w = 1.0
    p = {"w": np.array([w])}
    state = AdamState()
    m = v = 0.0
    for t in range(1, 6):
        g = 2 * w
        adam_step(p, {"w": np.array([g])}, state, lr=1e-2)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        w = w - 1e-2 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
        assert abs(p["w"][0] - w) < 1e-12


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        adam_step({"w": np.zeros(3)}, {"w": np.zeros(2)}, AdamState())


def test_bad_step_index():
    with pytest.raises(ValueError):
        adam_step({"w": np.zeros(1)}, {"w": np.zeros(1)}, AdamState(), t=0)


def test_untouched_without_grad():
    p = {"a": np.ones(2), "b": np.ones(2)}
    adam_step(p, {"a": np.ones(2)}, AdamState())
    np.testing.assert_array_equal(p["b"], 1.0)

import numpy as np
import pytest

from models.errors import DimensionMismatchError, NumericFailureError
from models.params import AdamState, ParamTensors
from modules.optim_module import PlateauDecay, adam_step, clip_gradients


def _params():
    return ParamTensors({"w": np.array([1.0, -2.0, 0.5]), "b": np.array([0.0])})


def test_zero_gradient_leaves_params():
    params = _params()
    state = AdamState.for_params(params, lr=0.1)
    adam_step(params, params.zeros_like(), state)
    assert params == _params()
    assert state.step == 1


def test_first_step_moves_by_learning_rate():
    params = _params()
    grads = ParamTensors({"w": np.array([0.3, -0.02, 0.0]), "b": np.array([0.1])})
    state = AdamState.for_params(params, lr=0.01)
    adam_step(params, grads, state, clip_norm=0.0)
    np.testing.assert_allclose(params["w"], [1.0 - 0.01, -2.0 + 0.01, 0.5], atol=1e-6)
    np.testing.assert_allclose(params["b"], [-0.01], atol=1e-6)


def test_clipping_by_global_norm():
    grads = ParamTensors({"w": np.array([6.0, 0.0, 0.0]), "b": np.array([8.0])})
    clipped, norm = clip_gradients(grads, 1.0)
    assert norm == pytest.approx(10.0)
    assert clipped.global_norm() == pytest.approx(1.0)
    np.testing.assert_allclose(clipped["w"], [0.6, 0.0, 0.0])
    same, _ = clip_gradients(grads, 20.0)
    assert same is grads


def test_shape_mismatch():
    params = _params()
    grads = ParamTensors({"w": np.zeros(2), "b": np.zeros(1)})
    with pytest.raises(DimensionMismatchError):
        adam_step(params, grads, AdamState.for_params(params))


def test_non_finite_update():
    params = _params()
    grads = ParamTensors({"w": np.array([np.nan, 0.0, 0.0]), "b": np.zeros(1)})
    with pytest.raises(NumericFailureError):
        adam_step(params, grads, AdamState.for_params(params))


def test_plateau_decay():
    state = AdamState.for_params(_params(), lr=1e-3)
    decay = PlateauDecay(decay_patience=2, factor=0.5, min_lr=4e-4)
    assert not decay.update(0.5, state)
    assert not decay.update(0.4, state)
    assert decay.update(0.4, state)
    assert state.lr == pytest.approx(5e-4)
    decay.update(0.3, state)
    decay.update(0.3, state)
    assert state.lr == pytest.approx(4e-4)

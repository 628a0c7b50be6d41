import numpy as np
import pytest

from models.configs import TrainConfig
from models.errors import InvalidArgumentError
from models.knowledge_graph import Direction
from models.params import ParamTensors
from modules.loss_module import direction_weight, mp_loss, mp_loss_grad, regularization, total_loss


def test_uniform_logits():
    assert mp_loss([0.0], [0.0, 0.0, 0.0], 1.0) == pytest.approx(np.log(4.0))
    assert mp_loss([0.3, 0.3], [0.3, 0.3], 0.1) == pytest.approx(np.log(2.0))


def test_single_positive_is_infonce():
    pos, neg, tau = 0.8, np.array([0.1, -0.4, 0.5]), 0.2
    expected = -np.log(np.exp(pos / tau) / (np.exp(pos / tau) + np.exp(neg / tau).sum()))
    assert mp_loss([pos], neg, tau) == pytest.approx(expected)


def test_loss_decreases_with_positive_score():
    values = [mp_loss([x, 0.0], [0.2, 0.1], 0.1) for x in np.linspace(-1, 1, 9)]
    assert all(a > b for a, b in zip(values, values[1:]))
    assert min(values) >= 0.0


def test_no_negatives_gives_zero():
    assert mp_loss([0.5, -0.5], [], 0.1) == 0.0


def test_large_logits_are_stable():
    assert np.isfinite(mp_loss([1000.0], [999.0, -1000.0], 0.01))


@pytest.mark.parametrize("pos, tau", [([], 0.1), ([0.5], 0.0), ([0.5], -1.0)])
def test_invalid_arguments(pos, tau):
    with pytest.raises(InvalidArgumentError):
        mp_loss(pos, [0.1], tau)


def test_gradient_matches_finite_differences():
    pos, neg, tau, h = np.array([0.3, -0.2]), np.array([0.5, 0.1, -0.3]), 0.25, 1e-6
    _, d_pos, d_neg = mp_loss_grad(pos, neg, tau)
    logits = np.concatenate([pos, neg])
    analytic = np.concatenate([d_pos, d_neg])
    for i in range(len(logits)):
        up, down = logits.copy(), logits.copy()
        up[i] += h
        down[i] -= h
        numeric = (mp_loss(up[:2], up[2:], tau) - mp_loss(down[:2], down[2:], tau)) / (2 * h)
        assert analytic[i] == pytest.approx(numeric, abs=1e-6)


def test_direction_weights_and_total():
    assert direction_weight(Direction.WM_TO_TCM, 0.3) == pytest.approx(0.3)
    assert direction_weight(Direction.TCM_TO_WM, 0.3) == pytest.approx(0.7)
    params = ParamTensors({"a": np.array([1.0, 2.0]), "b": np.array([[3.0]])})
    assert regularization(params) == pytest.approx(14.0)
    config = TrainConfig(lambda_dir=0.3, lambda_reg=0.01)
    value = total_loss({Direction.TCM_TO_WM: 1.0, Direction.WM_TO_TCM: 2.0}, params, config)
    assert value == pytest.approx(0.7 + 0.6 + 0.14)

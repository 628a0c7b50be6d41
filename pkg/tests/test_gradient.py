import dataclasses

import numpy as np
import pytest

from models.errors import InvalidArgumentError, SizeLimitError
from models.knowledge_graph import Direction
from modules.calc_module import init_params, model_config_for
from modules.gradient_module import fd_check, forward_batch, gradcheck_fixture, loss_and_grads
from modules.loss_module import regularization
from modules.synthetic_module import tiny_fixture


@pytest.mark.parametrize("seed", range(5))
def test_gradients_match_finite_differences(seed):
    params, inputs, batches, config = gradcheck_fixture(seed)
    report = fd_check(params, inputs, batches, config)
    assert report.passed, report.to_dict()["offending"][:5]
    assert set(report.max_errors) == set(params.names())


@pytest.mark.parametrize("variant", ["no_query", "no_graph", "linear", "no_residual"])
def test_ablation_gradients(variant):
    params, inputs, batches, config = gradcheck_fixture(0, variant)
    assert fd_check(params, inputs, batches, config).passed


def test_corrupted_gradient_is_flagged():
    params, inputs, batches, config = gradcheck_fixture(1)
    _, grads = loss_and_grads(params, inputs, batches, config)
    grads["R"] *= 1.1
    report = fd_check(params, inputs, batches, config, gradients=grads)
    assert not report.passed
    assert "R" in report.flagged()


def test_forward_does_not_mutate_params():
    params, inputs, batches, config = gradcheck_fixture(2)
    before = params.copy()
    loss_and_grads(params, inputs, batches, config)
    fd_check(params, inputs, batches, config)
    assert params == before


def test_step_size_must_be_positive():
    params, inputs, batches, config = gradcheck_fixture(0)
    with pytest.raises(InvalidArgumentError):
        fd_check(params, inputs, batches, config, step_size=0.0)


def test_size_guard():
    bundle = tiny_fixture(0)
    params = init_params(model_config_for(bundle, dim=64, ranks=(2, 8, 8)))
    _, inputs, batches, config = gradcheck_fixture(0)
    with pytest.raises(SizeLimitError):
        fd_check(params, inputs, batches, config)


def test_regularization_enters_linearly():
    params, inputs, batches, config = gradcheck_fixture(3)
    low = forward_batch(params, inputs, batches, dataclasses.replace(config, lambda_reg=1e-3)).loss
    high = forward_batch(params, inputs, batches, dataclasses.replace(config, lambda_reg=2e-3)).loss
    assert high - low == pytest.approx(1e-3 * regularization(params), rel=1e-9)


def test_unused_direction_gets_no_gradient():
    params, inputs, batches, config = gradcheck_fixture(4)
    config = dataclasses.replace(config, lambda_reg=0.0)
    only_forward = [b for b in batches if b.direction == Direction.TCM_TO_WM]
    record, grads = loss_and_grads(params, inputs, only_forward, config)
    assert set(record.direction_losses) == {Direction.TCM_TO_WM}
    np.testing.assert_array_equal(grads["P"][1], 0.0)
    np.testing.assert_array_equal(grads["U_s"][1], 0.0)
    assert np.abs(grads["P"][0]).sum() > 0.0


def test_duplicate_direction_rejected():
    params, inputs, batches, config = gradcheck_fixture(0)
    with pytest.raises(InvalidArgumentError):
        forward_batch(params, inputs, batches + batches[:1], config)

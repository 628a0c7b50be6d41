import numpy as np
import pytest

from models.configs import TrainConfig, resolve_preset
from models.errors import ConfigConflictError, DimensionMismatchError
from modules.method_module import build_method, fit_method, load_scorer
from modules.storage_module import StorageManager
from modules.synthetic_module import generate_synthetic

MODEL = {"dim": 8, "ranks": (2, 4, 4)}
CONFIG = TrainConfig(epochs=2, negatives=8, batch_size=16, seed=0)


def _same_scores(first, second, bundle):
    for query in bundle.queries[:6]:
        ids_a, scores_a = first.scores(query)
        ids_b, scores_b = second.scores(query)
        np.testing.assert_array_equal(ids_a, ids_b)
        np.testing.assert_allclose(scores_a, scores_b, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("name", ["qcea", "mlp", "biencoder", "procrustes"])
def test_checkpoint_restores_scorer(tiny_bundle, tmp_path, name):
    scorer, result, checkpoint = fit_method(name, tiny_bundle, MODEL, CONFIG)
    assert (result is None) == (name == "procrustes")
    path = str(tmp_path / "model.ckpt")
    StorageManager.save_checkpoint(path, checkpoint)
    restored = StorageManager.load_checkpoint(path)
    assert restored.method == name
    _same_scores(scorer, load_scorer(restored, tiny_bundle), tiny_bundle)


def test_unknown_method(tiny_bundle):
    with pytest.raises(ConfigConflictError):
        fit_method("transe", tiny_bundle, MODEL, CONFIG)
    with pytest.raises(ConfigConflictError):
        build_method("procrustes", tiny_bundle, MODEL)


def test_checkpoint_on_other_dimensions(tiny_bundle):
    _, _, checkpoint = fit_method("qcea", tiny_bundle, MODEL, CONFIG)
    spec, _, _ = resolve_preset("tiny", {"latent_dim": 6, "query_dim": 6, "tcm_dim": 6, "wm_dim": 6})
    other = generate_synthetic(spec, seed=0)
    with pytest.raises(DimensionMismatchError):
        load_scorer(checkpoint, other)

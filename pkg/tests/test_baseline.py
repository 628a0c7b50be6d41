import numpy as np
import pytest
from scipy.stats import ortho_group

from models.configs import SyntheticSpec, TrainConfig
from models.dataset import DatasetBundle, EmbeddingTable, Split, SplitAssignment
from models.errors import InvalidArgumentError
from models.knowledge_graph import Direction
from modules.baseline_module import HIDDEN_BIAS, BiEncoder, MlpMatcher, ProcrustesModel, fit_procrustes
from modules.eval_module import evaluate
from modules.random_module import make_rng
from modules.synthetic_module import generate_synthetic
from modules.train_module import sample_batch
from tests.conftest import WM_OFFSET, build_bundle


def _rotated_bundle(label=Split.TRAIN):
    rng = np.random.default_rng(5)
    tcm = rng.standard_normal((10, 4))
    rotation = ortho_group.rvs(4, random_state=7)
    return build_bundle(tcm, tcm @ rotation, [(i, WM_OFFSET + i) for i in range(10)], label=label), rotation


def _numeric_check(method, batches, config, names, h=1e-6):
    _, _, grads = method.loss_and_grads(batches, config)
    for name in names:
        tensor = method.params[name]
        for index in list(np.ndindex(tensor.shape))[:12]:
            original = tensor[index]
            tensor[index] = original + h
            plus = method.loss(batches, config)[0]
            tensor[index] = original - h
            minus = method.loss(batches, config)[0]
            tensor[index] = original
            assert grads[name][index] == pytest.approx((plus - minus) / (2 * h), abs=1e-6, rel=1e-4)


def test_procrustes_recovers_rotation():
    rng = np.random.default_rng(0)
    source = rng.standard_normal((20, 5))
    rotation = ortho_group.rvs(5, random_state=1)
    mapping = fit_procrustes(source, source @ rotation)
    np.testing.assert_allclose(mapping, rotation, atol=1e-10)
    np.testing.assert_allclose(mapping @ mapping.T, np.eye(5), atol=1e-10)


def test_procrustes_aligns_rotated_graphs():
    bundle, rotation = _rotated_bundle()
    model = ProcrustesModel.fit(bundle)
    np.testing.assert_allclose(model.mapping, rotation, atol=1e-8)
    report = evaluate(bundle, model, Split.TRAIN, modes=("full",))
    for stratum in ("tcm2wm", "wm2tcm"):
        assert report.value("full", stratum, "hit@1") == pytest.approx(1.0)


def test_procrustes_needs_train_pairs(identity_bundle):
    with pytest.raises(InvalidArgumentError):
        ProcrustesModel.fit(identity_bundle)


def test_procrustes_with_different_dimensions():
    rng = np.random.default_rng(2)
    tcm = rng.standard_normal((8, 3))
    wm = np.hstack([tcm, np.zeros((8, 2))])
    base = build_bundle(tcm, tcm, [(i, WM_OFFSET + i) for i in range(8)], label=Split.TRAIN)
    bundle = DatasetBundle(base.tcm_graph, base.wm_graph, base.anchors, base.query_embeddings, base.tcm_embeddings,
                           EmbeddingTable(5, base.wm_embeddings.ids, wm), base.queries, base.compatibility, base.split)
    model = ProcrustesModel.fit(bundle)
    assert model.mapping.shape == (3, 3)
    ids, scores = model.scores(bundle.queries[0])
    assert len(ids) == len(scores) == 8


def test_entity_level_scores_ignore_description():
    spec = SyntheticSpec(n_tcm=30, n_wm=40, n_clusters=12, many_to_many=0.0, context_split=4,
                         latent_dim=8, query_dim=8, tcm_dim=8, wm_dim=8, noise=0.0)
    bundle = generate_synthetic(spec, seed=1)
    model = ProcrustesModel.fit(bundle)
    scoped = [q for q in bundle.queries if q.scoped]
    by_entity = {}
    for query in scoped:
        by_entity.setdefault(query.entity_id, []).append(model.scores(query)[1])
    for scores in by_entity.values():
        assert len(scores) == 2
        np.testing.assert_array_equal(scores[0], scores[1])

    # Одна ранжировка на сущность может попасть в top-1 лишь для одного из двух описаний
    everything = bundle.with_split(SplitAssignment({pair: Split.TEST for pair in bundle.anchors.pairs}))
    report = evaluate(everything, model, Split.TEST, modes=("full",))
    assert report.count("full", "ctx") == 8
    assert report.value("full", "ctx", "hit@1") <= 0.5


def test_biencoder_identical_projections_score_one(identity_bundle):
    method = BiEncoder.create(identity_bundle, dim=3, seed=0)
    method.params["V_wm"] = method.params["V_query"].copy()
    query = identity_bundle.queries_for(Direction.TCM_TO_WM)[2]
    ids, scores = method.scorer().scores(query)
    target = list(ids).index(WM_OFFSET + 2)
    assert scores[target] == pytest.approx(1.0)
    assert np.all(scores <= 1.0 + 1e-12)


@pytest.mark.parametrize("factory, source_inputs", [(MlpMatcher, "query"), (MlpMatcher, "entity"),
                                                    (BiEncoder, "query"), (BiEncoder, "entity")])
def test_baseline_gradients(identity_bundle, factory, source_inputs):
    method = factory.create(identity_bundle, dim=3, source_inputs=source_inputs, seed=4)
    config = TrainConfig(negatives=3, positives=2, temperature=0.5, lambda_reg=1e-3, batch_size=4)
    rng = make_rng(0, "train")
    batches = [sample_batch(identity_bundle, s, config, rng, split=Split.TEST) for s in Direction]
    _numeric_check(method, batches, config, method.params.names())


def test_mlp_has_one_network_per_direction(identity_bundle):
    method = MlpMatcher.create(identity_bundle, dim=3)
    assert {name.split(".")[0] for name in method.params.names()} == {"tcm2wm", "wm2tcm"}
    assert method.config_dict() == {"baseline": {"dim": 3, "source_inputs": "query"}}


def test_mlp_gradients_with_dead_first_layer(identity_bundle):
    method = MlpMatcher.create(identity_bundle, dim=3, seed=4)
    for s in Direction:
        np.testing.assert_array_equal(method.params[f"{s.key}.b2"], np.full(3, HIDDEN_BIAS))
        # Первый слой выключен: вторая предактивация равна смещению и не лежит на изломе ReLU
        method.params[f"{s.key}.W1"] *= 1e-3
        method.params[f"{s.key}.b1"][:] = -1.0
    config = TrainConfig(negatives=3, positives=2, temperature=0.5, lambda_reg=1e-3, batch_size=4)
    rng = make_rng(0, "train")
    batches = [sample_batch(identity_bundle, s, config, rng, split=Split.TEST) for s in Direction]
    _, _, grads = method.loss_and_grads(batches, config)
    for s in Direction:
        # Через мёртвый слой проходит только L2-регуляризация
        np.testing.assert_allclose(grads[f"{s.key}.b1"], 2e-3 * method.params[f"{s.key}.b1"], atol=1e-15)
    _numeric_check(method, batches, config, method.params.names())

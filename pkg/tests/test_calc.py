import numpy as np
import pytest

from models.errors import DegenerateNormError, DimensionMismatchError
from models.knowledge_graph import Direction, Side
from models.params import ModelConfig
from modules.calc_module import (AlignmentInputs, QceaScorer, check_dimensions, encode_entities, encode_query,
                                 gate_weights, glorot_bound, init_params, model_config_for, normalize_rows, score,
                                 tucker_branch, tucker_matrix, tucker_project)
from modules.graph_module import build_adjacency
from modules.synthetic_module import tiny_fixture


@pytest.fixture
def model():
    bundle = tiny_fixture(1)
    config = model_config_for(bundle, dim=6, ranks=(2, 3, 4), gcn_layers=2)
    params = init_params(config, seed=5)
    params["alpha"][0] = -0.7
    return bundle, params, AlignmentInputs(bundle)


def _dense_entities(params, bundle, side):
    """Прямая формула без кэшей: Norm(W x), затем слои Â H θ с ReLU между ними"""
    graph = bundle.graph(side)
    weight = params["W_tcm"] if side is Side.TCM else params["W_wm"]
    features = bundle.embeddings(side).rows(graph.ids)
    hidden = np.array([v / np.linalg.norm(v) for v in features @ weight.T])
    adjacency = build_adjacency(graph).dense()
    for layer in range(params["theta"].shape[0]):
        hidden = adjacency @ hidden @ params["theta"][layer]
        if layer < params["theta"].shape[0] - 1:
            hidden = np.maximum(hidden, 0.0)
    return hidden


def test_init_is_deterministic_and_bounded():
    config = ModelConfig(dim=8, query_dim=5, tcm_dim=6, wm_dim=7, ranks=(2, 3, 4))
    first, second = init_params(config, 3), init_params(config, 3)
    assert first == second
    assert first != init_params(config, 4)
    assert first["alpha"][0] == 0.0
    for name, tensor in first.items():
        if name != "alpha":
            assert np.abs(tensor).max() <= glorot_bound(tensor.shape)


def test_normalize_rows_unit_and_degenerate():
    normalized, norms = normalize_rows(np.array([[3.0, 4.0], [0.0, 2.0]]))
    np.testing.assert_allclose(np.linalg.norm(normalized, axis=1), 1.0)
    np.testing.assert_allclose(norms.ravel(), [5.0, 2.0])
    with pytest.raises(DegenerateNormError):
        normalize_rows(np.array([[1.0, 0.0], [0.0, 0.0]]))


def test_gate_weights_by_variant(model):
    bundle, params, _ = model
    w_tucker, w_residual = gate_weights(params)
    assert w_tucker + w_residual == pytest.approx(1.0)
    assert w_residual == pytest.approx(1.0 / (1.0 + np.exp(0.7)))
    for variant, expected in (("linear", (0.0, 1.0)), ("no_residual", (1.0, 0.0))):
        config = model_config_for(bundle, dim=6, ranks=(2, 3, 4), variant=variant)
        assert gate_weights(init_params(config)) == expected


@pytest.mark.parametrize("alpha, expected", [(-1000.0, 0.0), (0.0, 0.5), (1000.0, 1.0)])
def test_gate_is_stable_for_extreme_alpha(model, alpha, expected):
    _, params, _ = model
    params = params.copy()
    params["alpha"] = np.array([alpha])
    with np.errstate(over="raise"):
        assert params.gate == pytest.approx(expected)
        assert gate_weights(params)[1] == pytest.approx(expected)


def test_tucker_sum_matches_matrix_form(model):
    _, params, _ = model
    g = np.random.default_rng(0).standard_normal(6)
    for direction in Direction:
        np.testing.assert_allclose(tucker_branch(params, g, direction), tucker_matrix(params, direction) @ g,
                                   atol=1e-12)


@pytest.mark.parametrize("dim, ranks, param_draws, vector_draws", [
    (6, (2, 3, 3), 1000, 1),
    (128, (16, 128, 128), 10, 100),
])
def test_tucker_forms_agree_on_random_draws(dim, ranks, param_draws, vector_draws):
    config = ModelConfig(dim=dim, query_dim=4, tcm_dim=4, wm_dim=4, ranks=ranks)
    rng = np.random.default_rng(11)
    for seed in range(param_draws):
        params = init_params(config, seed=seed)
        matrices = {s: tucker_matrix(params, s) for s in Direction}
        for g in rng.standard_normal((vector_draws, dim)):
            for s in Direction:
                np.testing.assert_allclose(tucker_branch(params, g, s), matrices[s] @ g, rtol=0, atol=1e-10)


def test_directions_use_different_operators(model):
    _, params, _ = model
    assert not np.allclose(tucker_matrix(params, Direction.TCM_TO_WM), tucker_matrix(params, Direction.WM_TO_TCM))


def test_entity_encoder_matches_dense_formula(model):
    bundle, params, inputs = model
    for side in (Side.TCM, Side.WM):
        np.testing.assert_allclose(encode_entities(params, inputs, side), _dense_entities(params, bundle, side),
                                   atol=1e-12)


def test_scorer_matches_single_vector_path(model):
    bundle, params, inputs = model
    scorer = QceaScorer(params, inputs)
    for query in bundle.queries:
        s = query.direction
        q = encode_query(params, bundle.query_embeddings.row(query.instance_id), s)
        g = _dense_entities(params, bundle, s.target)
        expected = np.array([score(q, tucker_project(params, row, s)) for row in g])
        ids, scores = scorer.scores(query)
        np.testing.assert_array_equal(ids, bundle.graph(s.target).ids)
        np.testing.assert_allclose(scores, expected, atol=1e-12)
        assert np.all(np.abs(scores) <= 1.0 + 1e-12)
    for direction in Direction:
        queries = bundle.queries_for(direction)
        matrix = scorer.score_matrix(queries, direction)
        np.testing.assert_allclose(matrix, np.array([scorer.scores(q)[1] for q in queries]), atol=1e-12)


def test_no_graph_variant_skips_propagation():
    bundle = tiny_fixture(2)
    config = model_config_for(bundle, dim=6, ranks=(2, 3, 3), variant="no_graph")
    params = init_params(config, seed=1)
    inputs = AlignmentInputs(bundle)
    encoded = encode_entities(params, inputs, Side.TCM)
    np.testing.assert_allclose(np.linalg.norm(encoded, axis=1), 1.0)


def test_check_dimensions():
    bundle = tiny_fixture(0)
    config = ModelConfig(dim=6, query_dim=5, tcm_dim=5, wm_dim=9, ranks=(2, 3, 3))
    with pytest.raises(DimensionMismatchError):
        check_dimensions(config, bundle)


def test_score_is_cosine_for_unit_vectors():
    q = np.array([0.6, 0.8, 0.0])
    assert score(q, q) == pytest.approx(1.0)
    assert score(q, np.array([0.0, 0.0, 1.0])) == 0.0
    assert score(q, -q) == pytest.approx(-1.0)

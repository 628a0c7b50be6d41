"""
Модуль расчетов модели QCEA: представления запросов, графовый кодировщик сущностей,
направленная проекция Такера с остаточным затвором и скоринг
"""
import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from models.dataset import DatasetBundle, QueryInstance
from models.errors import DegenerateNormError, DimensionMismatchError
from models.knowledge_graph import Direction, NormalizedAdjacency, Side
from models.params import ModelConfig, ModelParams
from modules.graph_module import build_adjacency
from modules.random_module import make_rng

logger = logging.getLogger(__name__)


def glorot_bound(shape: Tuple[int, ...]) -> float:
    """Граница равномерной инициализации √(6/(fan_in+fan_out)) для матрицы или среза"""
    fan_out, fan_in = shape[-2], shape[-1]
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def init_params(config: ModelConfig, seed: int = 0) -> ModelParams:
    """
    Инициализирует параметры: равномерное распределение Глоро для всех матриц, α = 0

    Args:
        config: Конфигурация модели
        seed: Зерно (поток "init")
    """
    config.validate()
    rng = make_rng(seed, "init")
    tensors = {}
    for name, shape in config.parameter_shapes().items():
        if name == "alpha":
            tensors[name] = np.zeros(shape)
            continue
        bound = glorot_bound(shape)
        tensors[name] = rng.uniform(-bound, bound, size=shape)
    return ModelParams(config, tensors)


def model_config_for(bundle: DatasetBundle, **values) -> ModelConfig:
    """Конфигурация модели с размерностями входов, взятыми из набора данных"""
    values = {k: v for k, v in values.items() if v is not None}
    values.update(query_dim=bundle.query_embeddings.dim, tcm_dim=bundle.tcm_embeddings.dim,
                  wm_dim=bundle.wm_embeddings.dim)
    config = ModelConfig(**values)
    config.validate()
    return config


def check_dimensions(config: ModelConfig, bundle: DatasetBundle) -> None:
    expected = {"query_dim": bundle.query_embeddings.dim, "tcm_dim": bundle.tcm_embeddings.dim,
                "wm_dim": bundle.wm_embeddings.dim}
    for name, dim in expected.items():
        if getattr(config, name) != dim:
            raise DimensionMismatchError(
                f"{name}={getattr(config, name)} в модели, но {dim} в наборе данных", field=name, expected=dim)


def normalize_rows(matrix: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    ℓ2-нормировка по последней оси

    Returns:
        (нормированная матрица, нормы с сохранённой осью)

    Raises:
        DegenerateNormError: Если хотя бы один вектор нулевой
    """
    norms = np.linalg.norm(matrix, axis=-1, keepdims=True)
    if np.any(norms < np.finfo(np.float64).tiny):
        raise DegenerateNormError("Нулевой вектор перед нормировкой")
    return matrix / norms, norms


def activate(x: np.ndarray, activation: str) -> np.ndarray:
    return np.maximum(x, 0.0) if activation == "relu" else x


def gate_weights(params: ModelParams) -> Tuple[float, float]:
    """Веса (ветвь Такера, остаточная ветвь) с учётом варианта модели"""
    variant = params.config.variant
    if variant == "linear":
        return 0.0, 1.0
    if variant == "no_residual":
        return 1.0, 0.0
    gate = params.gate
    return 1.0 - gate, gate


def core_slice(params: ModelParams, direction: Direction) -> np.ndarray:
    """Σ_r U_s[s,r]·G_r (R_o x R_i)"""
    return np.einsum("r,roi->oi", params["U_s"][int(direction)], params["cores"])


def tucker_matrix(params: ModelParams, direction: Direction) -> np.ndarray:
    """Матричная форма W^(s) = U_o (Σ_r U_s[s,r] G_r) U_iᵀ"""
    return params["U_o"] @ core_slice(params, direction) @ params["U_i"].T


class AlignmentInputs:
    """Подготовленные входы модели: нормированная смежность и матрицы эмбеддингов в порядке графов"""

    def __init__(self, bundle: DatasetBundle):
        self.bundle = bundle
        self.adjacency: Dict[Side, NormalizedAdjacency] = {}
        self.entity_ids: Dict[Side, np.ndarray] = {}
        self.entity_features: Dict[Side, np.ndarray] = {}
        self.position: Dict[Side, Dict[int, int]] = {}
        for side in (Side.TCM, Side.WM):
            graph = bundle.graph(side)
            self.adjacency[side] = build_adjacency(graph)
            self.entity_ids[side] = graph.ids
            self.entity_features[side] = bundle.embeddings(side).rows(graph.ids)
            self.position[side] = {int(i): row for row, i in enumerate(graph.ids)}
        self.query_ids = [q.instance_id for q in bundle.queries]
        self.query_row = {key: row for row, key in enumerate(self.query_ids)}
        self.query_features = bundle.query_embeddings.rows(self.query_ids)


# ---------------------------------------------------------------------- пакетные прямые проходы

def entity_forward(params: ModelParams, inputs: AlignmentInputs, side: Side,
                   cache: Optional[dict] = None) -> np.ndarray:
    """
    Графово-осведомлённые эмбеддинги всех сущностей стороны: Norm(W x) и слои Â·H·θ_l

    Args:
        cache: Если передан словарь, в него пишутся промежуточные значения для обратного прохода
    """
    features = inputs.entity_features[side]
    weight = params["W_tcm"] if side is Side.TCM else params["W_wm"]
    projected = features @ weight.T
    hidden, norms = normalize_rows(projected)
    layers = []
    if params.config.uses_graph:
        adjacency = inputs.adjacency[side]
        state = hidden
        theta = params["theta"]
        for layer in range(theta.shape[0]):
            propagated = adjacency @ state
            output = propagated @ theta[layer]
            layers.append((state, propagated, output))
            state = activate(output, params.config.activation) if layer < theta.shape[0] - 1 else output
        graph_aware = state
    else:
        graph_aware = hidden
    if cache is not None:
        cache.update(features=features, projected=projected, hidden=hidden, norms=norms, layers=layers)
    return graph_aware


def target_forward(params: ModelParams, graph_aware: np.ndarray, direction: Direction,
                   cache: Optional[dict] = None) -> np.ndarray:
    """Представления целей h_u = Norm((1-σ(α))·W^(s)g + σ(α)·R g) для всех строк"""
    core = core_slice(params, direction)
    inner = graph_aware @ params["U_i"]
    mixed = inner @ core.T
    tucker = mixed @ params["U_o"].T
    residual = graph_aware @ params["R"].T
    w_tucker, w_residual = gate_weights(params)
    blend = w_tucker * tucker + w_residual * residual
    targets, norms = normalize_rows(blend)
    if cache is not None:
        cache.update(core=core, inner=inner, mixed=mixed, tucker=tucker, residual=residual,
                     targets=targets, norms=norms, blend=blend)
    return targets


def query_forward(params: ModelParams, sources: np.ndarray, direction: Direction,
                  cache: Optional[dict] = None) -> np.ndarray:
    """
    Представления запросов q = Norm(P_s W_q z)

    Args:
        sources: Эмбеддинги описаний (n x d_q); в варианте no_query - графовые эмбеддинги источников (n x d)
    """
    if params.config.variant == "no_query":
        lifted = sources
    else:
        lifted = sources @ params["W_q"].T
    projected = lifted @ params["P"][int(direction)].T
    queries, norms = normalize_rows(projected)
    if cache is not None:
        cache.update(sources=sources, lifted=lifted, projected=projected, queries=queries, norms=norms)
    return queries


# ---------------------------------------------------------------------- одиночные операции

def encode_query(params: ModelParams, z: np.ndarray, direction: Direction) -> np.ndarray:
    """Единичный вектор запроса Norm(P_s · W_q · z)"""
    projected = params["P"][int(direction)] @ (params["W_q"] @ np.asarray(z, dtype=np.float64))
    return normalize_rows(projected)[0]


def encode_entities(params: ModelParams, inputs: AlignmentInputs, side: Side) -> np.ndarray:
    """Матрица графово-осведомлённых эмбеддингов g стороны (строки в порядке графа)"""
    return entity_forward(params, inputs, side)


def tucker_branch(params: ModelParams, g: np.ndarray, direction: Direction) -> np.ndarray:
    """Ветвь Такера в форме суммы: Σ_r U_s[s,r] · U_o G_r (U_iᵀ g)"""
    inner = params["U_i"].T @ g
    out = np.zeros(params["U_o"].shape[0])
    weights = params["U_s"][int(direction)]
    for r in range(params["cores"].shape[0]):
        out += weights[r] * (params["U_o"] @ (params["cores"][r] @ inner))
    return out


def tucker_project(params: ModelParams, g: np.ndarray, direction: Direction) -> np.ndarray:
    """Единичный вектор цели: смесь ветви Такера и остаточной ветви R·g с затвором σ(α)"""
    g = np.asarray(g, dtype=np.float64)
    w_tucker, w_residual = gate_weights(params)
    blend = w_tucker * tucker_branch(params, g, direction) + w_residual * (params["R"] @ g)
    return normalize_rows(blend)[0]


def score(q: np.ndarray, h: np.ndarray) -> float:
    """f(q, h) = qᵀh; для единичных векторов совпадает с косинусом"""
    return float(np.dot(q, h))


# ---------------------------------------------------------------------- ранжирование

class QceaScorer:
    """Оценивает всех кандидатов целевого графа для запросов при фиксированных параметрах"""

    method = "qcea"

    def __init__(self, params: ModelParams, inputs: AlignmentInputs):
        self.params = params
        self.inputs = inputs
        self._graph_aware = {side: entity_forward(params, inputs, side) for side in (Side.TCM, Side.WM)}
        self._targets = {s: target_forward(params, self._graph_aware[s.target], s) for s in Direction}

    def query_vectors(self, queries: Sequence[QueryInstance], direction: Direction) -> np.ndarray:
        if self.params.config.variant == "no_query":
            position = self.inputs.position[direction.source]
            sources = self._graph_aware[direction.source][[position[q.entity_id] for q in queries]]
        else:
            sources = self.inputs.query_features[[self.inputs.query_row[q.instance_id] for q in queries]]
        return query_forward(self.params, sources, direction)

    def scores(self, query: QueryInstance) -> Tuple[np.ndarray, np.ndarray]:
        """
        Returns:
            (id всех сущностей целевого графа, их оценки)
        """
        direction = query.direction
        q = self.query_vectors([query], direction)[0]
        return self.inputs.entity_ids[direction.target], self._targets[direction] @ q

    def score_matrix(self, queries: List[QueryInstance], direction: Direction) -> np.ndarray:
        return self.query_vectors(queries, direction) @ self._targets[direction].T

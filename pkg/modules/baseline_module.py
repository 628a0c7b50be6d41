"""
Модуль базовых методов сравнения: Прокруст, MLP-сопоставитель и би-энкодер
"""
import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import svd

from models.configs import TrainConfig
from models.dataset import DatasetBundle, QueryInstance, Split, TrainBatch
from models.errors import InvalidArgumentError, NumericFailureError
from models.knowledge_graph import Direction, Side
from models.params import GradientSet, ParamTensors
from modules.calc_module import glorot_bound, normalize_rows
from modules.loss_module import direction_weight, mp_loss_grad, regularization
from modules.random_module import make_rng

logger = logging.getLogger(__name__)

SOURCE_INPUTS = ("query", "entity")
# Начальное смещение скрытых слоёв MLP: предактивации ReLU не стартуют в нуле
HIDDEN_BIAS = 0.01


# ---------------------------------------------------------------------- Прокруст

def fit_procrustes(source: np.ndarray, target: np.ndarray) -> np.ndarray:
    """
    Ортогональное отображение W = U·Vᵀ из SVD(XᵀY), минимизирующее ‖XW - Y‖

    Args:
        source: Строки X - эмбеддинги опорных сущностей-источников
        target: Строки Y - эмбеддинги их соответствий
    """
    cross = source.T @ target
    if source.shape[0] < source.shape[1]:
        logger.warning("Прокруст: %d опорных пар меньше размерности %d", source.shape[0], source.shape[1])
    if np.linalg.matrix_rank(cross) < cross.shape[0]:
        logger.warning("Прокруст: вырожденная матрица взаимной ковариации, используется решение SVD")
    u, _, v_t = svd(cross, full_matrices=True)
    return u @ v_t


def principal_basis(matrix: np.ndarray, dim: int) -> Tuple[np.ndarray, np.ndarray]:
    """Среднее и первые dim главных направлений (столбцами)"""
    mean = matrix.mean(axis=0)
    _, _, v_t = svd(matrix - mean, full_matrices=False)
    basis = np.zeros((matrix.shape[1], dim))
    basis[:, :min(dim, v_t.shape[0])] = v_t[:dim].T
    return mean, basis


def project_side(tensors: Dict[str, np.ndarray], side: Side, matrix: np.ndarray) -> np.ndarray:
    """Проекция эмбеддингов стороны в общее пространство (без изменений при равных размерностях)"""
    key = side.value.lower()
    if f"{key}_basis" not in tensors:
        return matrix
    return (matrix - tensors[f"{key}_mean"]) @ tensors[f"{key}_basis"]


class ProcrustesModel:
    """Отображение пространства ТКМ в пространство ЗМ по обучающим опорным парам"""

    name = "procrustes"

    def __init__(self, bundle: DatasetBundle, params: ParamTensors):
        self.bundle = bundle
        self.params = params
        self.features = {side: self.project(side, bundle.embeddings(side).rows(bundle.graph(side).ids))
                         for side in (Side.TCM, Side.WM)}
        self.normalized = {side: normalize_rows(m)[0] for side, m in self.features.items()}
        self.position = {side: {int(i): r for r, i in enumerate(bundle.graph(side).ids)}
                         for side in (Side.TCM, Side.WM)}

    @classmethod
    def fit(cls, bundle: DatasetBundle) -> "ProcrustesModel":
        """Подгонка по парам обучающей части; при d_T ≠ d_W обе стороны сводятся к min(d_T, d_W) через PCA"""
        tcm, wm = bundle.tcm_embeddings, bundle.wm_embeddings
        tensors = {}
        if tcm.dim != wm.dim:
            shared = min(tcm.dim, wm.dim)
            for side, table in ((Side.TCM, tcm), (Side.WM, wm)):
                mean, basis = principal_basis(table.matrix, shared)
                tensors[f"{side.value.lower()}_mean"] = mean
                tensors[f"{side.value.lower()}_basis"] = basis
        pairs = bundle.split_pairs(Split.TRAIN)
        if not pairs:
            raise InvalidArgumentError("Прокруст требует непустую обучающую часть")
        source = project_side(tensors, Side.TCM, tcm.rows([t for t, _ in pairs]))
        target = project_side(tensors, Side.WM, wm.rows([w for _, w in pairs]))
        tensors["mapping"] = fit_procrustes(source, target)
        return cls(bundle, ParamTensors(tensors))

    @property
    def mapping(self) -> np.ndarray:
        return self.params["mapping"]

    def project(self, side: Side, matrix: np.ndarray) -> np.ndarray:
        return project_side(self.params.tensors, side, matrix)

    def scores(self, query: QueryInstance) -> Tuple[np.ndarray, np.ndarray]:
        """Косинус между отображённым эмбеддингом сущности-источника и всеми целями"""
        s = query.direction
        source = self.features[s.source][self.position[s.source][query.entity_id]]
        mapped = source @ self.mapping if s == Direction.TCM_TO_WM else source @ self.mapping.T
        mapped = normalize_rows(mapped)[0]
        return self.bundle.graph(s.target).ids, self.normalized[s.target] @ mapped

    def scorer(self, params: Optional[ParamTensors] = None) -> "ProcrustesModel":
        return self if params is None else ProcrustesModel(self.bundle, params)

    def config_dict(self) -> dict:
        return {"baseline": {}}


# ---------------------------------------------------------------------- обучаемые базовые методы

class BaselineScorer:
    """Оценки всех целей для обучаемого базового метода при фиксированных параметрах"""

    def __init__(self, method: "ContrastiveBaseline", params: ParamTensors):
        self.method = method
        self.params = params

    def scores(self, query: QueryInstance) -> Tuple[np.ndarray, np.ndarray]:
        s = query.direction
        source = self.method.source_features([query], s)[0]
        return self.method.bundle.graph(s.target).ids, self.method.score_all(self.params, source, s)


class ContrastiveBaseline:
    """Общая часть базовых методов, обучаемых тем же сэмплированием и многопозитивным лоссом"""

    name = "baseline"

    def __init__(self, bundle: DatasetBundle, params: ParamTensors, dim: int, source_inputs: str = "query"):
        if source_inputs not in SOURCE_INPUTS:
            raise InvalidArgumentError(f"Неизвестный вид входов источника '{source_inputs}'",
                                       source_inputs=source_inputs)
        self.bundle = bundle
        self.params = params
        self.dim = dim
        self.source_inputs = source_inputs
        self.entity_features = {side: bundle.embeddings(side).rows(bundle.graph(side).ids)
                                for side in (Side.TCM, Side.WM)}
        self.position = {side: {int(i): r for r, i in enumerate(bundle.graph(side).ids)}
                         for side in (Side.TCM, Side.WM)}

    def source_dim(self, direction: Direction) -> int:
        if self.source_inputs == "query":
            return self.bundle.query_embeddings.dim
        return self.bundle.embeddings(direction.source).dim

    def source_features(self, queries: Sequence[QueryInstance], direction: Direction) -> np.ndarray:
        """Эмбеддинги описаний или, для входов уровня сущности, эмбеддинги сущностей-источников"""
        if self.source_inputs == "query":
            return self.bundle.query_embeddings.rows([q.instance_id for q in queries])
        position = self.position[direction.source]
        return self.entity_features[direction.source][[position[q.entity_id] for q in queries]]

    def candidate_rows(self, batch: TrainBatch) -> List[np.ndarray]:
        position = self.position[batch.direction.target]
        return [np.array([position[u] for u in pos + neg], dtype=np.int64) for _, pos, neg in batch]

    def score_all(self, params: ParamTensors, source: np.ndarray, direction: Direction) -> np.ndarray:
        raise NotImplementedError

    def direction_pass(self, batch: TrainBatch, config: TrainConfig, grads: Optional[ParamTensors],
                       scale: float) -> float:
        raise NotImplementedError

    def _run(self, batches: Sequence[TrainBatch], config: TrainConfig, need_grads: bool):
        grads = self.params.zeros_like() if need_grads else None
        direction_losses: Dict[Direction, float] = {}
        for batch in batches:
            if not len(batch):
                continue
            scale = direction_weight(batch.direction, config.lambda_dir) / len(batch)
            direction_losses[batch.direction] = self.direction_pass(batch, config, grads, scale)
        loss = sum(direction_weight(s, config.lambda_dir) * v for s, v in direction_losses.items())
        if config.lambda_reg:
            loss += config.lambda_reg * regularization(self.params)
            if grads is not None:
                for name, tensor in self.params.items():
                    grads[name] += 2.0 * config.lambda_reg * tensor
        if grads is not None:
            bad = grads.non_finite()
            if bad is not None:
                raise NumericFailureError(f"Нечисловой градиент параметра {bad}", parameter=bad)
            grads = GradientSet(grads.tensors)
        return float(loss), direction_losses, grads

    def loss(self, batches: Sequence[TrainBatch], config: TrainConfig):
        loss, direction_losses, _ = self._run(batches, config, False)
        return loss, direction_losses

    def loss_and_grads(self, batches: Sequence[TrainBatch], config: TrainConfig):
        return self._run(batches, config, True)

    def scorer(self, params: Optional[ParamTensors] = None) -> BaselineScorer:
        return BaselineScorer(self, params if params is not None else self.params)

    def config_dict(self) -> dict:
        return {"baseline": {"dim": self.dim, "source_inputs": self.source_inputs}}


def _glorot(rng: np.random.Generator, shape: Tuple[int, ...]) -> np.ndarray:
    bound = glorot_bound(shape)
    return rng.uniform(-bound, bound, size=shape)


class MlpMatcher(ContrastiveBaseline):
    """
    Параметрическое сопоставление по конкатенации [источник, цель]:
    два скрытых слоя ширины d с ReLU и скалярный выход, отдельная сеть на каждое направление
    """

    name = "mlp"

    @classmethod
    def create(cls, bundle: DatasetBundle, dim: int, source_inputs: str = "query", seed: int = 0) -> "MlpMatcher":
        rng = make_rng(seed, "init")
        method = cls(bundle, ParamTensors({}), dim, source_inputs)
        tensors = {}
        for s in Direction:
            width = method.source_dim(s) + bundle.embeddings(s.target).dim
            tensors[f"{s.key}.W1"] = _glorot(rng, (dim, width))
            tensors[f"{s.key}.b1"] = np.full(dim, HIDDEN_BIAS)
            tensors[f"{s.key}.W2"] = _glorot(rng, (dim, dim))
            tensors[f"{s.key}.b2"] = np.full(dim, HIDDEN_BIAS)
            tensors[f"{s.key}.w3"] = _glorot(rng, (1, dim))[0]
            tensors[f"{s.key}.b3"] = np.zeros(1)
        method.params = ParamTensors(tensors)
        return method

    def _layers(self, params: ParamTensors, s: Direction):
        k = s.key
        split = self.source_dim(s)
        w1 = params[f"{k}.W1"]
        return (w1[:, :split], w1[:, split:], params[f"{k}.b1"], params[f"{k}.W2"], params[f"{k}.b2"],
                params[f"{k}.w3"], params[f"{k}.b3"])

    def score_all(self, params: ParamTensors, source: np.ndarray, direction: Direction) -> np.ndarray:
        w_src, w_tgt, b1, w2, b2, w3, b3 = self._layers(params, direction)
        hidden = np.maximum(source @ w_src.T + self.entity_features[direction.target] @ w_tgt.T + b1, 0.0)
        hidden = np.maximum(hidden @ w2.T + b2, 0.0)
        return hidden @ w3 + b3[0]

    def direction_pass(self, batch, config, grads, scale):
        s = batch.direction
        k = s.key
        w_src, w_tgt, b1, w2, b2, w3, b3 = self._layers(self.params, s)
        sources = self.source_features(batch.queries, s)
        targets = self.entity_features[s.target]
        target_part = targets @ w_tgt.T
        d_target_part = np.zeros_like(target_part)
        split = w_src.shape[1]
        losses = []
        for i, rows in enumerate(self.candidate_rows(batch)):
            n_pos = len(batch.positives[i])
            pre1 = sources[i] @ w_src.T + target_part[rows] + b1
            h1 = np.maximum(pre1, 0.0)
            pre2 = h1 @ w2.T + b2
            h2 = np.maximum(pre2, 0.0)
            out = h2 @ w3 + b3[0]
            value, d_pos, d_neg = mp_loss_grad(out[:n_pos], out[n_pos:], config.temperature)
            losses.append(value)
            if grads is None:
                continue
            d_out = scale * np.concatenate([d_pos, d_neg])
            grads[f"{k}.w3"] += h2.T @ d_out
            grads[f"{k}.b3"][0] += d_out.sum()
            d_pre2 = np.outer(d_out, w3) * (pre2 > 0)
            grads[f"{k}.W2"] += d_pre2.T @ h1
            grads[f"{k}.b2"] += d_pre2.sum(axis=0)
            d_pre1 = (d_pre2 @ w2) * (pre1 > 0)
            grads[f"{k}.b1"] += d_pre1.sum(axis=0)
            grads[f"{k}.W1"][:, :split] += np.outer(d_pre1.sum(axis=0), sources[i])
            np.add.at(d_target_part, rows, d_pre1)
        if grads is not None:
            grads[f"{k}.W1"][:, split:] += d_target_part.T @ targets
        return float(np.mean(losses))


class BiEncoder(ContrastiveBaseline):
    """Раздельные линейные проекции запросов и сущностей каждой стороны, косинусная близость"""

    name = "biencoder"

    @classmethod
    def create(cls, bundle: DatasetBundle, dim: int, source_inputs: str = "query", seed: int = 0) -> "BiEncoder":
        rng = make_rng(seed, "init")
        tensors = {"V_query": _glorot(rng, (dim, bundle.query_embeddings.dim)),
                   "V_tcm": _glorot(rng, (dim, bundle.tcm_embeddings.dim)),
                   "V_wm": _glorot(rng, (dim, bundle.wm_embeddings.dim))}
        return cls(bundle, ParamTensors(tensors), dim, source_inputs)

    def source_projection(self, direction: Direction) -> str:
        if self.source_inputs == "query":
            return "V_query"
        return "V_tcm" if direction.source is Side.TCM else "V_wm"

    @staticmethod
    def target_projection(direction: Direction) -> str:
        return "V_tcm" if direction.target is Side.TCM else "V_wm"

    def score_all(self, params: ParamTensors, source: np.ndarray, direction: Direction) -> np.ndarray:
        query = normalize_rows(params[self.source_projection(direction)] @ source)[0]
        targets = normalize_rows(self.entity_features[direction.target] @ params[self.target_projection(direction)].T)[0]
        return targets @ query

    def direction_pass(self, batch, config, grads, scale):
        s = batch.direction
        src_name, tgt_name = self.source_projection(s), self.target_projection(s)
        sources = self.source_features(batch.queries, s)
        features = self.entity_features[s.target]
        queries, q_norms = normalize_rows(sources @ self.params[src_name].T)
        targets, t_norms = normalize_rows(features @ self.params[tgt_name].T)
        d_queries = np.zeros_like(queries)
        d_targets = np.zeros_like(targets)
        losses = []
        for i, rows in enumerate(self.candidate_rows(batch)):
            n_pos = len(batch.positives[i])
            logits = targets[rows] @ queries[i]
            value, d_pos, d_neg = mp_loss_grad(logits[:n_pos], logits[n_pos:], config.temperature)
            losses.append(value)
            if grads is None:
                continue
            d_logits = scale * np.concatenate([d_pos, d_neg])
            d_queries[i] = d_logits @ targets[rows]
            np.add.at(d_targets, rows, np.outer(d_logits, queries[i]))
        if grads is not None:
            d_q = (d_queries - queries * np.sum(queries * d_queries, axis=1, keepdims=True)) / q_norms
            d_t = (d_targets - targets * np.sum(targets * d_targets, axis=1, keepdims=True)) / t_norms
            grads[src_name] += d_q.T @ sources
            grads[tgt_name] += d_t.T @ features
        return float(np.mean(losses))

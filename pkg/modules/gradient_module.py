"""
Модуль градиентов: записанный прямой проход пакета, аналитический обратный проход
и проверка конечными разностями
"""
import logging
from typing import Dict, Optional, Sequence

import numpy as np

from models.configs import TrainConfig
from models.dataset import TrainBatch
from models.errors import InvalidArgumentError, NumericFailureError, SizeLimitError
from models.knowledge_graph import Direction, Side
from models.params import GradientSet, ModelParams
from models.reports import GradientCheckReport
from modules.calc_module import (AlignmentInputs, entity_forward, gate_weights, init_params, model_config_for,
                                 query_forward, target_forward)
from modules.loss_module import direction_weight, mp_loss_grad, regularization
from modules.synthetic_module import tiny_fixture

logger = logging.getLogger(__name__)

# Предел размера модели для поэлементной проверки конечными разностями
FD_PARAMETER_LIMIT = 10_000


class ForwardRecord:
    """Промежуточные значения прямого прохода, нужные обратному проходу"""

    def __init__(self, batches: Sequence[TrainBatch]):
        self.batches = list(batches)
        self.entity_cache: Dict[Side, dict] = {}
        self.target_cache: Dict[Direction, dict] = {}
        self.query_cache: Dict[Direction, dict] = {}
        self.query_rows: Dict[Direction, list] = {}
        # Для каждого пакета и запроса: строки кандидатов цели и dL/dℓ
        self.candidate_rows: Dict[Direction, list] = {}
        self.logit_grads: Dict[Direction, list] = {}
        self.direction_losses: Dict[Direction, float] = {}
        self.regularization = 0.0
        self.loss = 0.0


def forward_batch(params: ModelParams, inputs: AlignmentInputs, batches: Sequence[TrainBatch],
                  config: TrainConfig) -> ForwardRecord:
    """
    Прямой проход по пакетам обоих направлений с записью промежуточных значений

    Args:
        params: Параметры модели
        inputs: Подготовленные входы
        batches: Не более одного пакета на направление
        config: Гиперпараметры (τ, λ_dir, λ_reg)

    Returns:
        ForwardRecord с общим лоссом и средними лоссами по направлениям
    """
    record = ForwardRecord(batches)
    graph_aware = {}
    for side in (Side.TCM, Side.WM):
        cache = {}
        graph_aware[side] = entity_forward(params, inputs, side, cache)
        record.entity_cache[side] = cache

    for batch in record.batches:
        s = batch.direction
        if s in record.direction_losses:
            raise InvalidArgumentError(f"Повторный пакет направления {s.label}", direction=int(s))
        if not len(batch):
            continue
        target_cache = {}
        targets = target_forward(params, graph_aware[s.target], s, target_cache)
        record.target_cache[s] = target_cache

        if params.config.variant == "no_query":
            position = inputs.position[s.source]
            rows = [position[q.entity_id] for q in batch.queries]
            sources = graph_aware[s.source][rows]
        else:
            rows = [inputs.query_row[q.instance_id] for q in batch.queries]
            sources = inputs.query_features[rows]
        query_cache = {}
        queries = query_forward(params, sources, s, query_cache)
        record.query_cache[s] = query_cache
        record.query_rows[s] = rows

        position = inputs.position[s.target]
        losses, candidate_rows, logit_grads = [], [], []
        for i, (_, positives, negatives) in enumerate(batch):
            cand = np.array([position[u] for u in positives + negatives], dtype=np.int64)
            logits = targets[cand] @ queries[i]
            value, d_pos, d_neg = mp_loss_grad(logits[:len(positives)], logits[len(positives):],
                                               config.temperature)
            losses.append(value)
            candidate_rows.append(cand)
            logit_grads.append(np.concatenate([d_pos, d_neg]))
        record.candidate_rows[s] = candidate_rows
        record.logit_grads[s] = logit_grads
        record.direction_losses[s] = float(np.mean(losses))

    record.regularization = regularization(params) if config.lambda_reg else 0.0
    record.loss = sum(direction_weight(s, config.lambda_dir) * value
                      for s, value in record.direction_losses.items())
    record.loss += config.lambda_reg * record.regularization
    return record


def _normalize_backward(normalized: np.ndarray, norms: np.ndarray, d_out: np.ndarray) -> np.ndarray:
    """Производная y = x/‖x‖ по строкам: (dy - y·(y·dy))/‖x‖"""
    return (d_out - normalized * np.sum(normalized * d_out, axis=-1, keepdims=True)) / norms


def backward(params: ModelParams, inputs: AlignmentInputs, record: ForwardRecord,
             config: TrainConfig) -> GradientSet:
    """
    Точные градиенты общего лосса по всем тензорам параметров

    Raises:
        NumericFailureError: Если градиент какого-либо тензора содержит нечисловые значения
    """
    grads = params.zeros_like()
    variant = params.config.variant
    d_graph = {side: np.zeros_like(record.entity_cache[side]["hidden"]) for side in (Side.TCM, Side.WM)}

    for batch in record.batches:
        s = batch.direction
        if s not in record.direction_losses:
            continue
        scale = direction_weight(s, config.lambda_dir) / len(batch)
        t_cache, q_cache = record.target_cache[s], record.query_cache[s]
        targets, queries = t_cache["targets"], q_cache["queries"]

        d_targets = np.zeros_like(targets)
        d_queries = np.zeros_like(queries)
        for i, (cand, d_logits) in enumerate(zip(record.candidate_rows[s], record.logit_grads[s])):
            d_logits = scale * d_logits
            d_queries[i] = d_logits @ targets[cand]
            np.add.at(d_targets, cand, np.outer(d_logits, queries[i]))

        # Цели: нормировка, затвор, ветвь Такера, остаточная ветвь
        g = record.entity_cache[s.target]
        graph_aware = g["layers"][-1][2] if g["layers"] else g["hidden"]
        d_blend = _normalize_backward(targets, t_cache["norms"], d_targets)
        w_tucker, w_residual = gate_weights(params)
        d_tucker, d_residual = w_tucker * d_blend, w_residual * d_blend

        grads["R"] += d_residual.T @ graph_aware
        d_graph[s.target] += d_residual @ params["R"]

        grads["U_o"] += d_tucker.T @ t_cache["mixed"]
        d_mixed = d_tucker @ params["U_o"]
        d_core = d_mixed.T @ t_cache["inner"]
        d_inner = d_mixed @ t_cache["core"]
        grads["U_i"] += graph_aware.T @ d_inner
        d_graph[s.target] += d_inner @ params["U_i"].T
        grads["U_s"][int(s)] += np.einsum("oi,roi->r", d_core, params["cores"])
        grads["cores"] += params["U_s"][int(s)][:, None, None] * d_core[None, :, :]

        if variant not in ("linear", "no_residual"):
            gate = params.gate
            d_gate = float(np.sum((t_cache["residual"] - t_cache["tucker"]) * d_blend))
            grads["alpha"][0] += d_gate * gate * (1.0 - gate)

        # Запросы
        d_projected = _normalize_backward(queries, q_cache["norms"], d_queries)
        grads["P"][int(s)] += d_projected.T @ q_cache["lifted"]
        d_lifted = d_projected @ params["P"][int(s)]
        if variant == "no_query":
            np.add.at(d_graph[s.source], record.query_rows[s], d_lifted)
        else:
            grads["W_q"] += d_lifted.T @ q_cache["sources"]

    # Графовый кодировщик, общий для обеих сторон
    for side in (Side.TCM, Side.WM):
        cache = record.entity_cache[side]
        d_state = d_graph[side]
        if cache["layers"]:
            adjacency = inputs.adjacency[side]
            last = len(cache["layers"]) - 1
            for layer in range(last, -1, -1):
                state, propagated, output = cache["layers"][layer]
                if layer < last and params.config.activation == "relu":
                    d_state = d_state * (output > 0)
                grads["theta"][layer] += propagated.T @ d_state
                d_state = adjacency.matrix.T @ (d_state @ params["theta"][layer].T)
                d_state = np.asarray(d_state)
        d_projected = _normalize_backward(cache["hidden"], cache["norms"], d_state)
        name = "W_tcm" if side is Side.TCM else "W_wm"
        grads[name] += d_projected.T @ cache["features"]

    if config.lambda_reg:
        for name, tensor in params.items():
            grads[name] += 2.0 * config.lambda_reg * tensor

    bad = grads.non_finite()
    if bad is not None:
        raise NumericFailureError(f"Нечисловой градиент параметра {bad}", parameter=bad)
    return GradientSet(grads.tensors)


def loss_and_grads(params: ModelParams, inputs: AlignmentInputs, batches: Sequence[TrainBatch],
                   config: TrainConfig):
    """Прямой и обратный проход: (ForwardRecord, GradientSet)"""
    record = forward_batch(params, inputs, batches, config)
    return record, backward(params, inputs, record, config)


def fd_check(params: ModelParams, inputs: AlignmentInputs, batches: Sequence[TrainBatch],
             config: TrainConfig, step_size: float = 1e-5, tolerance: float = 1e-4,
             gradients: Optional[GradientSet] = None, floor: float = 1e-3) -> GradientCheckReport:
    """
    Поэлементная проверка градиентов центральными конечными разностями

    Args:
        params: Параметры (не изменяются)
        inputs: Подготовленные входы
        batches: Фиксированные пакеты, на которых считается лосс
        config: Гиперпараметры лосса
        step_size: Шаг h
        tolerance: Допустимая относительная ошибка
        gradients: Проверяемые градиенты; по умолчанию считаются обратным проходом
        floor: Нижняя граница знаменателя относительной ошибки

    Returns:
        Отчёт с максимальной ошибкой по каждому тензору и списком нарушающих координат

    Raises:
        SizeLimitError: Если параметров больше FD_PARAMETER_LIMIT
        InvalidArgumentError: Если step_size <= 0
    """
    if step_size <= 0:
        raise InvalidArgumentError(f"Шаг конечных разностей должен быть положительным: {step_size}",
                                   field="step_size")
    if params.size() > FD_PARAMETER_LIMIT:
        raise SizeLimitError(f"Модель из {params.size()} параметров слишком велика для проверки "
                             f"(предел {FD_PARAMETER_LIMIT})", size=params.size())
    if gradients is None:
        gradients = loss_and_grads(params, inputs, batches, config)[1]

    report = GradientCheckReport(step_size, tolerance)
    shifted = params.copy()
    for name in params.names():
        tensor = shifted[name]
        worst = 0.0
        for index in np.ndindex(tensor.shape):
            original = tensor[index]
            tensor[index] = original + step_size
            plus = forward_batch(shifted, inputs, batches, config).loss
            tensor[index] = original - step_size
            minus = forward_batch(shifted, inputs, batches, config).loss
            tensor[index] = original
            numeric = (plus - minus) / (2.0 * step_size)
            analytic = float(gradients[name][index])
            error = abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)
            worst = max(worst, error)
            if error > tolerance:
                report.offending.append((name, tuple(int(i) for i in index), analytic, numeric, error))
        report.max_errors[name] = worst
    if report.passed:
        logger.info("Проверка градиентов пройдена: %d параметров", params.size())
    else:
        logger.warning("Проверка градиентов: превышение допуска в %s", ", ".join(report.flagged()))
    return report


def gradcheck_fixture(seed: int = 0, variant: str = "full"):
    """
    Крошечная модель (d=6, ранги (2, 3, 3), два слоя GCN) на наборе tiny_fixture
    и пакеты обоих направлений, содержащие все запросы

    Returns:
        Кортеж (параметры, входы, пакеты, конфигурация обучения)
    """
    bundle = tiny_fixture(seed)
    config = model_config_for(bundle, dim=6, ranks=(2, 3, 3), gcn_layers=2, variant=variant)
    params = init_params(config, seed)
    # Гейт вне симметричной точки σ(0) = 0.5
    params["alpha"][0] = 0.3
    batches = []
    for direction in Direction:
        target_ids = bundle.graph(direction.target).ids.tolist()
        queries, positives, negatives = [], [], []
        for query in bundle.queries_for(direction):
            pool = sorted(bundle.query_pool(query))
            queries.append(query)
            positives.append(pool)
            negatives.append([u for u in target_ids if u not in bundle.anchors.pool(query.entity_id, direction)])
        batches.append(TrainBatch(direction, queries, positives, negatives))
    train_config = TrainConfig(temperature=0.5, negatives=3, lambda_reg=1e-3, lambda_dir=0.4)
    return params, AlignmentInputs(bundle), batches, train_config

"""
Модуль функций потерь: многопозитивный контрастный лосс и двунаправленная целевая функция
"""
from typing import Dict, Tuple

import numpy as np
from scipy.special import logsumexp, softmax

from models.configs import TrainConfig
from models.errors import InvalidArgumentError
from models.knowledge_graph import Direction
from models.params import ParamTensors


def _check_logits(pos_logits: np.ndarray, temperature: float) -> None:
    if temperature <= 0:
        raise InvalidArgumentError("Температура должна быть положительной", field="temperature")
    if len(pos_logits) == 0:
        raise InvalidArgumentError("Пустой список позитивов", field="positives")


def mp_loss(pos_logits, neg_logits, temperature: float) -> float:
    """
    -log(Σ exp(ℓ⁺/τ) / (Σ exp(ℓ⁺/τ) + Σ exp(ℓ⁻/τ))) в устойчивой форме log-sum-exp

    Args:
        pos_logits: Оценки позитивов (не менее одного)
        neg_logits: Оценки негативов
        temperature: τ > 0
    """
    _check_logits(np.asarray(pos_logits), temperature)
    pos = np.asarray(pos_logits, dtype=np.float64) / temperature
    neg = np.asarray(neg_logits, dtype=np.float64) / temperature
    value = logsumexp(np.concatenate([pos, neg])) - logsumexp(pos)
    return max(float(value), 0.0)


def mp_loss_grad(pos_logits, neg_logits, temperature: float) -> Tuple[float, np.ndarray, np.ndarray]:
    """
    Значение лосса и его производные по оценкам позитивов и негативов

    Returns:
        (лосс, dL/dℓ⁺, dL/dℓ⁻)
    """
    _check_logits(np.asarray(pos_logits), temperature)
    pos = np.asarray(pos_logits, dtype=np.float64) / temperature
    neg = np.asarray(neg_logits, dtype=np.float64) / temperature
    both = np.concatenate([pos, neg])
    value = float(logsumexp(both) - logsumexp(pos))
    share = softmax(both)
    d_pos = (share[:len(pos)] - softmax(pos)) / temperature
    d_neg = share[len(pos):] / temperature
    return value, d_pos, d_neg


def direction_weight(direction: Direction, lambda_dir: float) -> float:
    """Вес направления в общей целевой функции: λ_dir для WM→TCM, 1-λ_dir для TCM→WM"""
    return lambda_dir if Direction(direction) == Direction.WM_TO_TCM else 1.0 - lambda_dir


def regularization(params: ParamTensors) -> float:
    """Сумма квадратов всех элементов параметров"""
    return float(sum(float(np.sum(t * t)) for _, t in params.items()))


def total_loss(direction_losses: Dict[Direction, float], params: ParamTensors, config: TrainConfig) -> float:
    """
    λ_dir·L_WM→TCM + (1-λ_dir)·L_TCM→WM + λ_reg·Σθ²

    Args:
        direction_losses: Средние лоссы по направлениям (отсутствующее направление даёт 0)
    """
    value = sum(direction_weight(s, config.lambda_dir) * float(loss) for s, loss in direction_losses.items())
    if config.lambda_reg:
        value += config.lambda_reg * regularization(params)
    return float(value)

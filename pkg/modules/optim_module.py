"""
Модуль оптимизации: Adam с обрезкой градиента по глобальной норме и снижение шага на плато
"""
import logging
from typing import Tuple

import numpy as np

from models.errors import DimensionMismatchError, NumericFailureError
from models.params import AdamState, ParamTensors

logger = logging.getLogger(__name__)


def clip_gradients(grads: ParamTensors, clip_norm: float) -> Tuple[ParamTensors, float]:
    """
    Обрезка по глобальной норме

    Returns:
        (градиенты, при необходимости умноженные на clip_norm/‖g‖, исходная глобальная норма)
    """
    norm = grads.global_norm()
    if clip_norm is None or clip_norm <= 0 or norm <= clip_norm:
        return grads, norm
    factor = clip_norm / norm
    return ParamTensors({name: g * factor for name, g in grads.items()}), norm


def adam_step(params: ParamTensors, grads: ParamTensors, state: AdamState,
              clip_norm: float = 1.0) -> Tuple[ParamTensors, AdamState]:
    """
    Один шаг Adam с коррекцией смещения; параметры и моменты обновляются на месте

    Args:
        params: Параметры
        grads: Градиенты тех же форм
        state: Моменты и гиперпараметры
        clip_norm: Порог глобальной нормы (обрезка до обновления моментов)

    Returns:
        (params, state) после шага

    Raises:
        NumericFailureError: Если обновление даёт нечисловые значения
    """
    for name, tensor in params.items():
        if grads[name].shape != tensor.shape:
            raise DimensionMismatchError(f"Градиент {name} формы {grads[name].shape}, параметр {tensor.shape}",
                                         field=name)
    grads, _ = clip_gradients(grads, clip_norm)
    state.step += 1
    bias1 = 1.0 - state.beta1 ** state.step
    bias2 = 1.0 - state.beta2 ** state.step

    updates = {}
    for name, tensor in params.items():
        g = grads[name]
        m = state.first_moment[name]
        v = state.second_moment[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        update = state.lr * (m / bias1) / (np.sqrt(v / bias2) + state.eps)
        if not np.all(np.isfinite(update)):
            raise NumericFailureError(f"Нечисловое обновление параметра {name}", parameter=name)
        updates[name] = update
    for name, update in updates.items():
        params[name] -= update
    return params, state


class PlateauDecay:
    """Снижение шага обучения, если валидационная метрика не растёт decay_patience оценок подряд"""

    def __init__(self, decay_patience: int = 10, factor: float = 0.5, min_lr: float = 1e-5):
        self.decay_patience = decay_patience
        self.factor = factor
        self.min_lr = min_lr
        self.best = -np.inf
        self.stale = 0

    def update(self, metric: float, state: AdamState) -> bool:
        """Учитывает новую оценку; возвращает True, если шаг был снижен"""
        if metric > self.best:
            self.best = metric
            self.stale = 0
            return False
        self.stale += 1
        if self.stale < self.decay_patience or state.lr <= self.min_lr:
            return False
        self.stale = 0
        state.lr = max(state.lr * self.factor, self.min_lr)
        logger.info("Шаг обучения снижен до %.2e", state.lr)
        return True

"""
Модуль разбиения опорных пар на train/val/test на уровне пар
"""
import logging
from typing import List, Sequence, Tuple

import numpy as np

from models.dataset import Split, SplitAssignment
from models.errors import InsufficientDataError, InvalidArgumentError
from models.knowledge_graph import AnchorSet
from modules.random_module import make_rng

logger = logging.getLogger(__name__)

DEFAULT_RATIOS = (0.6, 0.2, 0.2)


def split_sizes(total: int, ratios: Sequence[float]) -> List[int]:
    """
    Размеры частей: ⌊ratio·N⌋ с распределением остатка по наибольшим дробным частям

    Args:
        total: Число пар N
        ratios: Доли частей
    """
    exact = [r * total for r in ratios]
    sizes = [int(np.floor(x + 1e-9)) for x in exact]
    remainder = total - sum(sizes)
    order = sorted(range(len(ratios)), key=lambda i: (-(exact[i] - sizes[i]), i))
    for i in order[:remainder]:
        sizes[i] += 1
    return sizes


def split_anchors(anchors: AnchorSet, ratios: Tuple[float, float, float] = DEFAULT_RATIOS,
                  seed: int = 0) -> SplitAssignment:
    """
    Делит опорные пары на train/val/test; одна сущность может попасть в разные части с разными целями

    Args:
        anchors: Набор соответствий
        ratios: Доли (train, val, test), сумма равна 1
        seed: Зерно; результат не зависит от порядка пар во входе
    """
    if len(ratios) != 3 or min(ratios) < 0 or abs(sum(ratios) - 1.0) > 1e-9:
        raise InvalidArgumentError(f"Доли разбиения {tuple(ratios)} должны быть неотрицательны и давать 1",
                                   ratios=tuple(ratios))
    if len(anchors) < 3:
        raise InsufficientDataError(f"Для разбиения нужно не менее 3 пар, получено {len(anchors)}",
                                    count=len(anchors))
    pairs = sorted(set(anchors.pairs))
    order = make_rng(seed, "split").permutation(len(pairs))
    sizes = split_sizes(len(pairs), ratios)

    labels = {}
    bounds = np.cumsum([0] + sizes)
    for part, split in enumerate((Split.TRAIN, Split.VAL, Split.TEST)):
        for position in order[bounds[part]:bounds[part + 1]]:
            labels[pairs[position]] = split
    logger.info("Разбиение пар: train=%d, val=%d, test=%d", *sizes)
    return SplitAssignment(labels)

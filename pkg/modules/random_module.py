"""
Именованные потоки случайных чисел, порождённые одним зерном
"""
import zlib

import numpy as np

from models.errors import InvalidArgumentError

STREAMS = ("gen", "split", "init", "train", "val-batches", "ratio", "questions", "dropx")


def make_rng(seed: int, stream: str, *extra: int) -> np.random.Generator:
    """
    Генератор для потока stream; дополнительные целые ключи дают независимые подпотоки

    Args:
        seed: Общее зерно запуска
        stream: Имя потока из STREAMS
        extra: Например (номер вопроса, номер попытки) для DropX

    Raises:
        InvalidArgumentError: Если поток не объявлен в STREAMS
    """
    if stream not in STREAMS:
        raise InvalidArgumentError(f"Неизвестный поток случайных чисел '{stream}'", stream=stream)
    key = [int(seed) & 0xFFFFFFFF, zlib.crc32(stream.encode("utf-8"))] + [int(e) & 0xFFFFFFFF for e in extra]
    return np.random.default_rng(np.random.SeedSequence(key))

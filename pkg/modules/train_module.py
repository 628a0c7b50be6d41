"""
Модуль обучения: сэмплирование позитивов и негативов, цикл обучения с ранней остановкой
"""
import logging
import math
import os
from typing import Callable, Dict, List, Optional, Sequence, Set, Tuple

import numpy as np
from tqdm import tqdm

from models.configs import TrainConfig
from models.dataset import DatasetBundle, QueryInstance, Split, TrainBatch
from models.errors import InsufficientDataError, NumericFailureError
from models.knowledge_graph import Direction
from models.params import AdamState, ModelParams, ParamTensors
from modules.calc_module import AlignmentInputs, QceaScorer
from modules.eval_module import evaluate
from modules.gradient_module import backward, forward_batch
from modules.optim_module import PlateauDecay, adam_step
from modules.random_module import make_rng
from modules.storage_module import Checkpoint, StorageManager

logger = logging.getLogger(__name__)

Example = Tuple[QueryInstance, int]


def training_examples(bundle: DatasetBundle, direction: Direction, split: Split = Split.TRAIN) -> List[Example]:
    """
    Обучающие примеры направления: пары (экземпляр запроса, истинная цель из пар выбранной части)

    Returns:
        Примеры в порядке (instance_id, id цели)
    """
    pairs = set(bundle.split_pairs(split))
    examples = []
    for query in bundle.queries_for(direction):
        for target in sorted(bundle.query_pool(query, pairs)):
            examples.append((query, target))
    return examples


class NegativeSampler:
    """Кандидаты в негативы для каждой сущности-источника: цель минус глобальный пул"""

    def __init__(self, bundle: DatasetBundle, direction: Direction):
        self.bundle = bundle
        self.direction = Direction(direction)
        self.target_ids = bundle.graph(self.direction.target).ids
        self._cache: Dict[int, np.ndarray] = {}

    def candidates(self, entity_id: int) -> np.ndarray:
        if entity_id not in self._cache:
            pool = self.bundle.anchors.pool(entity_id, self.direction)
            mask = ~np.isin(self.target_ids, list(pool)) if pool else np.ones(len(self.target_ids), dtype=bool)
            self._cache[entity_id] = self.target_ids[mask]
        return self._cache[entity_id]


def sample_batch(bundle: DatasetBundle, direction: Direction, config: TrainConfig, rng: np.random.Generator,
                 examples: Optional[Sequence[Example]] = None, split: Split = Split.TRAIN,
                 sampler: Optional[NegativeSampler] = None) -> TrainBatch:
    """
    Формирует пакет: до P позитивов (истинная цель всегда первая) и K негативов на запрос

    Args:
        bundle: Набор данных с разбиением
        direction: Направление s
        config: Число позитивов P и негативов K, размер пакета
        rng: Генератор случайных чисел
        examples: Примеры пакета; None - batch_size случайных примеров выбранной части
        split: Часть, из пар которой берутся позитивы
        sampler: Кэш кандидатов в негативы

    Raises:
        InsufficientDataError: Если в выбранной части нет примеров для направления
    """
    direction = Direction(direction)
    pairs: Set[Tuple[int, int]] = set(bundle.split_pairs(split))
    if examples is None:
        pool = training_examples(bundle, direction, split)
        if not pool:
            raise InsufficientDataError(f"Нет примеров части {split.value} для направления {direction.label}",
                                        direction=int(direction))
        chosen = rng.choice(len(pool), size=min(config.batch_size, len(pool)), replace=False)
        examples = [pool[i] for i in chosen]
    sampler = sampler or NegativeSampler(bundle, direction)

    queries, positives, negatives = [], [], []
    reduced = 0
    for query, target in examples:
        others = sorted(bundle.query_pool(query, pairs) - {target})
        extra = min(config.positives - 1, len(others))
        picked = rng.choice(others, size=extra, replace=False).tolist() if extra else []
        candidates = sampler.candidates(query.entity_id)
        count = min(config.negatives, len(candidates))
        if count < config.negatives:
            reduced += 1
        queries.append(query)
        positives.append([target] + picked)
        negatives.append(rng.choice(candidates, size=count, replace=False).tolist() if count else [])
    if reduced:
        logger.warning("Направление %s: число негативов уменьшено до доступного для %d запросов",
                       direction.label, reduced)
    return TrainBatch(direction, queries, positives, negatives, reduced)


class QceaMethod:
    """Обучаемый метод QCEA: параметры модели и вычисление лосса с градиентами"""

    name = "qcea"

    def __init__(self, params: ModelParams, inputs: AlignmentInputs):
        self.params = params
        self.inputs = inputs

    def loss(self, batches: Sequence[TrainBatch], config: TrainConfig) -> Tuple[float, Dict[Direction, float]]:
        record = forward_batch(self.params, self.inputs, batches, config)
        return record.loss, record.direction_losses

    def loss_and_grads(self, batches: Sequence[TrainBatch], config: TrainConfig):
        record = forward_batch(self.params, self.inputs, batches, config)
        if not math.isfinite(record.loss):
            return record.loss, record.direction_losses, None
        return record.loss, record.direction_losses, backward(self.params, self.inputs, record, config)

    def scorer(self, params: Optional[ParamTensors] = None) -> QceaScorer:
        return QceaScorer(params if params is not None else self.params, self.inputs)

    def config_dict(self) -> dict:
        return {"model": self.params.config.to_dict()}


class TrainingResult:
    """Итог обучения: лучшие параметры, эпоха, метрика и журнал"""

    def __init__(self, method, best_params: ParamTensors, best_epoch: int, best_metric: float,
                 log: List[dict], adam: AdamState, stopped_early: bool):
        self.method = method
        self.best_params = best_params
        self.best_epoch = best_epoch
        self.best_metric = best_metric
        self.log = log
        self.adam = adam
        self.stopped_early = stopped_early

    def checkpoint(self, train_config: TrainConfig, meta: Optional[dict] = None) -> Checkpoint:
        config = dict(self.method.config_dict(), train=train_config.to_dict())
        meta = dict(meta or {}, best_epoch=self.best_epoch, best_metric=self.best_metric)
        return Checkpoint(self.method.name, config, self.best_params, self.adam, meta)

    def epoch_losses(self) -> List[float]:
        return [r["loss"] for r in self.log if r["split"] == "train"]


class Trainer:
    """Цикл обучения обоих направлений с валидацией, снижением шага и ранней остановкой"""

    def __init__(self, bundle: DatasetBundle, method, config: TrainConfig,
                 evaluator: Optional[Callable[[object], float]] = None,
                 diagnostic_dir: Optional[str] = None, progress: bool = False):
        """
        Args:
            bundle: Набор данных с непустыми train и val
            method: Обучаемый метод (QceaMethod или базовая модель с тем же интерфейсом)
            config: Гиперпараметры обучения
            evaluator: Функция метода -> валидационная метрика; по умолчанию Hit@K на val
            diagnostic_dir: Каталог для диагностической контрольной точки при NaN
            progress: Показывать индикатор прогресса
        """
        config.validate()
        self.bundle = bundle
        self.method = method
        self.config = config
        self.evaluator = evaluator or self._validation_hit
        self.diagnostic_dir = diagnostic_dir
        self.progress = progress
        self.examples = {s: training_examples(bundle, s) for s in Direction}
        if not any(self.examples.values()):
            raise InsufficientDataError("Пустая обучающая часть")
        if not bundle.split_pairs(Split.VAL):
            raise InsufficientDataError("Пустая валидационная часть")
        self.samplers = {s: NegativeSampler(bundle, s) for s in Direction}
        self._val_batches = self._build_val_batches()

    def _build_val_batches(self) -> List[TrainBatch]:
        rng = make_rng(self.config.seed, "val-batches")
        batches = []
        for s in Direction:
            examples = training_examples(self.bundle, s, Split.VAL)
            if examples:
                batches.append(sample_batch(self.bundle, s, self.config, rng, examples, Split.VAL,
                                            self.samplers[s]))
        return batches

    def _validation_hit(self, method) -> float:
        report = evaluate(self.bundle, method.scorer(), Split.VAL, modes=(self.config.eval_mode,),
                          k_list=(1, self.config.eval_k))
        return report.value(self.config.eval_mode, "overall", f"hit@{self.config.eval_k}")

    def _epoch_steps(self, rng: np.random.Generator) -> List[Dict[Direction, List[Example]]]:
        """Разбивает перемешанные примеры на шаги; более короткое направление повторяется по кругу"""
        orders = {s: rng.permutation(len(ex)) for s, ex in self.examples.items() if ex}
        size = self.config.batch_size
        n_steps = max(math.ceil(len(self.examples[s]) / size) for s in orders)
        steps = []
        for step in range(n_steps):
            chunk = {}
            for s, order in orders.items():
                count = min(size, len(order))
                chunk[s] = [self.examples[s][order[(step * size + j) % len(order)]] for j in range(count)]
            steps.append(chunk)
        return steps

    def _fail(self, epoch: int, loss: float) -> None:
        if self.diagnostic_dir:
            path = os.path.join(self.diagnostic_dir, "diagnostic.ckpt")
            StorageManager.save_checkpoint(path, Checkpoint(
                self.method.name, dict(self.method.config_dict(), train=self.config.to_dict()),
                self.method.params, None, {"epoch": epoch, "loss": repr(loss)}))
            logger.error("Диагностическая контрольная точка сохранена в %s", path)
        bad = self.method.params.non_finite()
        raise NumericFailureError(f"Нечисловой лосс на эпохе {epoch}", parameter=bad, epoch=epoch)

    def fit(self) -> TrainingResult:
        config = self.config
        rng = make_rng(config.seed, "train")
        adam = AdamState.for_params(self.method.params, lr=config.lr)
        decay = PlateauDecay(config.decay_patience, config.decay_factor, config.min_lr)
        best_metric, best_epoch, best_params = -np.inf, 0, self.method.params.copy()
        stale, evaluations, stopped = 0, 0, False
        log: List[dict] = []

        epochs = tqdm(range(1, config.epochs + 1), desc=f"train {self.method.name}",
                      disable=not self.progress, leave=False)
        for epoch in epochs:
            losses = []
            for chunk in self._epoch_steps(rng):
                batches = [sample_batch(self.bundle, s, config, rng, examples, Split.TRAIN, self.samplers[s])
                           for s, examples in chunk.items()]
                loss, _, grads = self.method.loss_and_grads(batches, config)
                if grads is None or not math.isfinite(loss):
                    self._fail(epoch, loss)
                adam_step(self.method.params, grads, adam, config.clip_norm)
                losses.append(loss)
            train_loss = float(np.mean(losses))
            log.append({"epoch": epoch, "split": "train", "loss": train_loss, "hit@10": None, "lr": adam.lr})

            if epoch % config.eval_every:
                continue
            metric = float(self.evaluator(self.method))
            val_loss = float(self.method.loss(self._val_batches, config)[0]) if self._val_batches else None
            evaluations += 1
            log.append({"epoch": epoch, "split": "val", "loss": val_loss, "hit@10": metric, "lr": adam.lr})
            epochs.set_postfix(loss=f"{train_loss:.4f}", hit=f"{metric:.3f}")
            logger.debug("Эпоха %d: loss=%.6f val_hit=%.4f lr=%.2e", epoch, train_loss, metric, adam.lr)

            if metric > best_metric:
                best_metric, best_epoch, best_params = metric, epoch, self.method.params.copy()
                stale = 0
            else:
                stale += 1
            decay.update(metric, adam)
            if stale >= config.patience:
                stopped = True
                logger.info("Ранняя остановка на эпохе %d после %d оценок без улучшения", epoch, stale)
                break

        if evaluations == 0:
            best_params, best_epoch = self.method.params.copy(), config.epochs
        logger.info("Обучение %s завершено: лучшая эпоха %d, метрика %.4f",
                    self.method.name, best_epoch, best_metric)
        return TrainingResult(self.method, best_params, best_epoch, float(best_metric), log, adam, stopped)

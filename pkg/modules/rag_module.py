"""
Модуль симуляции поиска доказательств (RAG) при разном качестве межсистемного выравнивания
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

from models.dataset import DatasetBundle, Split
from models.knowledge_graph import Direction
from models.reports import AlignmentSetting, Question, RagTrace
from modules.eval_module import rank_query
from modules.graph_module import TYPE_CONSTRAINED
from modules.random_module import make_rng

logger = logging.getLogger(__name__)

DEFAULT_PER_CATEGORY = 50
DEFAULT_FIRST_HOP = 10
DEFAULT_DROP_RATIOS = (0.0, 0.2, 0.4, 0.6, 0.8)
DEFAULT_TRIALS = 5

Rankings = Dict[Tuple[Direction, int], List[int]]


def category_name(direction: Direction, hops: int, type_tag: str) -> str:
    return f"{direction.key}/{hops}hop/{type_tag}"


def two_hop_gold(bundle: DatasetBundle, direction: Direction, counterparts: Iterable[int]) -> Set[int]:
    """Внутриграфовые соседи соответствий в целевом графе"""
    target = bundle.graph(direction.target)
    gold: Set[int] = set()
    for u in counterparts:
        gold |= target.neighbors(u)
    return gold


def generate_questions(bundle: DatasetBundle, per_category: int = DEFAULT_PER_CATEGORY, seed: int = 0,
                       pairs: Optional[Set[Tuple[int, int]]] = None) -> List[Question]:
    """
    Генерирует вопросы по категориям направление x число шагов x тип сущности-источника

    Args:
        bundle: Набор данных
        per_category: Желаемое число вопросов в категории
        seed: Зерно (поток "questions")
        pairs: Если задано, источниками служат только сущности хотя бы с одной парой из этого набора

    Returns:
        Вопросы с последовательными id; при нехватке структуры число уменьшается с предупреждением
    """
    rng = make_rng(seed, "questions")
    eligible: Dict[str, List[Tuple[int, Direction, int, Set[int]]]] = {}
    for direction in Direction:
        source = bundle.graph(direction.source)
        for entity_id in bundle.anchors.sources(direction):
            pool = bundle.anchors.pool(entity_id, direction)
            if pairs is not None and not any(
                    bundle.anchors.oriented((entity_id, u), direction) in pairs for u in pool):
                continue
            type_tag = source.entity(entity_id).type_tag
            eligible.setdefault(category_name(direction, 1, type_tag), []).append(
                (entity_id, direction, 1, set(pool)))
            gold = two_hop_gold(bundle, direction, pool)
            if gold:
                eligible.setdefault(category_name(direction, 2, type_tag), []).append(
                    (entity_id, direction, 2, gold))

    questions: List[Question] = []
    for category in sorted(eligible):
        candidates = eligible[category]
        count = min(per_category, len(candidates))
        if count < per_category:
            logger.warning("Категория %s: доступно %d вопросов из %d", category, count, per_category)
        for index in sorted(rng.choice(len(candidates), size=count, replace=False)):
            entity_id, direction, hops, gold = candidates[index]
            questions.append(Question(len(questions), category, entity_id, direction, hops, gold))
    return questions


def entity_rankings(bundle: DatasetBundle, scorer, mode: str = TYPE_CONSTRAINED, threads: int = 1) -> Rankings:
    """
    Ранжированные кандидаты для каждой сущности-источника с соответствиями

    Для сущности с несколькими описаниями используется описание с наименьшим id
    """
    first: Dict[Tuple[Direction, int], object] = {}
    for query in sorted(bundle.queries, key=lambda q: q.instance_id):
        first.setdefault((query.direction, query.entity_id), query)
    keys = sorted(first, key=lambda key: (int(key[0]), key[1]))

    def run(key):
        return rank_query(scorer, bundle, first[key], mode, Split.TEST).candidate_ids.tolist()

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            lists = list(pool.map(run, keys))
    else:
        lists = [run(key) for key in keys]
    return dict(zip(keys, lists))


class EvidenceSimulator:
    """Двухшаговый обход: межсистемный шаг по выравниванию, затем соседи в целевом графе"""

    def __init__(self, bundle: DatasetBundle, rankings: Optional[Rankings] = None,
                 k: int = DEFAULT_FIRST_HOP, seed: int = 0):
        """
        Args:
            bundle: Набор данных (глобальные соответствия и графы)
            rankings: Предсказанные списки кандидатов по (направление, сущность)
            k: Предел длины межсистемного списка
            seed: Зерно для случайного удаления кандидатов
        """
        self.bundle = bundle
        self.rankings = rankings or {}
        self.k = k
        self.seed = seed

    def first_hop(self, question: Question, setting: AlignmentSetting) -> List[int]:
        """Межсистемные кандидаты, прошедшие первый шаг в заданном режиме"""
        if setting.kind == "noalign":
            return []
        if setting.kind == "oracle":
            return sorted(self.bundle.anchors.pool(question.source_id, question.direction))[:self.k]
        ranked = self.rankings.get((question.direction, question.source_id), [])[:self.k]
        if setting.kind == "topx":
            return ranked[:setting.value]
        if setting.kind == "dropx":
            drop = int(np.floor(setting.value * len(ranked) + 1e-9))
            if drop:
                # Удаляемые позиции - префикс одной перестановки: при росте доли удалённое множество растёт
                rng = make_rng(self.seed, "dropx", question.question_id, setting.trial)
                removed = set(rng.permutation(len(ranked))[:drop].tolist())
                ranked = [u for i, u in enumerate(ranked) if i not in removed]
        return ranked

    def retrieve(self, question: Question, setting: AlignmentSetting) -> RagTrace:
        hop = self.first_hop(question, setting)
        evidence = [(u, 1) for u in hop]
        if question.hops == 2:
            second = two_hop_gold(self.bundle, question.direction, hop)
            evidence += [(u, 2) for u in sorted(second - set(hop))]
        retrieved = {u for u, _ in evidence}
        gold = set(question.gold_ids)
        pool = self.bundle.anchors.pool(question.source_id, question.direction)
        recall = len(gold & retrieved) / len(gold) if gold else 0.0
        return RagTrace(question, setting, hop, evidence, bool(pool.intersection(hop)), recall)

    def run(self, questions: Sequence[Question], settings: Sequence[AlignmentSetting]) -> List[RagTrace]:
        return [self.retrieve(q, setting) for setting in settings for q in questions]


def rag_metrics(traces: Sequence[RagTrace]) -> List[dict]:
    """
    Доказательный recall@K и доля межсистемных попаданий по режиму и категории, плюс макро-строка режима

    Повторные испытания одного режима (DropX) усредняются вместе
    """
    grouped: Dict[str, Dict[str, List[RagTrace]]] = {}
    for trace in traces:
        grouped.setdefault(trace.setting.name, {}).setdefault(trace.question.category, []).append(trace)

    records = []
    for setting, categories in grouped.items():
        rows = []
        for category in sorted(categories):
            items = categories[category]
            rows.append({"setting": setting, "category": category, "count": len(items),
                         "evidence_recall": float(np.mean([t.evidence_recall for t in items])),
                         "cross_system_hit_rate": float(np.mean([t.cross_system_hit for t in items]))})
        records += rows
        records.append({"setting": setting, "category": "macro", "count": sum(r["count"] for r in rows),
                        "evidence_recall": float(np.mean([r["evidence_recall"] for r in rows])),
                        "cross_system_hit_rate": float(np.mean([r["cross_system_hit_rate"] for r in rows]))})
    return records


def expand_trials(settings: Sequence[AlignmentSetting], trials: int = DEFAULT_TRIALS) -> List[AlignmentSetting]:
    """Повторяет режимы DropX для нескольких зёрен удаления"""
    expanded = []
    for setting in settings:
        if setting.kind == "dropx":
            expanded += [setting.with_trial(t) for t in range(trials)]
        else:
            expanded.append(setting)
    return expanded


def sweep_settings(simulator: EvidenceSimulator, questions: Sequence[Question],
                   x_values: Sequence[int] = tuple(range(1, 11)),
                   drop_ratios: Sequence[float] = DEFAULT_DROP_RATIOS,
                   trials: int = DEFAULT_TRIALS) -> List[dict]:
    """
    Сравнительный перебор: Oracle, Predicted, NoAlign, TopX для каждого x, DropX для каждой доли

    Returns:
        Макро-строка на каждый режим
    """
    settings = [AlignmentSetting("oracle"), AlignmentSetting("predicted"), AlignmentSetting("noalign")]
    settings += [AlignmentSetting("topx", x) for x in x_values]
    settings += [AlignmentSetting("dropx", r) for r in drop_ratios]
    traces = simulator.run(questions, expand_trials(settings, trials))
    return [r for r in rag_metrics(traces) if r["category"] == "macro"]

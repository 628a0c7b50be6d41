"""
Модели результатов: ранжированные предсказания, отчёты метрик, вопросы и трассы RAG, манифест запуска
"""
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from models.errors import InvalidArgumentError
from models.knowledge_graph import Direction

STRATA = ("overall", "tcm2wm", "wm2tcm", "gt1", "gt>1", "ctx")
STRATUM_TITLES = {
    "overall": "Overall",
    "tcm2wm": "TCM→WM",
    "wm2tcm": "WM→TCM",
    "gt1": "GT=1",
    "gt>1": "GT>1",
    "ctx": "Context-split",
}


class RankedPrediction:
    """Упорядоченный список кандидатов одного запроса с оценками и истинными ответами"""

    def __init__(self, instance_id: int, entity_id: int, direction: Direction, candidate_ids: np.ndarray,
                 scores: np.ndarray, ground_truth: Iterable[int], scoped: bool = False, mode: str = "full"):
        """
        Args:
            instance_id: Ключ запроса
            entity_id: Сущность-источник
            direction: Направление выравнивания
            candidate_ids: Кандидаты по убыванию оценки (ничьи - по возрастанию id)
            scores: Оценки кандидатов в том же порядке
            ground_truth: Множество верных целей запроса в оцениваемой части
            scoped: Запрос относится к описанию с собственным подмножеством целей
            mode: Режим поиска ("full" или "type")
        """
        self.instance_id = int(instance_id)
        self.entity_id = int(entity_id)
        self.direction = Direction(direction)
        self.candidate_ids = np.asarray(candidate_ids, dtype=np.int64)
        self.scores = np.asarray(scores, dtype=np.float64)
        self.ground_truth: FrozenSet[int] = frozenset(int(g) for g in ground_truth)
        self.scoped = scoped
        self.mode = mode

    def __len__(self) -> int:
        return len(self.candidate_ids)

    def top(self, k: int) -> List[int]:
        return self.candidate_ids[:k].tolist()

    def gt_ranks(self) -> List[int]:
        """Ранги (с 1) всех истинных целей, присутствующих среди кандидатов"""
        mask = np.isin(self.candidate_ids, list(self.ground_truth))
        return (np.nonzero(mask)[0] + 1).tolist()

    def best_rank(self) -> Optional[int]:
        ranks = self.gt_ranks()
        return ranks[0] if ranks else None

    def covers_ground_truth(self) -> bool:
        return len(self.gt_ranks()) == len(self.ground_truth)

    def to_dict(self, limit: Optional[int] = None) -> dict:
        end = len(self.candidate_ids) if limit is None else limit
        return {
            "instance_id": self.instance_id,
            "entity_id": self.entity_id,
            "direction": int(self.direction),
            "mode": self.mode,
            "candidates": self.candidate_ids[:end].tolist(),
            "scores": [float(s) for s in self.scores[:end]],
            "ground_truth": sorted(self.ground_truth),
        }


class MetricReport:
    """Метрики Hit@K / Recall@K / MRR по стратам и режимам поиска"""

    def __init__(self, k_list: Sequence[int], headline_recall: int = 10):
        self.k_list = tuple(sorted(set(int(k) for k in k_list)))
        # K для столбца Recall@K в таблице: 100 для задач с травами, иначе 10
        self.headline_recall = int(headline_recall)
        # (mode, stratum) -> {metric: value}
        self.values: Dict[Tuple[str, str], Dict[str, float]] = {}
        self.counts: Dict[Tuple[str, str], int] = {}

    def set(self, mode: str, stratum: str, metrics: Dict[str, float], count: int) -> None:
        if stratum not in STRATUM_TITLES:
            raise InvalidArgumentError(f"Неизвестная страта '{stratum}'", stratum=stratum)
        self.values[(mode, stratum)] = dict(metrics)
        self.counts[(mode, stratum)] = int(count)

    def value(self, mode: str, stratum: str, metric: str) -> float:
        return self.values[(mode, stratum)][metric]

    def count(self, mode: str, stratum: str) -> int:
        return self.counts.get((mode, stratum), 0)

    def modes(self) -> List[str]:
        return sorted({mode for mode, _ in self.values}, key=lambda m: ("full", "type").index(m))

    def strata(self) -> List[str]:
        present = {stratum for _, stratum in self.values}
        return [s for s in STRATA if s in present]

    def to_records(self) -> List[dict]:
        """Строки для построчного структурированного файла"""
        records = []
        for mode in self.modes():
            for stratum in self.strata():
                if (mode, stratum) not in self.values:
                    continue
                record = {"mode": mode, "stratum": stratum, "count": self.counts[(mode, stratum)]}
                record.update(self.values[(mode, stratum)])
                records.append(record)
        return records

    @classmethod
    def from_records(cls, records: Iterable[dict], headline_recall: int = 10) -> "MetricReport":
        records = list(records)
        ks = {int(key.split("@")[1]) for r in records for key in r if key.startswith("hit@")}
        report = cls(ks, headline_recall)
        for record in records:
            metrics = {k: v for k, v in record.items() if k not in ("mode", "stratum", "count")}
            report.set(record["mode"], record["stratum"], metrics, record["count"])
        return report

    def to_table(self, recall_k: Optional[int] = None) -> str:
        """Таблица через табуляцию в раскладке Hit@1 / Hit@10 / Recall@K / MRR по режимам"""
        recall_k = recall_k or self.headline_recall
        columns = ["hit@1", "hit@10", f"recall@{recall_k}", "mrr"]
        header = ["stratum", "n"]
        for mode in self.modes():
            header += [f"{mode}:{c}" for c in columns]
        lines = ["\t".join(header)]
        for stratum in self.strata():
            row = [STRATUM_TITLES[stratum], str(max(self.count(m, stratum) for m in self.modes()))]
            for mode in self.modes():
                metrics = self.values.get((mode, stratum), {})
                row += [f"{metrics[c]:.4f}" if c in metrics else "-" for c in columns]
            lines.append("\t".join(row))
        return "\n".join(lines) + "\n"


class Question:
    """Вопрос для симуляции поиска доказательств"""

    def __init__(self, question_id: int, category: str, source_id: int, direction: Direction,
                 hops: int, gold_ids: Iterable[int]):
        self.question_id = int(question_id)
        self.category = category
        self.source_id = int(source_id)
        self.direction = Direction(direction)
        self.hops = int(hops)
        self.gold_ids: Tuple[int, ...] = tuple(sorted(int(g) for g in gold_ids))

    def to_dict(self) -> dict:
        return {"id": self.question_id, "category": self.category, "source_id": self.source_id,
                "direction": int(self.direction), "hops": self.hops, "gold_ids": list(self.gold_ids)}

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Question) and self.to_dict() == other.to_dict()


class AlignmentSetting:
    """Режим межсистемного первого шага: oracle, predicted, topx, dropx, noalign"""

    KINDS = ("oracle", "predicted", "topx", "dropx", "noalign")

    def __init__(self, kind: str, value: Optional[float] = None, trial: int = 0):
        if kind not in self.KINDS:
            raise InvalidArgumentError(f"Неизвестный режим выравнивания '{kind}'", setting=kind)
        if kind == "topx" and (value is None or int(value) < 1):
            raise InvalidArgumentError("topx требует x >= 1", setting=kind)
        if kind == "dropx" and (value is None or not 0.0 <= float(value) <= 1.0):
            raise InvalidArgumentError("dropx требует долю в [0, 1]", setting=kind)
        self.kind = kind
        self.value = None if value is None else (int(value) if kind == "topx" else float(value))
        self.trial = int(trial)

    @property
    def name(self) -> str:
        return self.kind if self.value is None else f"{self.kind}={self.value:g}"

    @classmethod
    def parse(cls, text: str) -> "AlignmentSetting":
        """Разбирает строку вида 'oracle', 'topx=3', 'dropx=0.5'"""
        text = text.strip().lower()
        if "=" in text:
            kind, raw = text.split("=", 1)
            try:
                return cls(kind.strip(), float(raw))
            except ValueError:
                raise InvalidArgumentError(f"Некорректное значение в режиме '{text}'", setting=text)
        return cls(text)

    def with_trial(self, trial: int) -> "AlignmentSetting":
        return AlignmentSetting(self.kind, self.value, trial)

    def __repr__(self) -> str:
        return f"AlignmentSetting({self.name}, trial={self.trial})"


class RagTrace:
    """Запись извлечённых доказательств одного вопроса при одном режиме выравнивания"""

    def __init__(self, question: Question, setting: AlignmentSetting, first_hop: Sequence[int],
                 evidence: Sequence[Tuple[int, int]], cross_system_hit: bool, evidence_recall: float):
        """
        Args:
            question: Вопрос
            setting: Режим выравнивания
            first_hop: Межсистемные кандидаты, прошедшие первый шаг
            evidence: Итоговые доказательства как пары (id, номер шага)
            cross_system_hit: Первый шаг достиг хотя бы одного верного соответствия
            evidence_recall: Доля золотых доказательств среди извлечённых
        """
        self.question = question
        self.setting = setting
        self.first_hop = tuple(int(i) for i in first_hop)
        self.evidence = tuple((int(i), int(h)) for i, h in evidence)
        self.cross_system_hit = bool(cross_system_hit)
        self.evidence_recall = float(evidence_recall)

    def to_dict(self) -> dict:
        return {"question_id": self.question.question_id, "category": self.question.category,
                "setting": self.setting.name, "trial": self.setting.trial,
                "first_hop": list(self.first_hop), "evidence": [list(e) for e in self.evidence],
                "cross_system_hit": int(self.cross_system_hit), "evidence_recall": self.evidence_recall}


class RunManifest:
    """Описание запуска команды: конфигурация, зерно, дайджесты входов, пути артефактов"""

    def __init__(self, command: str, config: dict, seed: int, input_digests: Dict[str, str],
                 outputs: List[str], version: str):
        self.command = command
        self.config = config
        self.seed = int(seed)
        self.input_digests = dict(sorted(input_digests.items()))
        self.outputs = sorted(outputs)
        self.version = version

    def to_dict(self) -> dict:
        return {"command": self.command, "config": self.config, "seed": self.seed,
                "input_digests": self.input_digests, "outputs": self.outputs, "version": self.version}


class GradientCheckReport:
    """Сравнение аналитических градиентов с центральными конечными разностями"""

    def __init__(self, step_size: float, tolerance: float):
        self.step_size = step_size
        self.tolerance = tolerance
        self.max_errors: Dict[str, float] = {}
        # (тензор, индекс, аналитическое значение, численное значение, относительная ошибка)
        self.offending: List[Tuple[str, Tuple[int, ...], float, float, float]] = []

    @property
    def passed(self) -> bool:
        return not self.offending

    def flagged(self) -> List[str]:
        """Имена тензоров с превышением допуска в порядке параметров"""
        names = {name for name, *_ in self.offending}
        return [name for name in self.max_errors if name in names]

    def to_dict(self) -> dict:
        return {"step_size": self.step_size, "tolerance": self.tolerance, "passed": self.passed,
                "max_errors": self.max_errors,
                "offending": [{"tensor": n, "index": list(i), "analytic": a, "numeric": x, "error": e}
                              for n, i, a, x, e in self.offending]}

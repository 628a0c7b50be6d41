"""
Конфигурации обучения и синтетического генератора, а также пресеты экспериментов
"""
import copy
from dataclasses import asdict, dataclass, fields
from typing import Any, Dict, Tuple

from models.errors import ConfigConflictError, InvalidArgumentError, SpecError

RETRIEVAL_MODES = ("full", "type")


@dataclass
class TrainConfig:
    """Гиперпараметры обучения"""

    epochs: int = 300
    batch_size: int = 64
    negatives: int = 1024
    positives: int = 4
    temperature: float = 0.1
    lambda_dir: float = 0.5
    lambda_reg: float = 1e-5
    lr: float = 1e-3
    clip_norm: float = 1.0
    patience: int = 30
    eval_every: int = 1
    decay_patience: int = 10
    decay_factor: float = 0.5
    min_lr: float = 1e-5
    eval_mode: str = "type"
    eval_k: int = 10
    seed: int = 0

    def validate(self) -> None:
        if not 0.0 < self.lambda_dir < 1.0:
            raise ConfigConflictError(f"lambda_dir={self.lambda_dir} вне интервала (0, 1)", field="lambda_dir")
        if self.temperature <= 0:
            raise InvalidArgumentError("Температура должна быть положительной", field="temperature")
        if self.negatives < 1 or self.positives < 1:
            raise InvalidArgumentError("Число негативов и позитивов должно быть не меньше 1", field="negatives")
        if self.batch_size < 1 or self.epochs < 0 or self.eval_every < 1 or self.patience < 1:
            raise InvalidArgumentError("Некорректные параметры цикла обучения", field="epochs")
        if self.lambda_reg < 0 or self.lr <= 0:
            raise InvalidArgumentError("lambda_reg >= 0 и lr > 0", field="lr")
        if self.eval_mode not in RETRIEVAL_MODES:
            raise ConfigConflictError(f"Неизвестный режим оценки '{self.eval_mode}'", field="eval_mode")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        return cls(**data)


@dataclass
class SyntheticSpec:
    """Описание синтетического набора данных с заложенным выравниванием"""

    n_tcm: int = 200
    n_wm: int = 200
    families: Tuple[Tuple[str, str], ...] = (("symptom", "symptom"), ("herb", "molecule"))
    n_clusters: int = 120
    many_to_many: float = 0.2
    context_split: int = 0
    descriptions_per_split: int = 2
    paraphrases: int = 1
    noise: float = 0.05
    latent_dim: int = 32
    query_dim: int = 48
    tcm_dim: int = 40
    wm_dim: int = 56
    edge_degree: int = 4
    view: str = "orthogonal"

    def validate(self) -> None:
        if self.n_tcm < 1 or self.n_wm < 1:
            raise SpecError("Число сущностей на каждой стороне должно быть положительным")
        if not self.families:
            raise SpecError("Нужно хотя бы одно семейство типов")
        if not 0.0 <= self.many_to_many <= 1.0:
            raise SpecError(f"Доля многие-ко-многим {self.many_to_many} вне [0, 1]")
        if self.noise < 0:
            raise SpecError("Уровень шума не может быть отрицательным")
        if self.n_clusters < 0 or self.context_split < 0:
            raise SpecError("Число кластеров соответствий не может быть отрицательным")
        if self.context_split and self.descriptions_per_split < 2:
            raise SpecError("Сущности с разделённым контекстом требуют не менее 2 описаний")
        if self.paraphrases < 1 or self.latent_dim < 1 or self.edge_degree < 0:
            raise SpecError("Некорректные размеры синтетического набора")
        if self.view not in ("orthogonal", "identity"):
            raise SpecError(f"Неизвестный способ проекции '{self.view}'")
        if min(self.query_dim, self.tcm_dim, self.wm_dim) < self.latent_dim:
            raise SpecError("Размерности эмбеддингов должны быть не меньше латентной")

    def to_dict(self) -> dict:
        data = asdict(self)
        data["families"] = [list(f) for f in self.families]
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "SyntheticSpec":
        data = dict(data)
        if "families" in data:
            data["families"] = tuple(tuple(f) for f in data["families"])
        return cls(**data)


PRESETS: Dict[str, Dict[str, Dict[str, Any]]] = {
    "tiny": {
        "synthetic": {"n_tcm": 24, "n_wm": 24, "n_clusters": 12, "many_to_many": 0.2, "noise": 0.0,
                      "latent_dim": 8, "query_dim": 8, "tcm_dim": 8, "wm_dim": 8, "edge_degree": 2},
        "model": {"dim": 16, "ranks": (4, 8, 8)},
        "train": {"epochs": 80, "batch_size": 16, "negatives": 64, "patience": 20, "lr": 1e-2},
    },
    "small": {
        "synthetic": {"n_tcm": 200, "n_wm": 200, "n_clusters": 120, "many_to_many": 0.2, "noise": 0.05},
        "model": {"dim": 64, "ranks": (8, 32, 32)},
        "train": {"epochs": 300, "patience": 40, "lr": 3e-3},
    },
    "context": {
        "synthetic": {"n_tcm": 200, "n_wm": 240, "n_clusters": 120, "many_to_many": 0.2, "noise": 0.05,
                      "context_split": 40, "descriptions_per_split": 2},
        "model": {"dim": 64, "ranks": (8, 32, 32)},
        "train": {"epochs": 300, "patience": 40, "lr": 3e-3},
    },
    "full-scale-synthetic": {
        "synthetic": {"n_tcm": 1048, "n_wm": 3568, "n_clusters": 700, "many_to_many": 0.4, "noise": 0.1,
                      "latent_dim": 128, "query_dim": 768, "tcm_dim": 768, "wm_dim": 768, "edge_degree": 6},
        "model": {"dim": 256, "ranks": (16, 128, 128)},
        "train": {"epochs": 300, "negatives": 1024, "lambda_dir": 0.3},
    },
}


def _merge(cls, section: str, preset: str, overrides: Dict[str, Any]):
    known = {f.name for f in fields(cls)}
    values = copy.deepcopy(PRESETS[preset][section]) if preset else {}
    values.update({k: v for k, v in overrides.items() if v is not None})
    unknown = set(values) - known
    if unknown:
        raise ConfigConflictError(f"Неизвестные поля {sorted(unknown)} в разделе {section}")
    return cls(**values)


def resolve_preset(preset: str, synthetic: Dict[str, Any] = None, model: Dict[str, Any] = None,
                   train: Dict[str, Any] = None) -> Tuple[SyntheticSpec, Dict[str, Any], TrainConfig]:
    """
    Объединяет пресет с явными переопределениями (переопределения важнее)

    Returns:
        Кортеж (SyntheticSpec, значения ModelConfig без размерностей данных, TrainConfig)
    """
    if preset and preset not in PRESETS:
        raise ConfigConflictError(f"Неизвестный пресет '{preset}'", field="preset")
    spec = _merge(SyntheticSpec, "synthetic", preset, synthetic or {})
    train_config = _merge(TrainConfig, "train", preset, train or {})
    model_values = copy.deepcopy(PRESETS[preset]["model"]) if preset else {}
    model_values.update({k: v for k, v in (model or {}).items() if v is not None})
    return spec, model_values, train_config

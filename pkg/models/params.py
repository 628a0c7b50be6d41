"""
Параметры модели QCEA, градиенты и состояние оптимизатора
"""
from dataclasses import asdict, dataclass
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np
from scipy.special import expit

from models.errors import ConfigConflictError, InvalidArgumentError

# Варианты модели: полная (B) и абляции A, C, D, E
VARIANTS = ("full", "no_query", "no_graph", "linear", "no_residual")
ACTIVATIONS = ("relu", "identity")


@dataclass
class ModelConfig:
    """Размерности и ранги модели"""

    dim: int = 256
    query_dim: int = 768
    tcm_dim: int = 768
    wm_dim: int = 768
    gcn_layers: int = 2
    ranks: Tuple[int, int, int] = (16, 128, 128)
    activation: str = "relu"
    variant: str = "full"

    def validate(self) -> None:
        for name in ("dim", "query_dim", "tcm_dim", "wm_dim"):
            if getattr(self, name) <= 0:
                raise InvalidArgumentError(f"{name} должен быть положительным", field=name)
        if self.gcn_layers < 0:
            raise InvalidArgumentError("Число слоёв GCN не может быть отрицательным", field="gcn_layers")
        if len(self.ranks) != 3 or min(self.ranks) <= 0:
            raise InvalidArgumentError(f"Некорректные ранги {self.ranks}", field="ranks")
        if self.activation not in ACTIVATIONS:
            raise InvalidArgumentError(f"Неизвестная активация '{self.activation}'", field="activation")
        if self.variant not in VARIANTS:
            raise ConfigConflictError(f"Неизвестный вариант модели '{self.variant}'", field="variant")

    @property
    def uses_graph(self) -> bool:
        return self.variant != "no_graph" and self.gcn_layers > 0

    def to_dict(self) -> dict:
        data = asdict(self)
        data["ranks"] = list(self.ranks)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        data = dict(data)
        if "ranks" in data:
            data["ranks"] = tuple(int(r) for r in data["ranks"])
        return cls(**data)

    def parameter_shapes(self) -> Dict[str, Tuple[int, ...]]:
        """Формы всех обучаемых тензоров в фиксированном порядке"""
        d = self.dim
        rank_s, rank_o, rank_i = self.ranks
        return {
            "W_q": (d, self.query_dim),
            "P": (2, d, d),
            "W_tcm": (d, self.tcm_dim),
            "W_wm": (d, self.wm_dim),
            "theta": (self.gcn_layers, d, d),
            "U_s": (2, rank_s),
            "U_o": (d, rank_o),
            "U_i": (d, rank_i),
            "cores": (rank_s, rank_o, rank_i),
            "R": (d, d),
            "alpha": (1,),
        }


class ParamTensors:
    """Упорядоченный набор именованных тензоров float64"""

    def __init__(self, tensors: Dict[str, np.ndarray]):
        self.tensors: Dict[str, np.ndarray] = {name: np.asarray(value, dtype=np.float64)
                                               for name, value in tensors.items()}

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def __setitem__(self, name: str, value: np.ndarray) -> None:
        self.tensors[name] = np.asarray(value, dtype=np.float64)

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def __len__(self) -> int:
        return len(self.tensors)

    def names(self) -> List[str]:
        return list(self.tensors)

    def items(self):
        return self.tensors.items()

    def size(self) -> int:
        """Общее число скалярных параметров"""
        return int(sum(t.size for t in self.tensors.values()))

    def copy(self):
        clone = object.__new__(type(self))
        clone.__dict__.update(self.__dict__)
        clone.tensors = {name: t.copy() for name, t in self.tensors.items()}
        return clone

    def zeros_like(self) -> "ParamTensors":
        return ParamTensors({name: np.zeros_like(t) for name, t in self.tensors.items()})

    def global_norm(self) -> float:
        return float(np.sqrt(sum(float(np.sum(t * t)) for t in self.tensors.values())))

    def non_finite(self) -> Optional[str]:
        """Имя первого тензора с нечисловыми элементами или None"""
        for name, tensor in self.tensors.items():
            if not np.all(np.isfinite(tensor)):
                return name
        return None

    def __eq__(self, other: object) -> bool:
        return (isinstance(other, ParamTensors) and self.names() == other.names()
                and all(np.array_equal(self[n], other[n]) for n in self.names()))


class ModelParams(ParamTensors):
    """Все обучаемые тензоры QCEA вместе с конфигурацией форм"""

    def __init__(self, config: ModelConfig, tensors: Dict[str, np.ndarray]):
        super().__init__(tensors)
        self.config = config
        expected = config.parameter_shapes()
        if list(expected) != list(self.tensors):
            raise ConfigConflictError(f"Набор тензоров {list(self.tensors)} не соответствует модели")
        for name, shape in expected.items():
            if self.tensors[name].shape != shape:
                raise ConfigConflictError(
                    f"Тензор {name} формы {self.tensors[name].shape}, ожидалась {shape}", field=name)

    @property
    def gate(self) -> float:
        """σ(α) - вес остаточной ветви"""
        return float(expit(self.tensors["alpha"][0]))


class GradientSet(ParamTensors):
    """Градиенты по каждому тензору параметров, формы совпадают с параметрами"""


@dataclass
class AdamState:
    """Моменты Adam, счётчик шагов и гиперпараметры"""

    first_moment: ParamTensors
    second_moment: ParamTensors
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0

    @classmethod
    def for_params(cls, params: ParamTensors, lr: float = 1e-3, beta1: float = 0.9,
                   beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return cls(params.zeros_like(), params.zeros_like(), lr, beta1, beta2, eps, 0)

    def hyperparameters(self) -> dict:
        return {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps, "step": self.step}

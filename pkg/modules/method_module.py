"""
Модуль методов выравнивания: создание, обучение и восстановление QCEA и базовых методов
"""
import logging
from typing import Any, Dict, Optional, Tuple

from models.configs import TrainConfig
from models.dataset import DatasetBundle
from models.errors import ConfigConflictError
from models.params import ModelConfig, ModelParams
from modules.baseline_module import BiEncoder, MlpMatcher, ProcrustesModel
from modules.calc_module import AlignmentInputs, check_dimensions, init_params, model_config_for
from modules.storage_module import Checkpoint
from modules.train_module import QceaMethod, Trainer, TrainingResult

logger = logging.getLogger(__name__)

METHODS = ("qcea", "procrustes", "mlp", "biencoder")


def build_method(name: str, bundle: DatasetBundle, model_values: Dict[str, Any], seed: int = 0,
                 source_inputs: str = "query"):
    """
    Создаёт необученный метод

    Args:
        name: qcea, mlp или biencoder
        bundle: Набор данных (размерности входов)
        model_values: Значения ModelConfig (для базовых методов используется только dim)
        seed: Зерно инициализации
        source_inputs: Входы источника базовых методов: "query" или "entity"
    """
    if name == "qcea":
        config = model_config_for(bundle, **model_values)
        return QceaMethod(init_params(config, seed), AlignmentInputs(bundle))
    dim = int(model_values.get("dim") or ModelConfig.dim)
    if name == "mlp":
        return MlpMatcher.create(bundle, dim, source_inputs, seed)
    if name == "biencoder":
        return BiEncoder.create(bundle, dim, source_inputs, seed)
    raise ConfigConflictError(f"Метод '{name}' не обучается градиентным спуском", method=name)


def fit_method(name: str, bundle: DatasetBundle, model_values: Dict[str, Any], train_config: TrainConfig,
               source_inputs: str = "query", diagnostic_dir: Optional[str] = None,
               progress: bool = False) -> Tuple[object, Optional[TrainingResult], Checkpoint]:
    """
    Обучает метод и возвращает (scorer лучших параметров, результат обучения или None, контрольную точку)
    """
    if name not in METHODS:
        raise ConfigConflictError(f"Неизвестный метод '{name}'", method=name)
    if name == "procrustes":
        model = ProcrustesModel.fit(bundle)
        return model, None, Checkpoint(model.name, model.config_dict(), model.params, None, {})
    method = build_method(name, bundle, model_values, train_config.seed, source_inputs)
    result = Trainer(bundle, method, train_config, diagnostic_dir=diagnostic_dir, progress=progress).fit()
    return method.scorer(result.best_params), result, result.checkpoint(train_config)


def load_scorer(checkpoint: Checkpoint, bundle: DatasetBundle):
    """Восстанавливает scorer из контрольной точки любого метода"""
    if checkpoint.method == "qcea":
        config = ModelConfig.from_dict(checkpoint.config["model"])
        check_dimensions(config, bundle)
        return QceaMethod(ModelParams(config, checkpoint.params.tensors), AlignmentInputs(bundle)).scorer()
    if checkpoint.method == "procrustes":
        return ProcrustesModel(bundle, checkpoint.params)
    settings = checkpoint.config.get("baseline", {})
    classes = {"mlp": MlpMatcher, "biencoder": BiEncoder}
    if checkpoint.method not in classes:
        raise ConfigConflictError(f"Неизвестный метод контрольной точки '{checkpoint.method}'")
    method = classes[checkpoint.method](bundle, checkpoint.params, settings["dim"], settings["source_inputs"])
    return method.scorer()

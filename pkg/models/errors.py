"""
Иерархия исключений для задачи выравнивания сущностей
"""
from typing import Any, Optional


class QceaError(Exception):
    """Базовое исключение проекта; code - стабильный машинный код ошибки"""

    code = "qcea_error"
    # Код выхода CLI: 1 - ошибка данных/вычислений, 2 - ошибка использования
    exit_status = 1

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details = details
        for key, value in details.items():
            setattr(self, key, value)

    def one_line(self) -> str:
        """Однострочное машинно-разбираемое представление ошибки"""
        text = self.message.replace("\n", " ").replace('"', "'")
        return f'error={self.code} message="{text}"'


class ValidationError(QceaError):
    code = "validation"


class DirectionMismatchError(QceaError):
    code = "direction_mismatch"


class DimensionMismatchError(QceaError):
    code = "dimension_mismatch"


class MissingEmbeddingError(QceaError):
    code = "missing_embedding"


class UnknownIdError(QceaError):
    code = "unknown_id"


class InsufficientDataError(QceaError):
    code = "insufficient_data"


class SpecError(QceaError):
    code = "infeasible_spec"


class DegenerateNormError(QceaError):
    code = "degenerate_norm"


class NumericFailureError(QceaError):
    code = "numeric_failure"

    def __init__(self, message: str, parameter: Optional[str] = None, **details: Any):
        super().__init__(message, parameter=parameter, **details)


class InvalidArgumentError(QceaError):
    code = "invalid_argument"
    exit_status = 2


class SizeLimitError(QceaError):
    code = "size_limit"
    exit_status = 2


class ConfigConflictError(QceaError):
    code = "config_conflict"
    exit_status = 2


class MissingFileError(QceaError):
    code = "missing_file"
    exit_status = 2

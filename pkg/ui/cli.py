"""
Разбор аргументов командной строки и запуск команд
"""
import argparse
import logging
import sys
from typing import List, Optional

from models.errors import InvalidArgumentError, QceaError
from modules.eval_module import DEFAULT_K_LIST
from modules.method_module import METHODS
from modules.rag_module import DEFAULT_FIRST_HOP, DEFAULT_PER_CATEGORY, DEFAULT_TRIALS
from ui.commands import COMMANDS, VERSION

logger = logging.getLogger(__name__)

PLOT_KINDS = ("training", "hit", "recall", "ratio", "topx", "dropx")


class QceaArgumentParser(argparse.ArgumentParser):
    """Парсер, сообщающий об ошибках разбора исключением InvalidArgumentError"""

    def error(self, message: str):
        raise InvalidArgumentError(f"{self.prog}: {message}", prog=self.prog)


def _common(parser: argparse.ArgumentParser, data: bool = True) -> None:
    parser.add_argument("--out", required=True, help="Выходной каталог")
    parser.add_argument("--seed", type=int, default=0, help="Зерно (по умолчанию 0)")
    if data:
        parser.add_argument("--data", help="Каталог набора данных")
    parser.add_argument("--verbose", action="store_true", help="Подробный журнал")
    parser.add_argument("--quiet", action="store_true", help="Только предупреждения и ошибки")


def _method(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--method", choices=METHODS, default=None, help="Метод выравнивания (по умолчанию qcea)")
    parser.add_argument("--source-inputs", choices=("query", "entity"), default="query",
                        help="Входы источника для базовых методов")


def _model(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--preset", default=None, help="Пресет: tiny, small, context, full-scale-synthetic")
    parser.add_argument("--dim", type=int, help="Общая размерность d")
    parser.add_argument("--ranks", help="Ранги Такера r_s,r_o,r_i")
    parser.add_argument("--gcn-layers", type=int, help="Число слоёв GCN")
    parser.add_argument("--variant", choices=("full", "no_query", "no_graph", "linear", "no_residual"))
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--lr", type=float)
    parser.add_argument("--temp", type=float, help="Температура τ")
    parser.add_argument("--lambda-dir", type=float, help="Вес направления ЗМ→ТКМ")
    parser.add_argument("--lambda-reg", type=float, help="Коэффициент L2-регуляризации")
    parser.add_argument("--negatives", type=int, help="Число негативов K")
    parser.add_argument("--positives", type=int, help="Число позитивов P")
    parser.add_argument("--batch-size", type=int)
    parser.add_argument("--patience", type=int)
    parser.add_argument("--eval-mode", choices=("full", "type"), help="Режим валидации при обучении")


def _retrieval(parser: argparse.ArgumentParser, default_mode: str = "both") -> None:
    parser.add_argument("--model", help="Контрольная точка модели")
    parser.add_argument("--mode", choices=("full", "type", "both"), default=default_mode)
    parser.add_argument("--split", choices=("train", "val", "test"), default="test")
    parser.add_argument("--filtered", action="store_true", help="Фильтрованная постановка ранжирования")
    parser.add_argument("--threads", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = QceaArgumentParser(prog="qcea", description="Выравнивание сущностей ТКМ и ЗМ по запросу")
    parser.add_argument("--version", action="version", version=VERSION)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="Сгенерировать синтетический набор данных")
    _common(gen, data=False)
    gen.add_argument("--preset", default="small")
    gen.add_argument("--noise", type=float)
    gen.add_argument("--context-split", type=int)
    gen.add_argument("--text", action="store_true", help="Эмбеддинги в текстовом формате")

    split = sub.add_parser("split", help="Разбить опорные пары на train/val/test")
    _common(split)
    split.add_argument("--ratios", default="0.6,0.2,0.2")

    train = sub.add_parser("train", help="Обучить метод")
    _common(train)
    _method(train)
    _model(train)

    evaluate = sub.add_parser("eval", help="Оценить метод")
    _common(evaluate)
    _method(evaluate)
    _retrieval(evaluate)
    evaluate.add_argument("--k-list", default=",".join(str(k) for k in DEFAULT_K_LIST))

    predict = sub.add_parser("predict", help="Ранжированные кандидаты для каждого запроса")
    _common(predict)
    _method(predict)
    _retrieval(predict, default_mode="type")
    predict.add_argument("--top", type=int, default=10)

    rag = sub.add_parser("simulate-rag", help="Симуляция поиска доказательств")
    _common(rag)
    _method(rag)
    rag.add_argument("--model")
    rag.add_argument("--settings", default="oracle,predicted,noalign")
    rag.add_argument("--per-category", type=int, default=DEFAULT_PER_CATEGORY)
    rag.add_argument("--k", type=int, default=DEFAULT_FIRST_HOP)
    rag.add_argument("--trials", type=int, default=DEFAULT_TRIALS)
    rag.add_argument("--test-sources", action="store_true", help="Источники вопросов только из тестовых пар")
    rag.add_argument("--sweep", action="store_true", help="Полный перебор TopX и DropX")
    rag.add_argument("--threads", type=int, default=1)

    sweep = sub.add_parser("sweep-ratio", help="Перебор доли обучающих опорных пар")
    _common(sweep)
    _method(sweep)
    _model(sweep)
    sweep.add_argument("--ratios", default="0.1,0.2,0.4,0.6,0.8,1.0")
    sweep.add_argument("--mode", choices=("full", "type", "both"), default="both")
    sweep.add_argument("--k-list", default=",".join(str(k) for k in DEFAULT_K_LIST))
    sweep.add_argument("--threads", type=int, default=1)

    grad = sub.add_parser("gradcheck", help="Проверка градиентов конечными разностями")
    _common(grad, data=False)
    grad.add_argument("--seeds", type=int, default=5, help="Число проверяемых зёрен")
    grad.add_argument("--step", type=float, default=1e-5)
    grad.add_argument("--tolerance", type=float, default=1e-4)

    plot = sub.add_parser("plot", help="Построить график по результатам")
    _common(plot, data=False)
    plot.add_argument("--input", help="Файл .jsonl с результатами")
    plot.add_argument("--kind", choices=PLOT_KINDS, required=True)
    plot.add_argument("--mode", choices=("full", "type", "both"), default="type")
    return parser


def configure_logging(verbose: bool = False, quiet: bool = False) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def main(argv: Optional[List[str]] = None) -> int:
    """
    Точка входа CLI

    Returns:
        Код выхода: 0 - успех, 1 - ошибка данных или вычислений, 2 - ошибка использования
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except InvalidArgumentError as exc:
        sys.stderr.write(exc.one_line() + "\n")
        return exc.exit_status
    configure_logging(args.verbose, args.quiet)
    if hasattr(args, "method"):
        args.method_set = args.method is not None
        args.method = args.method or "qcea"
    if not hasattr(args, "preset"):
        args.preset = None
    try:
        return COMMANDS[args.command](args)
    except QceaError as exc:
        logger.debug("Ошибка команды %s", args.command, exc_info=True)
        sys.stderr.write(exc.one_line() + "\n")
        return exc.exit_status

"""
Модуль визуализации: кривые обучения, метрики от K, перебор доли опорных пар и режимов RAG
"""
import logging
from typing import Any, Dict, List, Optional, Sequence, Tuple

import matplotlib.pyplot as plt
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from models.reports import STRATUM_TITLES, MetricReport

logger = logging.getLogger(__name__)


class AlignmentVisualizer:
    """Класс для построения графиков экспериментов по выравниванию"""

    def __init__(self, figure: Optional[Figure] = None):
        """
        Инициализирует визуализатор

        Args:
            figure: Фигура matplotlib; по умолчанию создаётся новая с холстом Agg
        """
        self.fig = figure or Figure(figsize=(7, 4.5))
        if self.fig.canvas is None or not isinstance(self.fig.canvas, FigureCanvasAgg):
            FigureCanvasAgg(self.fig)
        self.ax = self.fig.add_subplot(111)
        self.config = {
            'grid': True,
            'colors': plt.cm.tab10.colors,
            'line_width': 1.5,
            'marker': 'o',
            'best_epoch_color': 'red',
            'dpi': 120,
        }

    def update_config(self, config: Dict[str, Any]) -> None:
        """
        Обновляет настройки визуализации

        Args:
            config: Словарь с новыми настройками
        """
        self.config.update(config)

    def clear(self) -> None:
        """Очищает график"""
        self.ax.clear()

    def _finish(self, xlabel: str, ylabel: str, title: str) -> None:
        self.ax.set_xlabel(xlabel)
        self.ax.set_ylabel(ylabel)
        self.ax.set_title(title)
        if self.config['grid']:
            self.ax.grid(True, linestyle='--', alpha=0.6)
        if self.ax.get_legend_handles_labels()[0]:
            self.ax.legend(loc='best', fontsize=8)

    def _color(self, index: int):
        colors = self.config['colors']
        return colors[index % len(colors)]

    def draw_training_curves(self, log: Sequence[dict], best_epoch: Optional[int] = None) -> None:
        """
        Отрисовывает лосс обучения и валидации по эпохам и отмечает выбранную эпоху

        Args:
            log: Записи журнала {epoch, split, loss, hit@10, lr}
            best_epoch: Эпоха лучшей контрольной точки
        """
        self.clear()
        for index, split in enumerate(("train", "val")):
            rows = [r for r in log if r["split"] == split and r["loss"] is not None]
            if rows:
                self.ax.plot([r["epoch"] for r in rows], [r["loss"] for r in rows], color=self._color(index),
                             linewidth=self.config['line_width'], label=f"{split} loss")
        if best_epoch:
            self.ax.axvline(best_epoch, color=self.config['best_epoch_color'], linestyle='--',
                            label=f"лучшая эпоха {best_epoch}")
        self._finish("эпоха", "лосс", "Динамика обучения")

    def draw_k_curves(self, report: MetricReport, mode: str, metric: str = "hit",
                      strata: Optional[Sequence[str]] = None) -> None:
        """
        Отрисовывает Hit@K или Recall@K в зависимости от K (логарифмическая ось)

        Args:
            report: Отчёт с метриками для списка K
            mode: Режим поиска
            metric: "hit" или "recall"
            strata: Страты; по умолчанию все присутствующие
        """
        self.clear()
        ks = list(report.k_list)
        for index, stratum in enumerate(strata or report.strata()):
            if (mode, stratum) not in report.values:
                continue
            values = [report.value(mode, stratum, f"{metric}@{k}") for k in ks]
            self.ax.plot(ks, values, color=self._color(index), marker=self.config['marker'],
                         linewidth=self.config['line_width'], label=STRATUM_TITLES[stratum])
        self.ax.set_xscale('log')
        self.ax.set_ylim(0.0, 1.02)
        self._finish("K", f"{metric.capitalize()}@K", f"{metric.capitalize()}@K ({mode})")

    def draw_ratio_sweep(self, results: Sequence[Tuple[float, MetricReport]], mode: str,
                         metrics: Sequence[str] = ("hit@1", "hit@10", "mrr")) -> None:
        """Отрисовывает метрики в зависимости от доли опорных пар"""
        self.clear()
        ratios = [ratio for ratio, _ in results]
        for index, metric in enumerate(metrics):
            values = [report.value(mode, "overall", metric) for _, report in results]
            self.ax.plot(ratios, values, color=self._color(index), marker=self.config['marker'],
                         linewidth=self.config['line_width'], label=metric)
        self.ax.set_ylim(0.0, 1.02)
        self._finish("доля опорных пар", "значение", f"Влияние доли опорных пар ({mode})")

    def draw_rag_sweep(self, records: Sequence[dict], kind: str,
                       metric: str = "evidence_recall") -> None:
        """
        Отрисовывает макро-метрику RAG для TopX (по x) или DropX (по доле удаления)

        Args:
            records: Макро-строки sweep_settings
            kind: "topx" или "dropx"
            metric: evidence_recall или cross_system_hit_rate
        """
        self.clear()
        points: List[Tuple[float, float]] = []
        for record in records:
            if record["setting"].startswith(f"{kind}="):
                points.append((float(record["setting"].split("=", 1)[1]), record[metric]))
        points.sort()
        self.ax.plot([x for x, _ in points], [y for _, y in points], color=self._color(0),
                     marker=self.config['marker'], linewidth=self.config['line_width'], label=kind)
        for index, reference in enumerate(("oracle", "predicted", "noalign"), start=1):
            for record in records:
                if record["setting"] == reference:
                    self.ax.axhline(record[metric], color=self._color(index), linestyle=':', label=reference)
        self.ax.set_ylim(0.0, 1.02)
        xlabel = "x (первые кандидаты)" if kind == "topx" else "доля удалённых кандидатов"
        self._finish(xlabel, metric, f"RAG: {kind}")

    def save(self, path: str) -> None:
        """Сохраняет текущий график в PNG"""
        self.fig.tight_layout()
        self.fig.savefig(path, dpi=self.config['dpi'])
        logger.info("График сохранён в %s", path)

import pytest

from models.errors import InvalidArgumentError
from models.reports import MetricReport
from modules.visual_module import AlignmentVisualizer


def _report(scale: float = 1.0) -> MetricReport:
    report = MetricReport([1, 10])
    for stratum in ("overall", "ctx"):
        report.set("type", stratum, {"hit@1": 0.2 * scale, "hit@10": 0.6 * scale, "recall@1": 0.1 * scale,
                                     "recall@10": 0.5 * scale, "mrr": 0.3 * scale}, 5)
    return report


@pytest.fixture
def visualizer():
    return AlignmentVisualizer()


def _saved(visualizer, tmp_path, name):
    path = tmp_path / name
    visualizer.save(str(path))
    return path.stat().st_size > 0


def test_training_curves(visualizer, tmp_path):
    log = [{"epoch": e, "split": s, "loss": 1.0 / e, "hit@10": None if s == "train" else 0.1 * e, "lr": 0.01}
           for e in range(1, 4) for s in ("train", "val")]
    visualizer.draw_training_curves(log, best_epoch=3)
    assert len(visualizer.ax.lines) == 3
    assert _saved(visualizer, tmp_path, "training.png")


@pytest.mark.parametrize("metric", ["hit", "recall"])
def test_k_curves(visualizer, tmp_path, metric):
    visualizer.draw_k_curves(_report(), "type", metric)
    assert len(visualizer.ax.lines) == 2
    assert visualizer.ax.get_xscale() == "log"
    assert _saved(visualizer, tmp_path, f"{metric}.png")


def test_ratio_sweep(visualizer, tmp_path):
    visualizer.draw_ratio_sweep([(0.5, _report(0.5)), (1.0, _report())], "type")
    assert list(visualizer.ax.lines[0].get_xdata()) == [0.5, 1.0]
    assert _saved(visualizer, tmp_path, "ratio.png")


def test_rag_sweep(visualizer, tmp_path):
    records = [{"setting": "oracle", "evidence_recall": 1.0}, {"setting": "noalign", "evidence_recall": 0.1},
               {"setting": "topx=2", "evidence_recall": 0.6}, {"setting": "topx=1", "evidence_recall": 0.4}]
    visualizer.draw_rag_sweep(records, "topx")
    assert list(visualizer.ax.lines[0].get_xdata()) == [1.0, 2.0]
    assert _saved(visualizer, tmp_path, "topx.png")


def test_update_config(visualizer):
    visualizer.update_config({"grid": False, "dpi": 60})
    assert visualizer.config["dpi"] == 60


def test_k_curves_follow_requested_strata(visualizer):
    visualizer.draw_k_curves(_report(), "type", "hit", strata=["ctx", "gt1"])
    assert [line.get_label() for line in visualizer.ax.lines] == ["Context-split"]


def test_report_rejects_unknown_stratum():
    with pytest.raises(InvalidArgumentError):
        MetricReport([1]).set("type", "herb", {"hit@1": 1.0}, 1)

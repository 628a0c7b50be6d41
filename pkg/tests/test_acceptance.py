"""
Сквозные проверки на синтетических пресетах: восстановление заложенного выравнивания, разделение по контексту,
симуляция RAG и зависимость от доли опорных пар
"""
from dataclasses import replace

import numpy as np
import pytest

from models.configs import resolve_preset
from models.dataset import Split
from models.reports import AlignmentSetting
from modules.eval_module import evaluate, seed_ratio_sweep
from modules.method_module import fit_method
from modules.rag_module import EvidenceSimulator, entity_rankings, expand_trials, generate_questions, rag_metrics
from modules.storage_module import StorageManager
from modules.synthetic_module import generate_synthetic
from ui.cli import main

pytestmark = pytest.mark.slow


def _preset(name):
    spec, model_values, train_config = resolve_preset(name)
    return generate_synthetic(spec, seed=0), model_values, train_config


@pytest.fixture(scope="module")
def small():
    bundle, model_values, train_config = _preset("small")
    scorer, _, _ = fit_method("qcea", bundle, model_values, train_config)
    return bundle, model_values, train_config, scorer


def _macro(records, setting):
    return next(r for r in records if r["setting"] == setting and r["category"] == "macro")


def test_small_preset_recovers_planted_alignment(small):
    bundle, _, _, scorer = small
    report = evaluate(bundle, scorer, Split.TEST, modes=("type",))
    assert report.value("type", "overall", "hit@10") >= 0.9
    assert report.value("type", "overall", "mrr") >= 0.6


def test_rag_settings_order_on_small_preset(small):
    bundle, _, _, scorer = small
    questions = generate_questions(bundle, per_category=10, seed=0)
    simulator = EvidenceSimulator(bundle, entity_rankings(bundle, scorer), k=20, seed=0)
    ratios = (0.0, 0.25, 0.5, 0.75, 1.0)
    settings = [AlignmentSetting("oracle"), AlignmentSetting("predicted"), AlignmentSetting("noalign")]
    settings += [AlignmentSetting("topx", x) for x in range(1, 11)]
    settings += [AlignmentSetting("dropx", r) for r in ratios]
    records = rag_metrics(simulator.run(questions, expand_trials(settings, trials=5)))

    oracle, predicted, noalign = (_macro(records, s) for s in ("oracle", "predicted", "noalign"))
    assert noalign["cross_system_hit_rate"] == 0.0
    assert oracle["evidence_recall"] == pytest.approx(1.0)
    assert oracle["evidence_recall"] >= predicted["evidence_recall"] > noalign["evidence_recall"]
    topx = [_macro(records, f"topx={x}")["evidence_recall"] for x in range(1, 11)]
    assert all(a <= b + 1e-12 for a, b in zip(topx, topx[1:]))
    dropx = [_macro(records, AlignmentSetting("dropx", r).name)["evidence_recall"] for r in ratios]
    assert all(b <= a + 1e-12 for a, b in zip(dropx, dropx[1:]))


def test_low_seed_ratio_loses_accuracy(small):
    bundle, model_values, train_config, _ = small
    gains = []
    for seed in range(3):
        config = replace(train_config, seed=seed)

        def fit(subset):
            return fit_method("qcea", subset, model_values, config)[0]

        results = dict(seed_ratio_sweep(bundle, [0.1, 1.0], fit, seed=seed, modes=("type",)))
        gains.append(results[1.0].value("type", "overall", "hit@10") - results[0.1].value("type", "overall", "hit@10"))
    assert np.mean(gains) >= 0.1


def test_query_conditioning_beats_entity_level_baselines():
    bundle, model_values, train_config = _preset("context")
    qcea, _, _ = fit_method("qcea", bundle, model_values, train_config)
    ctx_hit = evaluate(bundle, qcea, Split.TEST, modes=("type",)).value("type", "ctx", "hit@1")

    baselines = [fit_method("procrustes", bundle, model_values, train_config)[0]]
    baselines += [fit_method(name, bundle, model_values, train_config, source_inputs="entity")[0]
                  for name in ("mlp", "biencoder")]
    for scorer in baselines:
        report = evaluate(bundle, scorer, Split.TEST, modes=("type",))
        assert ctx_hit - report.value("type", "ctx", "hit@1") >= 0.25
        for entity_id in {q.entity_id for q in bundle.queries if q.scoped}:
            scored = [scorer.scores(q)[1] for q in bundle.queries if q.entity_id == entity_id]
            for other in scored[1:]:
                np.testing.assert_array_equal(other, scored[0])


def test_tiny_preset_train_then_eval(tmp_path):
    data, run, out = tmp_path / "data", tmp_path / "run", tmp_path / "eval"
    assert main(["gen", "--preset", "tiny", "--seed", "0", "--out", str(data), "--quiet"]) == 0
    assert main(["train", "--data", str(data), "--preset", "tiny", "--out", str(run), "--quiet"]) == 0
    assert main(["eval", "--data", str(data), "--model", str(run / "model.ckpt"), "--mode", "type",
                 "--out", str(out), "--quiet"]) == 0
    records = StorageManager.read_jsonl(str(out / "metrics.jsonl"))
    overall = next(r for r in records if r["mode"] == "type" and r["stratum"] == "overall")
    assert overall["hit@10"] == 1.0

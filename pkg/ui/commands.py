"""
Команды интерфейса командной строки: генерация, разбиение, обучение, оценка, предсказание,
симуляция RAG, перебор доли опорных пар, проверка градиентов и графики
"""
import argparse
import logging
import os
import sys
from typing import Dict, List, Optional

from models.configs import TrainConfig, resolve_preset
from models.dataset import DatasetBundle, Split
from models.errors import ConfigConflictError, InvalidArgumentError, MissingFileError
from models.reports import AlignmentSetting, MetricReport, RunManifest
from modules.eval_module import evaluate, predict, seed_ratio_sweep
from modules.gradient_module import fd_check, gradcheck_fixture
from modules.input_module import InputParser
from modules.method_module import fit_method, load_scorer
from modules.rag_module import (EvidenceSimulator, entity_rankings, expand_trials, generate_questions,
                                rag_metrics, sweep_settings)
from modules.split_module import split_anchors
from modules.storage_module import StorageManager
from modules.synthetic_module import generate_synthetic
from modules.visual_module import AlignmentVisualizer

logger = logging.getLogger(__name__)

VERSION = "qcea 1.0.0"


# ---------------------------------------------------------------------- общие помощники

def _model_overrides(args: argparse.Namespace) -> dict:
    ranks = None
    if getattr(args, "ranks", None):
        ranks = tuple(InputParser.parse_int_list(args.ranks))
        if len(ranks) != 3:
            raise InvalidArgumentError(f"--ranks ожидает три числа, получено '{args.ranks}'", field="ranks")
    return {"dim": getattr(args, "dim", None), "ranks": ranks, "variant": getattr(args, "variant", None),
            "gcn_layers": getattr(args, "gcn_layers", None)}


def _train_overrides(args: argparse.Namespace) -> dict:
    return {
        "epochs": getattr(args, "epochs", None),
        "lr": getattr(args, "lr", None),
        "temperature": getattr(args, "temp", None),
        "lambda_dir": getattr(args, "lambda_dir", None),
        "lambda_reg": getattr(args, "lambda_reg", None),
        "negatives": getattr(args, "negatives", None),
        "positives": getattr(args, "positives", None),
        "batch_size": getattr(args, "batch_size", None),
        "patience": getattr(args, "patience", None),
        "eval_mode": getattr(args, "eval_mode", None),
        "seed": args.seed,
    }


def _resolve(args: argparse.Namespace):
    synthetic = {"noise": getattr(args, "noise", None), "context_split": getattr(args, "context_split", None)}
    spec, model_values, train_config = resolve_preset(args.preset, synthetic, _model_overrides(args),
                                                      _train_overrides(args))
    train_config.validate()
    method = getattr(args, "method", "qcea")
    if method != "qcea" and model_values.get("variant", "full") != "full":
        raise ConfigConflictError(f"--variant применим только к методу qcea, выбран {method}",
                                  field="variant")
    return spec, model_values, train_config


def _require_file(path: Optional[str], flag: str) -> str:
    if not path:
        raise InvalidArgumentError(f"Не задан обязательный параметр {flag}", field=flag)
    if not os.path.exists(path):
        raise MissingFileError(f"Файл '{path}' не найден", path=path)
    return path


def _input_digests(args: argparse.Namespace) -> Dict[str, str]:
    digests = {}
    data = getattr(args, "data", None)
    if data and os.path.isdir(data):
        digests.update({f"data/{name}": d for name, d in StorageManager.directory_digests(data).items()})
    model = getattr(args, "model", None)
    if model and os.path.exists(model):
        digests["model"] = StorageManager.file_digest(model)
    for name in ("input",):
        path = getattr(args, name, None)
        if path and os.path.exists(path):
            digests[name] = StorageManager.file_digest(path)
    return digests


def _start_run(args: argparse.Namespace, config: dict, outputs: List[str]) -> str:
    """Создаёт выходной каталог и записывает манифест до начала вычислений"""
    os.makedirs(args.out, exist_ok=True)
    manifest = RunManifest(args.command, config, args.seed, _input_digests(args),
                           outputs + ["manifest.json"], VERSION)
    StorageManager.write_json(os.path.join(args.out, "manifest.json"), manifest.to_dict())
    return args.out


def _load_bundle(args: argparse.Namespace) -> DatasetBundle:
    if not args.data:
        raise InvalidArgumentError("Не задан обязательный параметр --data", field="data")
    return StorageManager.load_bundle(args.data)


def _scorer_for(args: argparse.Namespace, bundle: DatasetBundle):
    """Scorer из --model; для Прокруста без контрольной точки модель подгоняется на месте"""
    if getattr(args, "model", None):
        checkpoint = StorageManager.load_checkpoint(_require_file(args.model, "--model"))
        if args.method_set and args.method != checkpoint.method:
            raise ConfigConflictError(f"--method {args.method} не совпадает с методом контрольной точки "
                                      f"{checkpoint.method}", field="method")
        return load_scorer(checkpoint, bundle)
    if args.method == "procrustes":
        return fit_method("procrustes", bundle, {}, TrainConfig())[0]
    raise InvalidArgumentError(f"Для метода {args.method} нужен --model с контрольной точкой", field="model")


def _modes(args: argparse.Namespace) -> List[str]:
    return ["full", "type"] if args.mode == "both" else [args.mode]


# ---------------------------------------------------------------------- команды

def cmd_gen(args: argparse.Namespace) -> int:
    spec, _, _ = _resolve(args)
    suffix = ".emb.txt" if args.text else ".emb"
    outputs = ["tcm.graph.txt", "wm.graph.txt", "anchors.tsv", "compat.tsv", "queries.tsv", "splits.tsv"]
    outputs += [name + suffix for name in ("queries", "tcm", "wm")]
    _start_run(args, {"preset": args.preset, "synthetic": spec.to_dict()}, outputs)
    bundle = generate_synthetic(spec, args.seed)
    StorageManager.save_bundle(bundle, args.out, binary=not args.text)
    return 0


def cmd_split(args: argparse.Namespace) -> int:
    bundle = _load_bundle(args)
    ratios = tuple(InputParser.parse_float_list(args.ratios))
    if len(ratios) != 3:
        raise InvalidArgumentError(f"--ratios ожидает три доли, получено '{args.ratios}'", field="ratios")
    outputs = ["tcm.graph.txt", "wm.graph.txt", "anchors.tsv", "compat.tsv", "queries.tsv", "splits.tsv",
               "queries.emb", "tcm.emb", "wm.emb"]
    _start_run(args, {"ratios": list(ratios)}, outputs)
    split = split_anchors(bundle.anchors, ratios, args.seed)
    StorageManager.save_bundle(bundle.with_split(split), args.out)
    train, val, test = split.counts()
    print(f"train={train}\tval={val}\ttest={test}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    bundle = _load_bundle(args)
    _, model_values, train_config = _resolve(args)
    config = {"method": args.method, "model": {k: (list(v) if isinstance(v, tuple) else v)
                                               for k, v in model_values.items()},
              "train": train_config.to_dict(), "source_inputs": args.source_inputs}
    out = _start_run(args, config, ["model.ckpt", "train_log.jsonl"])
    _, result, checkpoint = fit_method(args.method, bundle, model_values, train_config, args.source_inputs,
                                       diagnostic_dir=out, progress=not args.quiet)
    StorageManager.save_checkpoint(os.path.join(out, "model.ckpt"), checkpoint)
    StorageManager.write_jsonl(os.path.join(out, "train_log.jsonl"), result.log if result else [])
    if result is not None:
        print(f"best_epoch={result.best_epoch}\tval_hit@{train_config.eval_k}={result.best_metric:.4f}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    bundle = _load_bundle(args)
    k_list = InputParser.parse_int_list(args.k_list)
    split = Split(args.split)
    out = _start_run(args, {"method": args.method, "modes": _modes(args), "k_list": k_list, "split": split.value,
                            "filtered": args.filtered}, ["metrics.tsv", "metrics.jsonl"])
    scorer = _scorer_for(args, bundle)
    report = evaluate(bundle, scorer, split, _modes(args), k_list, args.threads, args.filtered)
    table = report.to_table()
    StorageManager.write_text(os.path.join(out, "metrics.tsv"), table)
    StorageManager.write_jsonl(os.path.join(out, "metrics.jsonl"), report.to_records())
    sys.stdout.write(table)
    for record in report.to_records():
        sys.stdout.write(" ".join(f"{k}={v}" for k, v in record.items()) + "\n")
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    bundle = _load_bundle(args)
    split = Split(args.split)
    out = _start_run(args, {"method": args.method, "mode": _modes(args)[0], "top": args.top,
                            "split": split.value}, ["predictions.jsonl"])
    scorer = _scorer_for(args, bundle)
    predictions = predict(bundle, scorer, split, _modes(args)[0], args.threads, args.filtered)
    StorageManager.write_jsonl(os.path.join(out, "predictions.jsonl"), [p.to_dict(args.top) for p in predictions])
    return 0


def cmd_simulate_rag(args: argparse.Namespace) -> int:
    bundle = _load_bundle(args)
    settings = [AlignmentSetting.parse(text) for text in args.settings.split(",") if text.strip()]
    outputs = ["questions.jsonl", "traces.jsonl", "rag_metrics.tsv", "rag_metrics.jsonl"]
    if args.sweep:
        outputs.append("rag_sweep.jsonl")
    out = _start_run(args, {"method": args.method, "settings": [s.name for s in settings], "k": args.k,
                            "per_category": args.per_category, "trials": args.trials,
                            "test_sources": args.test_sources, "sweep": args.sweep}, outputs)
    pairs = set(bundle.split_pairs(Split.TEST)) if args.test_sources else None
    questions = generate_questions(bundle, args.per_category, args.seed, pairs)
    needs_rankings = args.sweep or any(s.kind in ("predicted", "topx", "dropx") for s in settings)
    rankings = entity_rankings(bundle, _scorer_for(args, bundle), "type", args.threads) if needs_rankings else {}
    simulator = EvidenceSimulator(bundle, rankings, args.k, args.seed)
    traces = simulator.run(questions, expand_trials(settings, args.trials))
    records = rag_metrics(traces)

    StorageManager.write_jsonl(os.path.join(out, "questions.jsonl"), [q.to_dict() for q in questions])
    StorageManager.write_jsonl(os.path.join(out, "traces.jsonl"), [t.to_dict() for t in traces])
    StorageManager.write_jsonl(os.path.join(out, "rag_metrics.jsonl"), records)
    lines = ["setting\tcategory\tn\tevidence_recall@{}\tcross_system_hit_rate".format(args.k)]
    lines += [f"{r['setting']}\t{r['category']}\t{r['count']}\t{r['evidence_recall']:.4f}\t"
              f"{r['cross_system_hit_rate']:.4f}" for r in records]
    table = "\n".join(lines) + "\n"
    StorageManager.write_text(os.path.join(out, "rag_metrics.tsv"), table)
    sys.stdout.write(table)
    if args.sweep:
        StorageManager.write_jsonl(os.path.join(out, "rag_sweep.jsonl"),
                                   sweep_settings(simulator, questions, trials=args.trials))
    return 0


def cmd_sweep_ratio(args: argparse.Namespace) -> int:
    bundle = _load_bundle(args)
    _, model_values, train_config = _resolve(args)
    ratios = InputParser.parse_float_list(args.ratios)
    k_list = InputParser.parse_int_list(args.k_list)
    out = _start_run(args, {"method": args.method, "ratios": ratios, "train": train_config.to_dict(),
                            "model": {k: (list(v) if isinstance(v, tuple) else v) for k, v in model_values.items()},
                            "source_inputs": args.source_inputs}, ["ratio_sweep.jsonl"])

    def fit(subset: DatasetBundle):
        return fit_method(args.method, subset, model_values, train_config, args.source_inputs)[0]

    results = seed_ratio_sweep(bundle, ratios, fit, args.seed, _modes(args), k_list, args.threads)
    records = []
    for ratio, report in results:
        for record in report.to_records():
            records.append(dict(record, ratio=ratio))
    StorageManager.write_jsonl(os.path.join(out, "ratio_sweep.jsonl"), records)
    for ratio, report in results:
        sys.stdout.write(f"# ratio={ratio:g}\n{report.to_table()}")
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    out = _start_run(args, {"step_size": args.step, "tolerance": args.tolerance}, ["gradcheck.json"])
    failed = 0
    reports = {}
    for seed in range(args.seed, args.seed + args.seeds):
        params, inputs, batches, config = gradcheck_fixture(seed)
        report = fd_check(params, inputs, batches, config, args.step, args.tolerance)
        reports[str(seed)] = report.to_dict()
        worst = max(report.max_errors.values())
        print(f"seed={seed}\tpassed={int(report.passed)}\tmax_error={worst:.3e}")
        failed += not report.passed
    StorageManager.write_json(os.path.join(out, "gradcheck.json"), reports)
    return 1 if failed else 0


def cmd_plot(args: argparse.Namespace) -> int:
    path = _require_file(args.input, "--input")
    _start_run(args, {"kind": args.kind, "mode": args.mode}, [f"{args.kind}.png"])
    records = StorageManager.read_jsonl(path)
    visualizer = AlignmentVisualizer()
    mode = "type" if args.mode == "both" else args.mode
    if args.kind == "training":
        val = [r for r in records if r["split"] == "val" and r["hit@10"] is not None]
        best = max(val, key=lambda r: (r["hit@10"], -r["epoch"]))["epoch"] if val else None
        visualizer.draw_training_curves(records, best)
    elif args.kind in ("hit", "recall"):
        visualizer.draw_k_curves(MetricReport.from_records(records), mode, args.kind)
    elif args.kind == "ratio":
        ratios = sorted({r["ratio"] for r in records})
        results = [(ratio, MetricReport.from_records(r for r in records if r["ratio"] == ratio))
                   for ratio in ratios]
        visualizer.draw_ratio_sweep(results, mode)
    else:
        visualizer.draw_rag_sweep(records, args.kind)
    visualizer.save(os.path.join(args.out, f"{args.kind}.png"))
    return 0


COMMANDS = {
    "gen": cmd_gen,
    "split": cmd_split,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "simulate-rag": cmd_simulate_rag,
    "sweep-ratio": cmd_sweep_ratio,
    "gradcheck": cmd_gradcheck,
    "plot": cmd_plot,
}

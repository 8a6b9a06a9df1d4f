"""Command-line entry point for reproducible experiments.

Subcommands: ``train`` (fit and checkpoint a scorer), ``select`` (sample an
evaluation set from a rank cohort), ``explain`` (run explainers per
prediction, resumable by file presence), ``evaluate`` (metrics reports and
the cross-algorithm comparison), ``pareto`` (front export). Configuration
is one INI file, echoed verbatim into every output directory. Exit codes:
0 success, 2 validation error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .effectiveness import build_target_set
from .errors import ConfigurationError, DatasetParseError, DomainError, KgExplainError
from .explainers import (
    ALGORITHMS,
    MODES,
    ExplainerConfig,
    ExplanationRun,
    criage_first_order,
    data_poisoning_direct,
    exhaustive_length1,
    load_run_payload,
    variable_length_builder,
)
from .kg import KnowledgeGraph, SearchSpace, Triple, build_search_space, load_dataset
from .latent import calibrate_ensemble, sample_latent_candidates
from .metrics import (
    RankRow,
    RankTable,
    build_metrics_report,
    comparison_table,
    emit_report,
)
from .model import (
    TrainConfig,
    init_model,
    load_checkpoint,
    rank,
    save_checkpoint,
)
from .pareto import non_dominated
from .training import train

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


@dataclass
class ExperimentConfig:
    """Parsed experiment description; every stochastic stage carries a seed."""

    dataset_path: Path
    train: TrainConfig
    selection_count: int
    selection_seed: int
    cohort_rank: int
    mode: str
    algorithms: tuple[str, ...]
    explainer: ExplainerConfig
    simultaneous_removal: bool
    latent_epsilon: float
    latent_budget: int
    latent_seed: int
    targets_size: int
    targets_seed: int
    output_dir: Path
    raw_text: str

    def validate(self) -> None:
        if not self.dataset_path.is_dir():
            raise ConfigurationError(f"dataset path does not exist: {self.dataset_path}")
        self.train.validate()
        self.explainer.validate()
        if self.selection_count < 1:
            raise ConfigurationError("selection count must be >= 1")
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown explanation mode: {self.mode!r}")
        for algo in self.algorithms:
            if algo not in ALGORITHMS:
                raise ConfigurationError(f"unknown algorithm: {algo!r}")


def parse_experiment_config(path: str | Path, seed_override: int | None = None) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    raw_text = path.read_text(encoding="utf-8")
    parser = configparser.ConfigParser()
    parser.read_string(raw_text)

    def get(section: str, key: str, fallback):
        if not parser.has_option(section, key):
            return fallback
        value = parser.get(section, key)
        if isinstance(fallback, bool):
            return value.strip().lower() in ("1", "true", "yes", "on")
        if isinstance(fallback, int):
            return int(value)
        if isinstance(fallback, float):
            return float(value)
        return value

    if not parser.has_option("dataset", "path"):
        raise ConfigurationError("config must set [dataset] path")

    train_config = TrainConfig(
        dimension=get("training", "dimension", 32),
        epochs=get("training", "epochs", 100),
        learning_rate=get("training", "learning_rate", 0.1),
        reg_weight=get("training", "reg_weight", 1e-3),
        batch_size=get("training", "batch_size", 512),
        seed=get("training", "seed", 0),
    )
    explainer = ExplainerConfig(
        search_space=get("explain", "search_space", "shares-entity"),
        max_length=get("explain", "max_length", 1),
        prefilter_k=get("explain", "prefilter_k", 20),
        evaluator=get("explain", "evaluator", "post-train"),
        lambda_weight=get("explain", "lambda_weight", 1.0),
        perturbation_step=get("explain", "perturbation_step", 0.1),
        influence_step=get("explain", "influence_step", 0.1),
        top_m=get("explain", "top_m", 1),
        acceptance_threshold=get("explain", "acceptance_threshold", 1.0),
        max_evals_per_length=get("explain", "max_evals_per_length", 256),
        post_train_epochs=(
            int(parser.get("explain", "post_train_epochs"))
            if parser.has_option("explain", "post_train_epochs")
            else None
        ),
        seed=get("explain", "seed", 0),
    )
    algorithms = tuple(
        name.strip()
        for name in get("explain", "algorithms", "exhaustive-length-1").split(",")
        if name.strip()
    )
    config = ExperimentConfig(
        dataset_path=Path(parser.get("dataset", "path")),
        train=train_config,
        selection_count=get("selection", "count", 20),
        selection_seed=get("selection", "seed", 0),
        cohort_rank=get("selection", "cohort_rank", 1),
        mode=get("explain", "mode", "necessary"),
        algorithms=algorithms,
        explainer=explainer,
        simultaneous_removal=get("explain", "simultaneous_removal", False),
        latent_epsilon=get("latent", "epsilon", 0.1),
        latent_budget=get("latent", "budget", 10),
        latent_seed=get("latent", "seed", 0),
        targets_size=get("targets", "size", 10),
        targets_seed=get("targets", "seed", 0),
        output_dir=Path(get("output", "directory", "runs/experiment")),
        raw_text=raw_text,
    )
    if seed_override is not None:
        config.train = replace(config.train, seed=seed_override)
        config.explainer = replace(config.explainer, seed=seed_override)
        config.selection_seed = seed_override
        config.latent_seed = seed_override
        config.targets_seed = seed_override
    return config


def _prepare_output(config: ExperimentConfig, out: str | None) -> Path:
    out_dir = Path(out) if out else config.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config_echo.ini").write_text(config.raw_text, encoding="utf-8")
    return out_dir


def cmd_train(config: ExperimentConfig, out: str | None = None) -> Path:
    """Train on the configured dataset; write checkpoint and loss curve."""
    config.validate()
    out_dir = _prepare_output(config, out)
    kg = load_dataset(config.dataset_path)
    model = train(init_model(kg, config.train), kg, config.train)
    checkpoint = out_dir / "checkpoint.npz"
    save_checkpoint(model, kg, checkpoint)
    with (out_dir / "loss_curve.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_nll", "valid_nll"])
        for record in model.history:
            writer.writerow(
                [
                    record["epoch"],
                    f"{record['train_nll']:.10g}",
                    f"{record['valid_nll']:.10g}" if "valid_nll" in record else "",
                ]
            )
    logger.info("checkpoint written to %s", checkpoint)
    return checkpoint


def cmd_select(
    config: ExperimentConfig, checkpoint: str | Path, out: str | None = None
) -> Path:
    """Rank the test split and sample the evaluation set from a rank cohort."""
    config.validate()
    out_dir = _prepare_output(config, out)
    kg = load_dataset(config.dataset_path)
    model = load_checkpoint(checkpoint, kg)

    ranked = [(t, rank(model, t, kg)) for t in kg.eval_split("test")]
    cohort = [(t, r) for t, r in ranked if r == config.cohort_rank]
    if not cohort:
        raise DomainError(f"no test triples with rank {config.cohort_rank}")
    if len(cohort) < config.selection_count:
        logger.warning(
            "cohort holds %d triples, fewer than the requested %d; returning all",
            len(cohort),
            config.selection_count,
        )
        chosen = cohort
    else:
        rng = np.random.default_rng(config.selection_seed)
        idx = rng.choice(len(cohort), size=config.selection_count, replace=False)
        chosen = [cohort[i] for i in sorted(idx)]

    selection = {
        "cohort_rank": config.cohort_rank,
        "seed": config.selection_seed,
        "triples": [
            {"ids": list(t), "labels": list(kg.label_triple(t)), "rank": r}
            for t, r in chosen
        ],
    }
    path = out_dir / "selection.json"
    path.write_text(json.dumps(selection, indent=2, sort_keys=True), encoding="utf-8")
    logger.info("selected %d triples into %s", len(chosen), path)
    return path


def _latent_space(
    config: ExperimentConfig, kg: KnowledgeGraph, model
) -> SearchSpace:
    heldout = kg.eval_split("valid") or kg.eval_split("test")
    ensemble = calibrate_ensemble(model, kg, heldout, seed=config.latent_seed)
    sample = sample_latent_candidates(
        ensemble, kg, config.latent_epsilon, config.latent_budget, config.latent_seed
    )
    members = tuple(sorted(sample))
    member_set = frozenset(members)
    return SearchSpace(
        preset="latent-sample",
        constraints=(lambda t: t in member_set,),
        _enumerator=lambda: iter(members),
    )


def _run_one(
    config: ExperimentConfig,
    kg: KnowledgeGraph,
    model,
    prediction: Triple,
    algorithm: str,
    space: SearchSpace | None,
) -> ExplanationRun:
    explainer = replace(config.explainer, algorithm=algorithm)
    targets = None
    if config.mode == "c-sufficient":
        targets = build_target_set(
            kg, model, prediction, config.targets_size, config.targets_seed
        )
    if algorithm == "exhaustive-length-1":
        if config.mode == "c-sufficient":
            s_x = prediction.subject
            members = tuple(
                t for t in space.enumerate() if s_x in (t.subject, t.object)
            )
            space = SearchSpace(
                preset=space.preset,
                constraints=space.constraints + (lambda t: s_x in (t.subject, t.object),),
                _enumerator=lambda: iter(members),
            )
        return exhaustive_length1(
            kg, model, prediction, space, config.mode, explainer.evaluator,
            explainer, config.train, targets=targets,
        )
    if algorithm == "data-poisoning-direct":
        return data_poisoning_direct(kg, model, prediction, explainer, config.train)
    if algorithm == "criage-first-order":
        return criage_first_order(kg, model, prediction, explainer, config.train)
    if algorithm == "variable-length-builder":
        return variable_length_builder(
            kg, model, prediction, config.mode, explainer, config.train, targets=targets
        )
    raise ConfigurationError(f"unknown algorithm: {algorithm!r}")


def cmd_explain(
    config: ExperimentConfig,
    checkpoint: str | Path,
    selection: str | Path,
    out: str | None = None,
    workers: int = 1,
) -> list[Path]:
    """One run file per (prediction, algorithm); existing files are kept.

    Per-prediction failures are isolated and logged; the command continues.
    With simultaneous removal enabled, each algorithm's best necessary
    explanations are pooled, removed in one shot, and a single retrained
    model produces every after-rank.
    """
    config.validate()
    out_dir = _prepare_output(config, out)
    runs_dir = out_dir / "runs"
    runs_dir.mkdir(exist_ok=True)
    kg = load_dataset(config.dataset_path)
    model = load_checkpoint(checkpoint, kg)
    selection_data = json.loads(Path(selection).read_text(encoding="utf-8"))
    predictions = [Triple(*entry["ids"]) for entry in selection_data["triples"]]

    if config.mode in ("latent-positive", "latent-negative"):
        space = _latent_space(config, kg, model)
    else:
        space = None

    tasks = []
    for index, prediction in enumerate(predictions):
        pred_space = space
        if space is None:
            pred_space = build_search_space(kg, config.explainer.search_space, prediction)
        for algorithm in config.algorithms:
            tasks.append((index, prediction, algorithm, pred_space))

    written: list[Path] = []

    def execute(task) -> Path | None:
        index, prediction, algorithm, pred_space = task
        path = runs_dir / f"run_{algorithm}_{index:04d}.json"
        if path.exists():
            logger.info("run file %s already exists; skipping", path.name)
            return path
        try:
            run = _run_one(config, kg, model, prediction, algorithm, pred_space)
        except KgExplainError as exc:
            logger.error("run failed for %s / %s: %s", prediction, algorithm, exc)
            return None
        run.save(path, kg)
        return path

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(execute, tasks))
    else:
        results = [execute(task) for task in tasks]
    written = [p for p in results if p is not None]

    if config.simultaneous_removal and config.mode == "necessary":
        _simultaneous_removal(config, kg, model, predictions, runs_dir)
    return written


def _simultaneous_removal(
    config: ExperimentConfig,
    kg: KnowledgeGraph,
    model,
    predictions: list[Triple],
    runs_dir: Path,
) -> None:
    for algorithm in config.algorithms:
        removed: set[Triple] = set()
        for index in range(len(predictions)):
            path = runs_dir / f"run_{algorithm}_{index:04d}.json"
            if not path.exists():
                continue
            payload = load_run_payload(path)
            if payload.get("best"):
                removed.update(Triple(*t["ids"]) for t in payload["best"]["triples"])
        if not removed:
            continue
        new_train = tuple(t for t in kg.train if t not in removed)
        retrained = train(init_model(kg, config.train), kg.with_train(new_train), config.train)
        checkpoint = runs_dir / f"simultaneous_{algorithm}_model.npz"
        save_checkpoint(retrained, kg, checkpoint)
        entries = []
        for prediction in predictions:
            entries.append(
                {
                    "ids": list(prediction),
                    "labels": list(kg.label_triple(prediction)),
                    "rank_before": rank(model, prediction, kg),
                    "rank_after": rank(retrained, prediction, kg),
                }
            )
        payload = {
            "algorithm": algorithm,
            "removed": sorted(list(t) for t in removed),
            "checkpoint": checkpoint.name,
            "after_ranks": entries,
        }
        path = runs_dir / f"simultaneous_{algorithm}.json"
        path.write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")
        logger.info("simultaneous removal for %s: %d triples removed", algorithm, len(removed))


def _rank_table_for_algorithm(
    algorithm: str,
    predictions: list[tuple[Triple, int]],
    runs_dir: Path,
) -> tuple[RankTable, list[dict], list[str]]:
    simultaneous = runs_dir / f"simultaneous_{algorithm}.json"
    payloads: list[dict] = []
    gaps: list[str] = []
    rows: list[RankRow] = []

    after_ranks: dict[Triple, int] = {}
    if simultaneous.exists():
        data = json.loads(simultaneous.read_text(encoding="utf-8"))
        for entry in data["after_ranks"]:
            after_ranks[Triple(*entry["ids"])] = entry["rank_after"]

    for index, (prediction, rank_before) in enumerate(predictions):
        path = runs_dir / f"run_{algorithm}_{index:04d}.json"
        if not path.exists():
            gaps.append(path.name)
            continue
        payload = load_run_payload(path)
        payloads.append(payload)
        if prediction in after_ranks:
            rank_after = after_ranks[prediction]
        elif payload.get("best"):
            rank_after = int(payload["best"]["rank_after"])
        else:
            rank_after = rank_before
        rows.append(RankRow(prediction, rank_before, rank_after))
    return RankTable(rows=tuple(rows)), payloads, gaps


def cmd_evaluate(
    config: ExperimentConfig,
    selection: str | Path,
    runs_dir: str | Path,
    out: str | None = None,
    output_format: str = "json",
) -> Path:
    """Per-algorithm metrics reports plus the comparison table sorted by MDR."""
    config.validate()
    out_dir = _prepare_output(config, out)
    runs_dir = Path(runs_dir)
    kg = load_dataset(config.dataset_path)
    selection_data = json.loads(Path(selection).read_text(encoding="utf-8"))
    predictions = [
        (Triple(*entry["ids"]), int(entry["rank"])) for entry in selection_data["triples"]
    ]

    summaries = []
    all_gaps: list[str] = []
    for algorithm in config.algorithms:
        table, payloads, gaps = _rank_table_for_algorithm(algorithm, predictions, runs_dir)
        all_gaps.extend(gaps)
        if not table.rows:
            continue
        emit_report(table, payloads, kg, out_dir / f"metrics_{algorithm}", prefix="report")
        report = build_metrics_report(table, payloads, kg)
        summaries.append(
            {
                "algorithm": algorithm,
                "mean_length": report.mean_explanation_length or 0.0,
                "m_delta_r": report.m_delta_r,
                "mrr_before": report.mrr_before,
                "mrr_after": report.mrr_after,
                "hits1_after_pct": report.hits["1"]["pct_after"],
            }
        )
    if all_gaps:
        raise ConfigurationError(
            "missing run files: " + ", ".join(sorted(all_gaps))
        )

    rows = comparison_table(summaries)
    if output_format == "csv":
        path = out_dir / "comparison.csv"
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()) if rows else [])
            writer.writeheader()
            writer.writerows(rows)
    else:
        path = out_dir / "comparison.json"
        path.write_text(json.dumps(rows, indent=2, sort_keys=True), encoding="utf-8")
    logger.info("comparison written to %s", path)
    return path


def cmd_pareto(
    runs_dir: str | Path, out: str | Path, output_format: str = "json"
) -> Path:
    """Pool every evaluated candidate per algorithm and export the fronts."""
    runs_dir = Path(runs_dir)
    run_files = sorted(runs_dir.glob("run_*.json"))
    if not run_files:
        raise ConfigurationError(f"no run files found under {runs_dir}")
    by_algorithm: dict[str, list[dict]] = {}
    for path in run_files:
        payload = load_run_payload(path)
        by_algorithm.setdefault(payload["algorithm"], []).extend(payload["candidates"])

    fronts = {}
    for algorithm, candidates in sorted(by_algorithm.items()):
        points = [(float(c["length"]), float(c["psi"])) for c in candidates]
        keep = non_dominated(points)
        fronts[algorithm] = sorted(
            {(points[i][0], points[i][1]) for i in range(len(points)) if keep[i]}
        )

    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if output_format == "csv":
        with out.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["algorithm", "length", "psi"])
            for algorithm, points in fronts.items():
                for length, psi in points:
                    writer.writerow([algorithm, length, f"{psi:.6g}"])
    else:
        payload = {
            algo: [{"length": length, "psi": psi} for length, psi in points]
            for algo, points in fronts.items()
        }
        out.write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")
    return out


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kgexplain",
        description="Train embedding scorers, extract explanations, evaluate explainers.",
    )
    parser.add_argument("--seed-override", type=int, default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a scorer and write a checkpoint")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--out", default=None)

    p_select = sub.add_parser("select", help="sample the evaluation set")
    p_select.add_argument("--config", required=True)
    p_select.add_argument("--checkpoint", required=True)
    p_select.add_argument("--out", default=None)

    p_explain = sub.add_parser("explain", help="run explainers per prediction")
    p_explain.add_argument("--config", required=True)
    p_explain.add_argument("--checkpoint", required=True)
    p_explain.add_argument("--selection", required=True)
    p_explain.add_argument("--out", default=None)
    p_explain.add_argument("--workers", type=int, default=1)

    p_eval = sub.add_parser("evaluate", help="metrics reports and comparison table")
    p_eval.add_argument("--config", required=True)
    p_eval.add_argument("--selection", required=True)
    p_eval.add_argument("--runs", required=True)
    p_eval.add_argument("--out", default=None)
    p_eval.add_argument("--format", choices=("json", "csv"), default="json")

    p_pareto = sub.add_parser("pareto", help="export pooled fronts from run files")
    p_pareto.add_argument("--runs", required=True)
    p_pareto.add_argument("--out", required=True)
    p_pareto.add_argument("--format", choices=("json", "csv"), default="json")
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="[%(levelname)s] %(message)s")
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "pareto":
            cmd_pareto(args.runs, args.out, args.format)
            return EXIT_OK
        config = parse_experiment_config(args.config, seed_override=args.seed_override)
        if args.command == "train":
            cmd_train(config, args.out)
        elif args.command == "select":
            cmd_select(config, args.checkpoint, args.out)
        elif args.command == "explain":
            cmd_explain(config, args.checkpoint, args.selection, args.out, args.workers)
        elif args.command == "evaluate":
            cmd_evaluate(config, args.selection, args.runs, args.out, args.format)
        return EXIT_OK
    except (ConfigurationError, DatasetParseError, DomainError) as exc:
        logger.error("validation error: %s", exc)
        return EXIT_VALIDATION
    except KgExplainError as exc:
        logger.error("runtime error: %s", exc)
        return EXIT_RUNTIME
    except OSError as exc:
        logger.error("i/o error: %s", exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

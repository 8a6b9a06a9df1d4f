"""Search algorithms producing candidate explanations.

Four strategies over the joint (length, effectiveness) objective:

* :func:`exhaustive_length1` evaluates every singleton in a search space
  and is the reference all heuristics are compared against.
* :func:`data_poisoning_direct` ranks the subject's outgoing triples by a
  score-perturbation heuristic, without retraining inside the heuristic.
* :func:`criage_first_order` estimates each removal's score impact with a
  one-step influence approximation through shared embeddings.
* :func:`variable_length_builder` grows explanations up to length 4 from a
  shortest-path prefilter, ordering multi-triple candidates by the sum of
  their members' singleton effectiveness.

Runs record every evaluated candidate, the non-dominated front, and the
exact retrain count spent, and serialize to JSON for the metrics layer.
"""
from __future__ import annotations

import itertools
import json
import logging
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .effectiveness import (
    CandidateExplanation,
    EffectivenessResult,
    RetrainMeter,
    TargetSet,
    effectiveness_c_sufficient,
    effectiveness_latent,
    effectiveness_necessary,
    effectiveness_sufficient,
)
from .errors import ConfigurationError, DomainError
from .kg import KnowledgeGraph, SearchSpace, Triple
from .model import EmbeddingModel, TrainConfig, grad_score_wrt_subject, rank, score, score_objects
from .pareto import ParetoFront, pareto_front

logger = logging.getLogger(__name__)

ALGORITHMS = (
    "exhaustive-length-1",
    "data-poisoning-direct",
    "criage-first-order",
    "variable-length-builder",
)
MODES = ("necessary", "sufficient", "c-sufficient", "latent-positive", "latent-negative")

RUN_SCHEMA_VERSION = 1


@dataclass
class ExplainerConfig:
    """Knobs for the search algorithms; scalars must be finite."""

    algorithm: str = "exhaustive-length-1"
    search_space: str = "shares-entity"
    max_length: int = 1
    prefilter_k: int = 20
    evaluator: str = "post-train"
    lambda_weight: float = 1.0
    perturbation_step: float = 0.1
    influence_step: float = 0.1
    top_m: int = 1
    acceptance_threshold: float = 1.0
    anneal_initial_temperature: float = 1.0
    anneal_decay: float = 0.9
    anneal_proposals: int = 50
    max_evals_per_length: int = 256
    post_train_epochs: int | None = None
    seed: int = 0

    def validate(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ConfigurationError(f"unknown algorithm: {self.algorithm!r}")
        if self.max_length < 1:
            raise ConfigurationError("max_length must be >= 1")
        if self.prefilter_k < 1:
            raise ConfigurationError("prefilter_k must be >= 1")
        if self.top_m < 1:
            raise ConfigurationError("top_m must be >= 1")
        for name in ("lambda_weight", "perturbation_step", "influence_step",
                     "acceptance_threshold", "anneal_initial_temperature", "anneal_decay"):
            value = getattr(self, name)
            if not np.isfinite(value) and name != "acceptance_threshold":
                raise ConfigurationError(f"{name} must be finite")


@dataclass(frozen=True)
class CandidateRecord:
    """One evaluated candidate with its effectiveness and evaluator cost."""

    explanation: CandidateExplanation
    result: EffectivenessResult
    retrains: int
    heuristic_score: float | None = None


@dataclass
class ExplanationRun:
    """Everything one algorithm did for one prediction."""

    algorithm: str
    mode: str
    prediction: Triple
    candidates: list[CandidateRecord]
    front: ParetoFront | None
    best: CandidateRecord | None
    retrain_count: int
    wall_clock_s: float
    config: ExplainerConfig
    rank_before: int
    warnings: tuple[str, ...] = ()

    def to_payload(self, kg: KnowledgeGraph) -> dict:
        def triple_entry(t: Triple) -> dict:
            return {"ids": list(t), "labels": list(kg.label_triple(t))}

        def candidate_entry(record: CandidateRecord) -> dict:
            result = record.result
            return {
                "triples": [triple_entry(t) for t in record.explanation.sorted_triples()],
                "length": len(record.explanation),
                "psi": result.psi,
                "rank_before": result.rank_before,
                "rank_after": result.rank_after,
                "operator": result.operator,
                "evaluator": result.evaluator,
                "retrains": record.retrains,
                "heuristic_score": record.heuristic_score,
            }

        config = asdict(self.config)
        for key, value in config.items():
            if isinstance(value, float) and not np.isfinite(value):
                config[key] = repr(value)
        return {
            "schema_version": RUN_SCHEMA_VERSION,
            "algorithm": self.algorithm,
            "mode": self.mode,
            "prediction": triple_entry(self.prediction) | {"rank_before": self.rank_before},
            "config": config,
            "candidates": [candidate_entry(c) for c in self.candidates],
            "best": candidate_entry(self.best) if self.best else None,
            "front": [
                {
                    "length": p.length,
                    "psi": p.psi,
                    "triples": [list(t) for t in sorted(p.explanation.triples)]
                    if p.explanation
                    else None,
                }
                for p in (self.front.points if self.front else ())
            ],
            "counters": {"retrains": self.retrain_count, "wall_clock_s": self.wall_clock_s},
            "warnings": list(self.warnings),
        }

    def save(self, path: str | Path, kg: KnowledgeGraph) -> None:
        Path(path).write_text(
            json.dumps(self.to_payload(kg), indent=2, sort_keys=True), encoding="utf-8"
        )


def load_run_payload(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _evaluate_candidate(
    kg: KnowledgeGraph,
    model: EmbeddingModel,
    prediction: Triple,
    explanation: CandidateExplanation,
    mode: str,
    evaluator: str,
    config: ExplainerConfig,
    train_config: TrainConfig,
    targets: TargetSet | None,
    meter: RetrainMeter,
) -> EffectivenessResult:
    if mode == "necessary":
        return effectiveness_necessary(
            kg, model, prediction, explanation, evaluator, train_config,
            post_epochs=config.post_train_epochs, meter=meter,
        )
    if mode == "sufficient":
        policy = "frozen-neighborhood" if evaluator == "post-train" else "none"
        return effectiveness_sufficient(
            kg, model, prediction, explanation, policy, train_config,
            post_epochs=config.post_train_epochs, meter=meter,
        )
    if mode == "c-sufficient":
        if targets is None:
            raise ConfigurationError("c-sufficient mode requires a target set")
        return effectiveness_c_sufficient(
            kg, model, prediction, explanation, targets, evaluator, train_config,
            post_epochs=config.post_train_epochs, meter=meter,
        )
    if mode in ("latent-positive", "latent-negative"):
        return effectiveness_latent(
            kg, model, prediction, explanation, mode.removeprefix("latent-"),
            evaluator, train_config,
            post_epochs=config.post_train_epochs, meter=meter,
        )
    raise ConfigurationError(f"unknown mode: {mode!r}")


def _best_record(candidates: list[CandidateRecord]) -> CandidateRecord | None:
    if not candidates:
        return None
    # highest psi; ties broken by the lexicographically lowest triple ids
    return min(candidates, key=lambda c: (-c.result.psi, c.explanation.sorted_triples()))


def _finish_run(
    algorithm: str,
    mode: str,
    prediction: Triple,
    candidates: list[CandidateRecord],
    config: ExplainerConfig,
    meter: RetrainMeter,
    started: float,
    rank_before: int,
    warnings: tuple[str, ...] = (),
) -> ExplanationRun:
    front = (
        pareto_front([(c.explanation, c.result) for c in candidates]) if candidates else None
    )
    return ExplanationRun(
        algorithm=algorithm,
        mode=mode,
        prediction=prediction,
        candidates=candidates,
        front=front,
        best=_best_record(candidates),
        retrain_count=meter.count,
        wall_clock_s=time.perf_counter() - started,
        config=config,
        rank_before=rank_before,
        warnings=warnings,
    )


def exhaustive_length1(
    kg: KnowledgeGraph,
    model: EmbeddingModel,
    prediction: Triple,
    space: SearchSpace,
    mode: str,
    evaluator: str,
    config: ExplainerConfig | None = None,
    train_config: TrainConfig | None = None,
    targets: TargetSet | None = None,
) -> ExplanationRun:
    """Evaluate every singleton in the space; the argmax is flagged best.

    Ties on effectiveness go to the lowest triple ids. This is the oracle
    any heuristic over the same space and evaluator is bounded by.
    """
    config = config or ExplainerConfig(algorithm="exhaustive-length-1", evaluator=evaluator)
    train_config = train_config or TrainConfig()
    started = time.perf_counter()
    members = sorted(space.enumerate())
    if not members:
        raise DomainError(f"search space {space.preset!r} is empty")
    meter = RetrainMeter()
    rank_before = rank(model, prediction, kg)
    candidates: list[CandidateRecord] = []
    for t in members:
        explanation = CandidateExplanation(frozenset([t]), provenance=space.preset)
        before = meter.count
        result = _evaluate_candidate(
            kg, model, prediction, explanation, mode, evaluator, config,
            train_config, targets, meter,
        )
        candidates.append(CandidateRecord(explanation, result, meter.count - before))
    return _finish_run(
        "exhaustive-length-1", mode, prediction, candidates, config, meter, started, rank_before
    )


def data_poisoning_direct(
    kg: KnowledgeGraph,
    model: EmbeddingModel,
    prediction: Triple,
    config: ExplainerConfig,
    train_config: TrainConfig | None = None,
) -> ExplanationRun:
    """Rank the subject's outgoing triples by a gradient-shift heuristic.

    The subject embedding is shifted down the prediction's score gradient by
    ``perturbation_step``; each neighbor (s_x, r, o) is scored by
    f(s_x, r, o) - lambda * f~(s_x, r, o), where f~ uses the shifted
    subject. The ``top_m`` maximizers are kept and only then evaluated with
    the configured effectiveness evaluator for reporting.
    """
    train_config = train_config or TrainConfig()
    started = time.perf_counter()
    meter = RetrainMeter()
    rank_before = rank(model, prediction, kg)
    s_x = prediction.subject
    neighbors = sorted(
        t for t in kg.train_adjacency.get(s_x, ()) if t.subject == s_x
    )
    if not neighbors:
        logger.warning("prediction subject has no outgoing training triples")
        return _finish_run(
            "data-poisoning-direct", "necessary", prediction, [], config, meter, started,
            rank_before, warnings=("no eligible neighbors",),
        )

    grad = grad_score_wrt_subject(model, prediction)
    d = model.dimension
    shift_re = config.perturbation_step * grad[:d]
    shift_im = config.perturbation_step * grad[d:]
    shifted = model.clone()
    shifted.ent_re[s_x] -= shift_re
    shifted.ent_im[s_x] -= shift_im

    scored = []
    for t in neighbors:
        heuristic = score(model, t) - config.lambda_weight * score(shifted, t)
        scored.append((heuristic, t))
    scored.sort(key=lambda pair: (-pair[0], pair[1]))

    candidates: list[CandidateRecord] = []
    for heuristic, t in scored[: config.top_m]:
        explanation = CandidateExplanation(frozenset([t]), provenance="subject-match")
        before = meter.count
        result = effectiveness_necessary(
            kg, model, prediction, explanation, config.evaluator, train_config,
            post_epochs=config.post_train_epochs, meter=meter,
        )
        candidates.append(
            CandidateRecord(explanation, result, meter.count - before, heuristic_score=heuristic)
        )
    return _finish_run(
        "data-poisoning-direct", "necessary", prediction, candidates, config, meter, started,
        rank_before,
    )


def _score_gradients(model: EmbeddingModel, triple: Triple) -> dict[tuple[str, int], np.ndarray]:
    """Score gradient w.r.t. each of the triple's own embeddings, keyed by row."""
    s, r, o = triple
    a, b = model.ent_re[s], model.ent_im[s]
    c, d = model.rel_re[r], model.rel_im[r]
    e, f = model.ent_re[o], model.ent_im[o]
    grads: dict[tuple[str, int], np.ndarray] = {}
    grads[("e", s)] = np.concatenate([c * e + d * f, c * f - d * e])
    grads[("r", r)] = np.concatenate([a * e + b * f, a * f - b * e])
    q = np.concatenate([a * c - b * d, a * d + b * c])
    grads[("e", o)] = grads.get(("e", o), 0) + q
    return grads


def _loss_gradients(model: EmbeddingModel, triple: Triple) -> dict[tuple[str, int], np.ndarray]:
    """Gradient of the triple's softmax loss, restricted to its own embeddings.

    The softmax couples every entity, but the first-order estimate freezes
    everything except the triple's subject, relation, and object rows.
    """
    s, r, o = triple
    scores = score_objects(model, s, r)
    shift = scores.max()
    exps = np.exp(scores - shift)
    probs = exps / exps.sum()
    mean_re = probs @ model.ent_re
    mean_im = probs @ model.ent_im

    a, b = model.ent_re[s], model.ent_im[s]
    c, d = model.rel_re[r], model.rel_im[r]
    v_re = mean_re - model.ent_re[o]
    v_im = mean_im - model.ent_im[o]
    grads: dict[tuple[str, int], np.ndarray] = {}
    grads[("e", s)] = np.concatenate([c * v_re + d * v_im, c * v_im - d * v_re])
    grads[("r", r)] = np.concatenate([a * v_re + b * v_im, a * v_im - b * v_re])
    q = np.concatenate([a * c - b * d, a * d + b * c])
    target_grad = (probs[o] - 1.0) * q
    grads[("e", o)] = grads.get(("e", o), 0) + target_grad
    return grads


def first_order_score_change(
    model: EmbeddingModel, prediction: Triple, candidate: Triple, step: float
) -> float:
    """Estimated prediction-score change if the candidate were removed.

    One unlearning step of size ``step`` up the candidate's loss gradient,
    propagated through the prediction's score gradient over shared
    embeddings. Candidates sharing no embedding with the prediction yield
    exactly zero; the estimate is linear in the step.
    """
    pred_grads = _score_gradients(model, prediction)
    cand_grads = _loss_gradients(model, candidate)
    total = 0.0
    for key, grad in cand_grads.items():
        if key in pred_grads:
            total += float(np.dot(pred_grads[key], grad))
    return step * total


def criage_first_order(
    kg: KnowledgeGraph,
    model: EmbeddingModel,
    prediction: Triple,
    config: ExplainerConfig,
    train_config: TrainConfig | None = None,
) -> ExplanationRun:
    """Order removals of the object's incoming triples by estimated damage.

    Damage is the first-order influence estimate of the prediction-score
    change (most negative first); each candidate's true effectiveness is
    attached with the configured evaluator for reporting.
    """
    train_config = train_config or TrainConfig()
    started = time.perf_counter()
    meter = RetrainMeter()
    rank_before = rank(model, prediction, kg)
    o_x = prediction.object
    neighbors = sorted(
        t for t in kg.train_adjacency.get(o_x, ()) if t.object == o_x
    )
    if not neighbors:
        logger.warning("prediction object has no incoming training triples")
        return _finish_run(
            "criage-first-order", "necessary", prediction, [], config, meter, started,
            rank_before, warnings=("no eligible neighbors",),
        )

    estimates = [
        (first_order_score_change(model, prediction, t, config.influence_step), t)
        for t in neighbors
    ]
    estimates.sort(key=lambda pair: (pair[0], pair[1]))

    candidates: list[CandidateRecord] = []
    for estimate, t in estimates:
        explanation = CandidateExplanation(frozenset([t]), provenance="shares-entity")
        before = meter.count
        result = effectiveness_necessary(
            kg, model, prediction, explanation, config.evaluator, train_config,
            post_epochs=config.post_train_epochs, meter=meter,
        )
        candidates.append(
            CandidateRecord(explanation, result, meter.count - before, heuristic_score=estimate)
        )
    return _finish_run(
        "criage-first-order", "necessary", prediction, candidates, config, meter, started,
        rank_before,
    )


def prefilter_topk(kg: KnowledgeGraph, prediction: Triple, k: int) -> tuple[Triple, ...]:
    """At most K of the subject's incident triples, nearest endpoints first.

    Triples are ranked by the undirected shortest-path distance from their
    non-subject endpoint to the prediction's object (breadth-first over the
    training graph), ties broken by triple ids. An endpoint equal to the
    object has distance 0 and always ranks first.
    """
    if k < 1:
        raise ConfigurationError("prefilter K must be >= 1")
    s_x = prediction.subject
    incident = sorted(set(kg.train_adjacency.get(s_x, ())))
    if not incident:
        logger.warning("prediction subject %d is isolated in the training graph", s_x)
        return ()

    # single breadth-first pass from the object gives all endpoint distances
    dist = {prediction.object: 0}
    frontier = [prediction.object]
    while frontier:
        next_frontier = []
        for e in frontier:
            for t in kg.train_adjacency.get(e, ()):
                for other in (t.subject, t.object):
                    if other not in dist:
                        dist[other] = dist[e] + 1
                        next_frontier.append(other)
        frontier = next_frontier

    def sort_key(t: Triple) -> tuple[float, Triple]:
        other = t.object if t.subject == s_x else t.subject
        return (dist.get(other, float("inf")), t)

    return tuple(sorted(incident, key=sort_key)[:k])


def variable_length_builder(
    kg: KnowledgeGraph,
    model: EmbeddingModel,
    prediction: Triple,
    mode: str,
    config: ExplainerConfig,
    train_config: TrainConfig | None = None,
    targets: TargetSet | None = None,
) -> ExplanationRun:
    """Grow explanations from singletons up to ``max_length`` (at most 4).

    All singletons from the prefilter are evaluated first; if the best one
    reaches the acceptance threshold the search stops there. Longer
    candidates are then evaluated in order of preliminary relevance, the sum
    of their members' singleton effectiveness, stopping as soon as one
    reaches the threshold. When a length's combination count exceeds the
    evaluation budget, a seeded annealing walk (geometric temperature decay)
    explores that length instead of full enumeration.
    """
    config.validate()
    if not 1 <= config.max_length <= 4:
        raise ConfigurationError("builder max_length must lie in [1, 4]")
    train_config = train_config or TrainConfig()
    started = time.perf_counter()
    meter = RetrainMeter()
    rank_before = rank(model, prediction, kg)

    pool = prefilter_topk(kg, prediction, config.prefilter_k)
    if not pool:
        raise DomainError("builder prefilter produced an empty candidate pool")

    candidates: list[CandidateRecord] = []
    singleton_psi: dict[Triple, float] = {}

    def evaluate(triples: frozenset[Triple], heuristic: float | None = None) -> CandidateRecord:
        explanation = CandidateExplanation(triples, provenance="prefilter-top-k")
        before = meter.count
        result = _evaluate_candidate(
            kg, model, prediction, explanation, mode, config.evaluator, config,
            train_config, targets, meter,
        )
        record = CandidateRecord(explanation, result, meter.count - before, heuristic_score=heuristic)
        candidates.append(record)
        return record

    for t in sorted(pool):
        record = evaluate(frozenset([t]))
        singleton_psi[t] = record.result.psi

    best_psi = max(singleton_psi.values())
    accepted = best_psi >= config.acceptance_threshold

    length = 2
    while not accepted and length <= config.max_length:
        combos = list(itertools.combinations(sorted(pool), length))
        relevance = {combo: sum(singleton_psi[t] for t in combo) for combo in combos}
        ordered = sorted(combos, key=lambda combo: (-relevance[combo], combo))
        if len(ordered) <= config.max_evals_per_length:
            for combo in ordered:
                record = evaluate(frozenset(combo), heuristic=relevance[combo])
                if record.result.psi >= config.acceptance_threshold:
                    accepted = True
                    break
        else:
            accepted = _anneal_length(
                ordered, relevance, evaluate, config
            )
        length += 1

    return _finish_run(
        "variable-length-builder", mode, prediction, candidates, config, meter, started,
        rank_before,
    )


def _anneal_length(
    ordered: list[tuple[Triple, ...]],
    relevance: dict[tuple[Triple, ...], float],
    evaluate,
    config: ExplainerConfig,
) -> bool:
    """Seeded annealing walk over one length's combinations; True if accepted."""
    rng = np.random.default_rng(config.seed)
    universe = sorted({t for combo in ordered for t in combo})
    current = ordered[0]  # start from the top preliminary relevance
    seen = {current}
    record = evaluate(frozenset(current), heuristic=relevance[current])
    if record.result.psi >= config.acceptance_threshold:
        return True
    temperature = config.anneal_initial_temperature
    proposals = 0
    evals = 1
    while evals < config.max_evals_per_length:
        drop = int(rng.integers(len(current)))
        replacements = [t for t in universe if t not in current]
        if not replacements:
            break
        add = replacements[int(rng.integers(len(replacements)))]
        proposal = tuple(sorted(set(current) - {current[drop]} | {add}))
        proposals += 1
        if proposals % config.anneal_proposals == 0:
            temperature *= config.anneal_decay
        gain = relevance[proposal] - relevance[current]
        if gain >= 0 or rng.random() < np.exp(gain / max(temperature, 1e-9)):
            current = proposal
        if proposal not in seen:
            seen.add(proposal)
            evals += 1
            record = evaluate(frozenset(proposal), heuristic=relevance[proposal])
            if record.result.psi >= config.acceptance_threshold:
                return True
    return False

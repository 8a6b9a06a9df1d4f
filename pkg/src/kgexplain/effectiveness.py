"""Effectiveness of candidate explanations under retraining operators.

Four operators are offered, one per explanation mode:

* ``remove-retrain``     (necessary): drop the candidate from training and
  measure how much the prediction's rank worsens.
* ``keep-only-retrain``  (sufficient): relearn from the candidate alone,
  anchored in frozen context, and measure how little the rank degrades.
* ``add-swap-retrain``   (targeted sufficiency): graft the candidate onto
  target entities and measure how much their ranks improve, on average.
* ``add-retrain``        (latent): add unobserved triples and measure the
  rank shift in either direction.

Every mode is signed so that a no-op candidate scores 0 and higher is
better. The base model is never mutated; retraining always happens on a
clone or a fresh initialization, with the original seed, so results are
deterministic.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Iterable, NamedTuple

import numpy as np

from .errors import ConfigurationError, DomainError, TrainingError
from .kg import KnowledgeGraph, Triple
from .model import EmbeddingModel, TrainConfig, init_model, rank, score
from .training import post_train, train

logger = logging.getLogger(__name__)

EVALUATORS = ("full-retrain", "post-train")
OPERATORS = ("remove-retrain", "keep-only-retrain", "add-swap-retrain", "add-retrain")


@dataclass(frozen=True)
class CandidateExplanation:
    """A non-empty set of triples with its search-space provenance."""

    triples: frozenset[Triple]
    provenance: str = "train-all"

    def __post_init__(self) -> None:
        object.__setattr__(self, "triples", frozenset(self.triples))
        if not self.triples:
            raise DomainError("an explanation must contain at least one triple")

    def __len__(self) -> int:
        return len(self.triples)

    def sorted_triples(self) -> tuple[Triple, ...]:
        return tuple(sorted(self.triples))


class TargetOutcome(NamedTuple):
    entity: int
    rank_before: int
    rank_after: int
    psi: float
    skipped: int


@dataclass(frozen=True)
class EffectivenessResult:
    """Signed effectiveness with the ranks and operator that produced it."""

    psi: float
    rank_before: float
    rank_after: float
    operator: str
    evaluator: str
    per_target: tuple[TargetOutcome, ...] | None = None
    warnings: tuple[str, ...] = ()
    score_before: float | None = None
    score_after: float | None = None
    multi_seed: dict | None = None


@dataclass(frozen=True)
class TargetSet:
    """Entities whose completions under the prediction's pattern start below rank 1."""

    entities: tuple[int, ...]
    prediction: Triple


class RetrainMeter:
    """Counts evaluator invocations so runs can report their retrain cost."""

    def __init__(self) -> None:
        self.count = 0

    def tick(self, n: int = 1) -> None:
        self.count += n


def _as_triples(x) -> frozenset[Triple]:
    if isinstance(x, CandidateExplanation):
        return x.triples
    triples = frozenset(x)
    if not triples:
        raise DomainError("an explanation must contain at least one triple")
    return triples


def _ordered_removal(kg: KnowledgeGraph, removed: frozenset[Triple]) -> tuple[Triple, ...]:
    return tuple(t for t in kg.train if t not in removed)


def _ordered_keep(kg: KnowledgeGraph, kept: frozenset[Triple]) -> tuple[Triple, ...]:
    return tuple(t for t in kg.train if t in kept)


def _ordered_addition(kg: KnowledgeGraph, added: Iterable[Triple]) -> tuple[Triple, ...]:
    return kg.train + tuple(sorted(set(added)))


def _neighborhood_entities(kg: KnowledgeGraph, entity: int) -> set[int]:
    near = {entity}
    for t in kg.train_adjacency.get(entity, ()):
        near.add(t.subject)
        near.add(t.object)
    return near


def _incident_relations(kg: KnowledgeGraph, entity: int) -> set[int]:
    return {t.relation for t in kg.train_adjacency.get(entity, ())}


def _retrained(
    kg: KnowledgeGraph,
    base: EmbeddingModel,
    new_train: tuple[Triple, ...],
    evaluator: str,
    config: TrainConfig,
    trainable_entities: set[int] | None = None,
    trainable_relations: set[int] | None = None,
    reinit: bool = False,
    post_epochs: int | None = None,
    meter: RetrainMeter | None = None,
) -> EmbeddingModel:
    if evaluator not in EVALUATORS:
        raise ConfigurationError(f"unknown evaluator: {evaluator!r}")
    if meter is not None:
        meter.tick()
    if evaluator == "full-retrain":
        if not new_train:
            raise TrainingError("degenerate retraining: the modified training set is empty")
        return train(init_model(kg, config), kg.with_train(new_train), config)
    return post_train(
        base,
        kg,
        new_train,
        trainable_entities or set(),
        config,
        epochs=post_epochs,
        trainable_relations=trainable_relations,
        reinit_trainable=reinit,
    )


def _filtered_candidate_count(kg: KnowledgeGraph, prediction: Triple) -> int:
    known = kg.known_objects.get((prediction.subject, prediction.relation), frozenset())
    return kg.num_entities - len(known)


def effectiveness_necessary(
    kg: KnowledgeGraph,
    model: EmbeddingModel,
    prediction: Triple,
    candidate,
    evaluator: str,
    config: TrainConfig,
    *,
    post_epochs: int | None = None,
    relations_trainable: bool = False,
    extra_seeds: tuple[int, ...] = (),
    meter: RetrainMeter | None = None,
) -> EffectivenessResult:
    """Rank change caused by removing the candidate and retraining.

    Positive values mean the prediction degraded, i.e. the candidate was
    load-bearing. Requires the base rank to be below the filtered candidate
    count, otherwise there is no room left to degrade.
    """
    triples = _as_triples(candidate)
    if not triples <= kg.train_set:
        raise DomainError("a necessary explanation must be a subset of the training set")
    rank_before = rank(model, prediction, kg)
    if rank_before >= _filtered_candidate_count(kg, prediction):
        raise DomainError(
            "necessary effectiveness requires the base rank to be below the "
            "filtered candidate count"
        )
    new_train = _ordered_removal(kg, triples)
    trainable = _neighborhood_entities(kg, prediction.subject)
    trainable_rel = _incident_relations(kg, prediction.subject) if relations_trainable else None
    retrained = _retrained(
        kg, model, new_train, evaluator, config,
        trainable_entities=trainable, trainable_relations=trainable_rel,
        post_epochs=post_epochs, meter=meter,
    )
    rank_after = rank(retrained, prediction, kg)
    psi = float(rank_after - rank_before)

    multi_seed = None
    if extra_seeds:
        if evaluator != "full-retrain":
            raise ConfigurationError("multi-seed spread is only defined for full retraining")
        psis = [psi]
        for seed in extra_seeds:
            seeded = replace(config, seed=seed)
            alt = _retrained(kg, model, new_train, evaluator, seeded, meter=meter)
            psis.append(float(rank(alt, prediction, kg) - rank_before))
        multi_seed = {
            "seeds": (config.seed, *extra_seeds),
            "psi_values": tuple(psis),
            "psi_mean": float(np.mean(psis)),
            "psi_sd": float(np.std(psis, ddof=1)) if len(psis) > 1 else 0.0,
        }

    return EffectivenessResult(
        psi=psi,
        rank_before=rank_before,
        rank_after=rank_after,
        operator="remove-retrain",
        evaluator=evaluator,
        multi_seed=multi_seed,
    )


def effectiveness_sufficient(
    kg: KnowledgeGraph,
    model: EmbeddingModel,
    prediction: Triple,
    candidate,
    context_policy: str,
    config: TrainConfig,
    *,
    perturbation: str = "signed",
    post_epochs: int | None = None,
    meter: RetrainMeter | None = None,
) -> EffectivenessResult:
    """How well the candidate alone preserves the prediction's rank.

    ``frozen-neighborhood`` reinitializes the candidate's entities and
    relearns them from the candidate's triples only, against the frozen
    remainder of the trained model; a relation is relearned the same way
    only when the candidate holds its entire training evidence, so shared
    relation geometry stays anchored. ``none`` retrains from scratch on the
    candidate alone; with this scorer that rarely produces meaningful
    embeddings, so the result carries a warning. The default signed measure
    rewards preservation or improvement; ``absolute`` penalizes any rank
    movement.
    """
    triples = _as_triples(candidate)
    if not triples <= kg.train_set:
        raise DomainError("a sufficient explanation must be a subset of the training set")
    if perturbation not in ("signed", "absolute"):
        raise ConfigurationError(f"unknown perturbation measure: {perturbation!r}")
    rank_before = rank(model, prediction, kg)
    kept = _ordered_keep(kg, triples)
    warnings: tuple[str, ...] = ()

    if context_policy == "frozen-neighborhood":
        trainable_entities = {t.subject for t in triples} | {t.object for t in triples}
        support: dict[int, set[Triple]] = {}
        for t in kg.train:
            support.setdefault(t.relation, set()).add(t)
        covered_relations = {r for r, sup in support.items() if sup <= triples}
        retrained = _retrained(
            kg, model, kept, "post-train", config,
            trainable_entities=trainable_entities,
            trainable_relations=covered_relations,
            reinit=True,
            post_epochs=post_epochs if post_epochs is not None else config.epochs,
            meter=meter,
        )
        evaluator = "post-train"
    elif context_policy == "none":
        retrained = _retrained(kg, model, kept, "full-retrain", config, meter=meter)
        warnings = ("training on the candidate alone likely produced meaningless embeddings",)
        evaluator = "full-retrain"
    else:
        raise ConfigurationError(f"unknown context policy: {context_policy!r}")

    rank_after = rank(retrained, prediction, kg)
    diff = float(rank_before - rank_after)
    psi = diff if perturbation == "signed" else -abs(diff)
    return EffectivenessResult(
        psi=psi,
        rank_before=rank_before,
        rank_after=rank_after,
        operator="keep-only-retrain",
        evaluator=evaluator,
        warnings=warnings,
    )


def build_target_set(
    kg: KnowledgeGraph,
    model: EmbeddingModel,
    prediction: Triple,
    size: int,
    seed: int,
) -> TargetSet:
    """Sample entities c != s_x whose (c, r_x, o_x) completion is not top-ranked."""
    if size < 1:
        raise ConfigurationError("target-set size must be >= 1")
    rng = np.random.default_rng(seed)
    order = rng.permutation(kg.num_entities)
    chosen: list[int] = []
    for c in order:
        c = int(c)
        if c == prediction.subject:
            continue
        probe = Triple(c, prediction.relation, prediction.object)
        if rank(model, probe, kg) > 1:
            chosen.append(c)
            if len(chosen) == size:
                break
    if not chosen:
        raise DomainError("no eligible target entities: every candidate completion is top-ranked")
    if len(chosen) < size:
        logger.warning(
            "target set smaller than requested: %d of %d eligible", len(chosen), size
        )
    return TargetSet(entities=tuple(chosen), prediction=prediction)


def _swap_subject(t: Triple, s_x: int, c: int) -> Triple:
    return Triple(
        c if t.subject == s_x else t.subject,
        t.relation,
        c if t.object == s_x else t.object,
    )


def effectiveness_c_sufficient(
    kg: KnowledgeGraph,
    model: EmbeddingModel,
    prediction: Triple,
    candidate,
    targets: TargetSet,
    evaluator: str,
    config: TrainConfig,
    *,
    aggregate: str = "mean",
    normalize_by_new_rank: bool = False,
    batched: bool = False,
    post_epochs: int | None = None,
    meter: RetrainMeter | None = None,
) -> EffectivenessResult:
    """Average rank improvement of target completions after grafting the candidate.

    Every candidate triple must contain the prediction's subject; it is
    swapped for each target entity and the swapped copies are added to the
    training set, retraining once per target (or once in total with
    ``batched``). Per-target outcomes are retained; single targets may
    worsen. ``aggregate`` is ``mean`` or ``all-decrease`` (the minimum, so a
    positive value means every target improved).
    """
    triples = _as_triples(candidate)
    s_x = prediction.subject
    for t in triples:
        if s_x not in (t.subject, t.object):
            raise DomainError(f"candidate triple {t} does not contain the prediction subject")
    if not triples <= kg.train_set:
        raise DomainError("a targeted-sufficiency candidate must be a subset of the training set")
    if aggregate not in ("mean", "all-decrease"):
        raise ConfigurationError(f"unknown aggregate mode: {aggregate!r}")

    swapped: dict[int, list[Triple]] = {}
    skipped: dict[int, int] = {}
    for c in targets.entities:
        kept: list[Triple] = []
        n_skipped = 0
        for t in sorted(triples):
            sw = _swap_subject(t, s_x, c)
            if sw in kg.train_set:
                n_skipped += 1
                logger.info("swapped triple %s already in training set; skipped", sw)
            else:
                kept.append(sw)
        swapped[c] = kept
        skipped[c] = n_skipped

    batched_model = None
    if batched:
        additions = [t for ts in swapped.values() for t in ts]
        if additions:
            trainable = set()
            for c in targets.entities:
                trainable |= _neighborhood_entities(kg, c)
                trainable |= {t.subject for t in swapped[c]} | {t.object for t in swapped[c]}
            batched_model = _retrained(
                kg, model, _ordered_addition(kg, additions), evaluator, config,
                trainable_entities=trainable, post_epochs=post_epochs, meter=meter,
            )

    outcomes: list[TargetOutcome] = []
    for c in targets.entities:
        probe = Triple(c, prediction.relation, prediction.object)
        before = rank(model, probe, kg)
        additions = swapped[c]
        if batched:
            after_model = batched_model if batched_model is not None else model
        elif not additions:
            after_model = model  # nothing to add: the operator is the identity
        else:
            trainable = _neighborhood_entities(kg, c)
            trainable |= {t.subject for t in additions} | {t.object for t in additions}
            after_model = _retrained(
                kg, model, _ordered_addition(kg, additions), evaluator, config,
                trainable_entities=trainable, post_epochs=post_epochs, meter=meter,
            )
        after = rank(after_model, probe, kg)
        psi_c = float(before - after)
        if normalize_by_new_rank:
            psi_c /= max(after - 1, 1)
        outcomes.append(TargetOutcome(c, before, after, psi_c, skipped[c]))

    psis = [o.psi for o in outcomes]
    psi = float(np.mean(psis)) if aggregate == "mean" else float(np.min(psis))
    return EffectivenessResult(
        psi=psi,
        rank_before=float(np.mean([o.rank_before for o in outcomes])),
        rank_after=float(np.mean([o.rank_after for o in outcomes])),
        operator="add-swap-retrain",
        evaluator=evaluator,
        per_target=tuple(outcomes),
    )


def effectiveness_latent(
    kg: KnowledgeGraph,
    model: EmbeddingModel,
    prediction: Triple,
    candidate,
    polarity: str,
    evaluator: str,
    config: TrainConfig,
    *,
    post_epochs: int | None = None,
    meter: RetrainMeter | None = None,
) -> EffectivenessResult:
    """Rank shift from adding unobserved triples and retraining.

    ``positive`` rewards rank improvement (requires base rank > 1);
    ``negative`` rewards degradation (requires base rank below the entity
    count). Either way a higher value is better. Score deltas are reported
    alongside as auxiliary output.
    """
    triples = _as_triples(candidate)
    if triples & kg.train_set:
        raise DomainError("latent explanations must be disjoint from the training set")
    for t in triples:
        if not kg.contains_ids(t):
            raise DomainError(f"latent triple {t} has out-of-range ids")
    rank_before = rank(model, prediction, kg)
    if polarity == "positive":
        if rank_before <= 1:
            raise DomainError("positive latent effectiveness requires base rank > 1")
    elif polarity == "negative":
        if rank_before >= kg.num_entities:
            raise DomainError(
                "negative latent effectiveness requires base rank below the entity count"
            )
    else:
        raise ConfigurationError(f"unknown polarity: {polarity!r}")

    trainable = _neighborhood_entities(kg, prediction.subject)
    trainable |= {t.subject for t in triples} | {t.object for t in triples}
    retrained = _retrained(
        kg, model, _ordered_addition(kg, triples), evaluator, config,
        trainable_entities=trainable, post_epochs=post_epochs, meter=meter,
    )
    rank_after = rank(retrained, prediction, kg)
    psi = float(rank_before - rank_after) if polarity == "positive" else float(rank_after - rank_before)
    return EffectivenessResult(
        psi=psi,
        rank_before=rank_before,
        rank_after=rank_after,
        operator="add-retrain",
        evaluator=evaluator,
        score_before=score(model, prediction),
        score_after=score(retrained, prediction),
    )

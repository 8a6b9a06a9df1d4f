"""Complex-bilinear embedding scorer with filtered ranking.

Embeddings are complex vectors stored as paired real arrays (re, im).
Subject completion is served by materialized reciprocal relations: relation
``r`` owns a twin row ``r + num_relations`` and subject queries are scored
as object queries under the twin. Ranking follows the filtered protocol:
candidates already forming graph triples are excluded, and only strictly
greater scores worsen the rank (ties are optimistic by default).
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DomainError
from .kg import KnowledgeGraph, Triple

MODEL_KINDS = ("complex-bilinear", "translation", "real-bilinear")


@dataclass
class TrainConfig:
    """Hyperparameters for training the scorer.

    Defaults target desk-scale graphs (under ~10k triples); override for
    anything larger. The seed fixes every stochastic choice: initialization
    and batch shuffling draw from independent streams derived from it.
    """

    dimension: int = 32
    epochs: int = 100
    learning_rate: float = 0.1
    reg_weight: float = 1e-3
    batch_size: int = 512
    seed: int = 0
    optimizer: str = "adagrad"
    negative_mode: str = "full-softmax"

    def validate(self) -> None:
        if self.dimension < 1:
            raise ConfigurationError("dimension must be >= 1")
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.learning_rate < 0 or not np.isfinite(self.learning_rate):
            raise ConfigurationError("learning_rate must be finite and >= 0")
        if self.reg_weight < 0 or not np.isfinite(self.reg_weight):
            raise ConfigurationError("reg_weight must be finite and >= 0")
        if self.optimizer != "adagrad":
            raise ConfigurationError(f"unsupported optimizer: {self.optimizer!r}")
        if self.negative_mode != "full-softmax":
            raise ConfigurationError(f"unsupported negative mode: {self.negative_mode!r}")


@dataclass
class EmbeddingModel:
    """Entity and relation embeddings plus bookkeeping.

    Relation arrays hold ``2 * num_relations`` rows: the second half are the
    reciprocal twins used for subject completion. ``history`` carries the
    per-epoch train/validation negative log-likelihood of the last fit.
    """

    ent_re: np.ndarray
    ent_im: np.ndarray
    rel_re: np.ndarray
    rel_im: np.ndarray
    dimension: int
    seed: int
    model_kind: str = "complex-bilinear"
    history: list[dict] = field(default_factory=list)

    @property
    def num_entities(self) -> int:
        return self.ent_re.shape[0]

    @property
    def num_relations(self) -> int:
        return self.rel_re.shape[0] // 2

    def clone(self) -> "EmbeddingModel":
        """Value-independent copy; mutating it never touches the original."""
        return replace(
            self,
            ent_re=self.ent_re.copy(),
            ent_im=self.ent_im.copy(),
            rel_re=self.rel_re.copy(),
            rel_im=self.rel_im.copy(),
            history=list(self.history),
        )

    def assert_finite(self) -> None:
        for arr in (self.ent_re, self.ent_im, self.rel_re, self.rel_im):
            if not np.all(np.isfinite(arr)):
                raise DomainError("model contains non-finite embedding entries")


@dataclass(frozen=True)
class RankedPrediction:
    """A scored triple with its filtered rank."""

    triple: Triple
    score: float
    rank: int
    direction: str = "object"

    def __post_init__(self) -> None:
        if self.rank < 1:
            raise DomainError("rank must be >= 1")


def init_model(
    kg: KnowledgeGraph, config: TrainConfig, model_kind: str = "complex-bilinear"
) -> EmbeddingModel:
    """Draw fresh embeddings, i.i.d. zero-mean with scale 1/sqrt(dimension).

    Deterministic under a fixed seed. Only the complex-bilinear scorer is
    implemented; the other declared kinds raise.
    """
    config.validate()
    if model_kind not in MODEL_KINDS:
        raise ConfigurationError(f"unknown model kind: {model_kind!r}")
    if model_kind != "complex-bilinear":
        raise NotImplementedError(f"model kind {model_kind!r} is declared but not implemented")
    if kg.num_entities == 0 or kg.num_relations == 0:
        raise ConfigurationError("cannot initialize a model over empty dictionaries")
    d = config.dimension
    rng = np.random.default_rng([config.seed, 0])
    scale = 1.0 / np.sqrt(d)
    ent = rng.standard_normal((kg.num_entities, 2 * d)) * scale
    rel = rng.standard_normal((2 * kg.num_relations, 2 * d)) * scale
    return EmbeddingModel(
        ent_re=ent[:, :d].copy(),
        ent_im=ent[:, d:].copy(),
        rel_re=rel[:, :d].copy(),
        rel_im=rel[:, d:].copy(),
        dimension=d,
        seed=config.seed,
    )


def _check_ids(model: EmbeddingModel, triple: Triple) -> None:
    if not (0 <= triple.subject < model.num_entities and 0 <= triple.object < model.num_entities):
        raise DomainError(f"entity id out of range in {triple}")
    if not 0 <= triple.relation < model.num_relations:
        raise DomainError(f"relation id out of range in {triple}")


def score(model: EmbeddingModel, triple: Triple) -> float:
    """Real part of the trilinear product <e_s, w_r, conj(e_o)>."""
    _check_ids(model, triple)
    s, r, o = triple
    a, b = model.ent_re[s], model.ent_im[s]
    c, d = model.rel_re[r], model.rel_im[r]
    e, f = model.ent_re[o], model.ent_im[o]
    return float(np.sum((a * c - b * d) * e + (a * d + b * c) * f))


def score_objects(model: EmbeddingModel, head: int, relation_row: int) -> np.ndarray:
    """Scores of (head, relation_row, e) for every entity e, as one vector.

    ``relation_row`` indexes the doubled relation table, so reciprocal rows
    serve subject completion.
    """
    a, b = model.ent_re[head], model.ent_im[head]
    c, d = model.rel_re[relation_row], model.rel_im[relation_row]
    q_re = a * c - b * d
    q_im = a * d + b * c
    return model.ent_re @ q_re + model.ent_im @ q_im


def rank(
    model: EmbeddingModel,
    triple: Triple,
    kg: KnowledgeGraph,
    direction: str = "object",
    ties: str = "optimistic",
) -> int:
    """Filtered rank of the triple's completion.

    Candidates forming graph triples (any split) are excluded. With the
    default ``optimistic`` tie convention only strictly greater scores count;
    ``pessimistic`` also counts ties against the target.
    """
    _check_ids(model, triple)
    if direction == "object":
        head, rel_row, target = triple.subject, triple.relation, triple.object
        known = kg.known_objects.get((triple.subject, triple.relation), frozenset())
    elif direction == "subject":
        head, rel_row, target = triple.object, triple.relation + model.num_relations, triple.subject
        known = kg.known_subjects.get((triple.object, triple.relation), frozenset())
    else:
        raise ConfigurationError(f"unknown direction: {direction!r}")
    scores = score_objects(model, head, rel_row)
    target_score = scores[target]
    mask = np.ones(model.num_entities, dtype=bool)
    mask[list(known)] = False
    mask[target] = False
    if ties == "optimistic":
        worse = scores[mask] > target_score
    elif ties == "pessimistic":
        worse = scores[mask] >= target_score
    else:
        raise ConfigurationError(f"unknown tie convention: {ties!r}")
    return 1 + int(np.count_nonzero(worse))


def ranked_prediction(
    model: EmbeddingModel, triple: Triple, kg: KnowledgeGraph, direction: str = "object"
) -> RankedPrediction:
    return RankedPrediction(
        triple=triple,
        score=score(model, triple),
        rank=rank(model, triple, kg, direction=direction),
        direction=direction,
    )


def grad_score_wrt_subject(model: EmbeddingModel, triple: Triple) -> np.ndarray:
    """Analytic gradient of the score w.r.t. the subject embedding.

    Returned as 2*dimension reals: first the real coordinates, then the
    imaginary ones. Equals the complex product of the relation with the
    conjugated object, conjugated back into gradient coordinates.
    """
    _check_ids(model, triple)
    r, o = triple.relation, triple.object
    c, d = model.rel_re[r], model.rel_im[r]
    e, f = model.ent_re[o], model.ent_im[o]
    grad_re = c * e + d * f
    grad_im = c * f - d * e
    return np.concatenate([grad_re, grad_im])


def kg_fingerprint(kg: KnowledgeGraph) -> str:
    """Stable hash of dictionaries and splits, used to pair checkpoints."""
    h = hashlib.sha256()
    for label in kg.entity_labels:
        h.update(label.encode("utf-8") + b"\x1f")
    h.update(b"\x1e")
    for label in kg.relation_labels:
        h.update(label.encode("utf-8") + b"\x1f")
    for split in (kg.train, kg.valid, kg.test):
        h.update(b"\x1e")
        for t in split:
            h.update(np.array(t, dtype=np.int64).tobytes())
    return h.hexdigest()


def save_checkpoint(model: EmbeddingModel, kg: KnowledgeGraph, path: str | Path) -> None:
    """Write embeddings plus metadata (graph hash, dimension, seed) to one file."""
    meta = {
        "kg_hash": kg_fingerprint(kg),
        "dimension": model.dimension,
        "seed": model.seed,
        "model_kind": model.model_kind,
    }
    with open(path, "wb") as fh:
        np.savez(
            fh,
            ent_re=model.ent_re,
            ent_im=model.ent_im,
            rel_re=model.rel_re,
            rel_im=model.rel_im,
            meta=np.array(json.dumps(meta, sort_keys=True)),
        )


def load_checkpoint(path: str | Path, kg: KnowledgeGraph) -> EmbeddingModel:
    """Read a checkpoint, verifying it was trained against this graph."""
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta["kg_hash"] != kg_fingerprint(kg):
            raise ConfigurationError(
                "checkpoint does not match the loaded dataset (graph hash differs)"
            )
        return EmbeddingModel(
            ent_re=data["ent_re"],
            ent_im=data["ent_im"],
            rel_re=data["rel_re"],
            rel_im=data["rel_im"],
            dimension=int(meta["dimension"]),
            seed=int(meta["seed"]),
            model_kind=meta["model_kind"],
        )

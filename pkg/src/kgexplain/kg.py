"""Knowledge-graph data model: ingestion, indexing, connectivity, search spaces.

Entities and relations are dense integer ids assigned at load time; labels
only appear at I/O boundaries. All hot paths (ranking, retraining) operate
on ids.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Iterator, NamedTuple

from .errors import ConfigurationError, DatasetParseError, DomainError

logger = logging.getLogger(__name__)

SPLIT_FILES = {"train": "train.txt", "valid": "valid.txt", "test": "test.txt"}

SEARCH_SPACE_PRESETS = (
    "train-all",
    "shares-entity",
    "subject-match",
    "one-hop",
    "wcc",
    "unobserved",
)


class Triple(NamedTuple):
    """A (subject, relation, object) fact with dense integer ids."""

    subject: int
    relation: int
    object: int


@dataclass
class LoadReport:
    """Structured summary of a dataset load."""

    directory: str
    triples_read: dict[str, int] = field(default_factory=dict)
    duplicates_dropped: dict[str, int] = field(default_factory=dict)
    cross_split_dropped: dict[str, int] = field(default_factory=dict)
    unseen_in_train: dict[str, int] = field(default_factory=dict)

    def log(self) -> None:
        for split, n in self.triples_read.items():
            logger.info("load %s: %d triples kept", split, n)
        for split, n in self.duplicates_dropped.items():
            if n:
                logger.warning("load %s: dropped %d duplicate triples", split, n)
        for split, n in self.cross_split_dropped.items():
            if n:
                logger.warning(
                    "load %s: dropped %d triples already present in an earlier split",
                    split,
                    n,
                )
        for split, n in self.unseen_in_train.items():
            if n:
                logger.warning(
                    "load %s: %d triples use entities/relations unseen in train; "
                    "kept in storage but excluded from rank evaluation",
                    split,
                    n,
                )


class _UnionFind:
    """Disjoint sets over dense integer ids with path compression."""

    def __init__(self, n: int) -> None:
        self.parent = list(range(n))
        self.rank = [0] * n

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, x: int, y: int) -> None:
        rx, ry = self.find(x), self.find(y)
        if rx == ry:
            return
        if self.rank[rx] < self.rank[ry]:
            rx, ry = ry, rx
        self.parent[ry] = rx
        if self.rank[rx] == self.rank[ry]:
            self.rank[rx] += 1


class KnowledgeGraph:
    """Immutable triple store with dictionaries, splits, and adjacency indices.

    Instances are safe for concurrent reads. Modified training sets are
    produced as derived views via :meth:`with_train`, never in-place edits;
    the derived view shares the dictionaries and rebuilds its indices lazily.
    """

    def __init__(
        self,
        entity_labels: list[str],
        relation_labels: list[str],
        train: tuple[Triple, ...],
        valid: tuple[Triple, ...] = (),
        test: tuple[Triple, ...] = (),
        load_report: LoadReport | None = None,
    ) -> None:
        self.entity_labels = list(entity_labels)
        self.relation_labels = list(relation_labels)
        self.entity_ids = {label: i for i, label in enumerate(self.entity_labels)}
        self.relation_ids = {label: i for i, label in enumerate(self.relation_labels)}
        self.train = tuple(train)
        self.valid = tuple(valid)
        self.test = tuple(test)
        self.load_report = load_report

    @property
    def num_entities(self) -> int:
        return len(self.entity_labels)

    @property
    def num_relations(self) -> int:
        return len(self.relation_labels)

    @cached_property
    def train_set(self) -> frozenset[Triple]:
        return frozenset(self.train)

    @cached_property
    def all_triples(self) -> frozenset[Triple]:
        return frozenset(self.train) | frozenset(self.valid) | frozenset(self.test)

    def label_triple(self, t: Triple) -> tuple[str, str, str]:
        return (
            self.entity_labels[t.subject],
            self.relation_labels[t.relation],
            self.entity_labels[t.object],
        )

    def triple_from_labels(self, subject: str, relation: str, object_: str) -> Triple:
        try:
            return Triple(
                self.entity_ids[subject],
                self.relation_ids[relation],
                self.entity_ids[object_],
            )
        except KeyError as exc:
            raise DomainError(f"unknown label: {exc.args[0]!r}") from exc

    def contains_ids(self, t: Triple) -> bool:
        return (
            0 <= t.subject < self.num_entities
            and 0 <= t.object < self.num_entities
            and 0 <= t.relation < self.num_relations
        )

    @cached_property
    def adjacency(self) -> dict[int, tuple[Triple, ...]]:
        """Per-entity incident triples over all splits, once per incident entity."""
        return self._build_adjacency(self.train + self.valid + self.test)

    @cached_property
    def train_adjacency(self) -> dict[int, tuple[Triple, ...]]:
        return self._build_adjacency(self.train)

    @staticmethod
    def _build_adjacency(triples: tuple[Triple, ...]) -> dict[int, tuple[Triple, ...]]:
        adj: dict[int, list[Triple]] = {}
        for t in triples:
            adj.setdefault(t.subject, []).append(t)
            if t.object != t.subject:
                adj.setdefault(t.object, []).append(t)
        return {e: tuple(ts) for e, ts in adj.items()}

    @cached_property
    def known_objects(self) -> dict[tuple[int, int], frozenset[int]]:
        """(subject, relation) -> objects appearing in any split.

        Used to build the filtered candidate set for ranking: candidates that
        already form graph triples are excluded.
        """
        known: dict[tuple[int, int], set[int]] = {}
        for t in self.all_triples:
            known.setdefault((t.subject, t.relation), set()).add(t.object)
        return {k: frozenset(v) for k, v in known.items()}

    @cached_property
    def known_subjects(self) -> dict[tuple[int, int], frozenset[int]]:
        """(object, relation) -> subjects appearing in any split."""
        known: dict[tuple[int, int], set[int]] = {}
        for t in self.all_triples:
            known.setdefault((t.object, t.relation), set()).add(t.subject)
        return {k: frozenset(v) for k, v in known.items()}

    @cached_property
    def _train_component_roots(self) -> list[int]:
        uf = _UnionFind(self.num_entities)
        for t in self.train:
            uf.union(t.subject, t.object)
        return [uf.find(e) for e in range(self.num_entities)]

    def eval_split(self, split: str) -> tuple[Triple, ...]:
        """Triples of `split` whose entities and relation all appear in train.

        Triples with unseen components are retained in storage but excluded
        from rank evaluation.
        """
        triples = {"train": self.train, "valid": self.valid, "test": self.test}[split]
        if split == "train":
            return triples
        seen_e = {t.subject for t in self.train} | {t.object for t in self.train}
        seen_r = {t.relation for t in self.train}
        return tuple(
            t
            for t in triples
            if t.subject in seen_e and t.object in seen_e and t.relation in seen_r
        )

    def with_train(self, new_train: Iterator[Triple] | tuple[Triple, ...]) -> "KnowledgeGraph":
        """Derived view with a modified training set (copy-on-write)."""
        return KnowledgeGraph(
            self.entity_labels,
            self.relation_labels,
            tuple(new_train),
            self.valid,
            self.test,
        )


def _parse_split(path: Path) -> list[tuple[str, str, str]]:
    rows: list[tuple[str, str, str]] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise DatasetParseError(
                    f"{path}:{lineno}: expected 3 TAB-separated fields, got {len(fields)}"
                )
            rows.append((fields[0], fields[1], fields[2]))
    return rows


def load_dataset(directory: str | Path) -> KnowledgeGraph:
    """Load a train/valid/test triple directory into an indexed graph.

    Files are UTF-8, one triple per line, three TAB-separated opaque labels.
    Ids are assigned in first-appearance order over train, then valid, then
    test. Duplicate triples within a split, and triples repeating an earlier
    split, are dropped with a warning. valid/test triples whose entities or
    relation never appear in train are flagged in the load report and
    excluded from rank evaluation (but kept in storage).
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise ConfigurationError(f"dataset directory not found: {directory}")

    raw: dict[str, list[tuple[str, str, str]]] = {}
    for split, fname in SPLIT_FILES.items():
        path = directory / fname
        if not path.is_file():
            raise ConfigurationError(f"missing dataset file: {path}")
        raw[split] = _parse_split(path)

    entity_labels: list[str] = []
    entity_ids: dict[str, int] = {}
    relation_labels: list[str] = []
    relation_ids: dict[str, int] = {}

    def entity_id(label: str) -> int:
        if label not in entity_ids:
            entity_ids[label] = len(entity_labels)
            entity_labels.append(label)
        return entity_ids[label]

    def relation_id(label: str) -> int:
        if label not in relation_ids:
            relation_ids[label] = len(relation_labels)
            relation_labels.append(label)
        return relation_ids[label]

    report = LoadReport(directory=str(directory))
    splits: dict[str, tuple[Triple, ...]] = {}
    earlier: set[Triple] = set()
    train_entities: set[int] = set()
    train_relations: set[int] = set()

    for split in ("train", "valid", "test"):
        kept: list[Triple] = []
        seen: set[Triple] = set()
        dup = cross = unseen = 0
        for s, r, o in raw[split]:
            t = Triple(entity_id(s), relation_id(r), entity_id(o))
            if t in seen:
                dup += 1
                continue
            if t in earlier:
                cross += 1
                continue
            seen.add(t)
            kept.append(t)
            if split == "train":
                train_entities.update((t.subject, t.object))
                train_relations.add(t.relation)
            elif (
                t.subject not in train_entities
                or t.object not in train_entities
                or t.relation not in train_relations
            ):
                unseen += 1
        earlier.update(seen)
        splits[split] = tuple(kept)
        report.triples_read[split] = len(kept)
        report.duplicates_dropped[split] = dup
        report.cross_split_dropped[split] = cross
        if split != "train":
            report.unseen_in_train[split] = unseen

    report.log()
    return KnowledgeGraph(
        entity_labels,
        relation_labels,
        splits["train"],
        splits["valid"],
        splits["test"],
        load_report=report,
    )


def weakly_connected_component(kg: KnowledgeGraph, entity: int) -> frozenset[Triple]:
    """All train triples in the component containing `entity`, direction ignored.

    The result is identical for any seed entity inside the same component.
    Computed from a union-find built once per graph and cached.
    """
    if not 0 <= entity < kg.num_entities:
        raise DomainError(f"unknown entity id: {entity}")
    roots = kg._train_component_roots
    root = roots[entity]
    return frozenset(t for t in kg.train if roots[t.subject] == root)


@dataclass(frozen=True)
class SearchSpace:
    """Candidate-triple space defined by an ordered conjunction of constraints.

    Membership equals the conjunction of all constraints. Explicit presets
    enumerate a finite set; the unobserved preset enumerates the complement
    of the training set lazily.
    """

    preset: str
    constraints: tuple[Callable[[Triple], bool], ...]
    _enumerator: Callable[[], Iterator[Triple]]
    lazy: bool = False

    def __contains__(self, t: Triple) -> bool:
        return all(c(t) for c in self.constraints)

    def enumerate(self) -> Iterator[Triple]:
        return self._enumerator()

    def as_set(self) -> frozenset[Triple]:
        return frozenset(self.enumerate())


def _one_hop_entities(kg: KnowledgeGraph, entity: int) -> frozenset[int]:
    near = {entity}
    for t in kg.train_adjacency.get(entity, ()):
        near.add(t.subject)
        near.add(t.object)
    return frozenset(near)


def build_search_space(
    kg: KnowledgeGraph,
    preset: str,
    prediction: Triple | None = None,
) -> SearchSpace:
    """Construct the candidate space named by `preset`.

    Presets over the training set: ``train-all`` (every train triple),
    ``shares-entity`` (an endpoint is the prediction's subject or object),
    ``subject-match`` (subject equals the prediction's subject), ``one-hop``
    (both endpoints within one hop of the prediction's subject), ``wcc``
    (the subject's weakly connected component). ``unobserved`` enumerates
    all possible triples absent from the training set, lazily.
    """
    if preset not in SEARCH_SPACE_PRESETS:
        raise ConfigurationError(
            f"unknown search-space preset {preset!r}; expected one of {SEARCH_SPACE_PRESETS}"
        )
    needs_prediction = preset in ("shares-entity", "subject-match", "one-hop", "wcc")
    if needs_prediction and prediction is None:
        raise ConfigurationError(f"preset {preset!r} requires a prediction triple")

    train_set = kg.train_set
    in_train = lambda t: t in train_set  # noqa: E731

    if preset == "train-all":
        constraints = (in_train,)
    elif preset == "shares-entity":
        anchor = {prediction.subject, prediction.object}
        constraints = (in_train, lambda t: t.subject in anchor or t.object in anchor)
    elif preset == "subject-match":
        s_x = prediction.subject
        constraints = (in_train, lambda t: t.subject == s_x)
    elif preset == "one-hop":
        near = _one_hop_entities(kg, prediction.subject)
        constraints = (in_train, lambda t: t.subject in near and t.object in near)
    elif preset == "wcc":
        component = weakly_connected_component(kg, prediction.subject)
        constraints = (in_train, lambda t: t in component)
    else:  # unobserved
        constraints = (kg.contains_ids, lambda t: t not in train_set)

        def enumerate_unobserved() -> Iterator[Triple]:
            for s in range(kg.num_entities):
                for r in range(kg.num_relations):
                    for o in range(kg.num_entities):
                        t = Triple(s, r, o)
                        if t not in train_set:
                            yield t

        return SearchSpace(preset, constraints, enumerate_unobserved, lazy=True)

    members = tuple(sorted(t for t in train_set if all(c(t) for c in constraints)))
    return SearchSpace(preset, constraints, lambda: iter(members))

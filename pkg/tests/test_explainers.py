"""Search algorithms: exhaustive oracle, gradient heuristics, builder."""
from __future__ import annotations

import itertools
import json

import pytest
from scipy.stats import spearmanr

from kgexplain import (
    DomainError,
    ExplainerConfig,
    KnowledgeGraph,
    TrainConfig,
    Triple,
    build_search_space,
    criage_first_order,
    data_poisoning_direct,
    effectiveness_necessary,
    exhaustive_length1,
    first_order_score_change,
    init_model,
    pareto_front,
    prefilter_topk,
    rank,
    score,
    train,
    variable_length_builder,
)
from kgexplain.effectiveness import CandidateExplanation
from kgexplain.kg import SearchSpace
from kgexplain.training import post_train

from conftest import make_desk_kg, make_random_kg


@pytest.fixture(scope="module")
def setup(tiny_kg, tiny_config, tiny_model):
    prediction = next(t for t in tiny_kg.train if rank(tiny_model, t, tiny_kg) == 1)
    return tiny_kg, tiny_config, tiny_model, prediction


def explicit_space(members, preset="custom"):
    members = tuple(sorted(members))
    member_set = frozenset(members)
    return SearchSpace(preset, (lambda t: t in member_set,), lambda: iter(members))


class TestExhaustive:
    def test_single_member_space_wins_by_vacuity(self, setup):
        kg, config, model, prediction = setup
        space = explicit_space([kg.train[1]])
        run = exhaustive_length1(
            kg, model, prediction, space, "necessary", "post-train",
            ExplainerConfig(), config,
        )
        assert len(run.candidates) == 1
        assert run.best.explanation.triples == {kg.train[1]}

    def test_empty_space_rejected(self, setup):
        kg, config, model, prediction = setup
        with pytest.raises(DomainError):
            exhaustive_length1(
                kg, model, prediction, explicit_space([]), "necessary", "post-train",
                ExplainerConfig(), config,
            )

    def test_larger_space_never_hurts_the_argmax(self, setup):
        kg, config, model, prediction = setup
        small = build_search_space(kg, "subject-match", prediction)
        big = build_search_space(kg, "one-hop", prediction)
        assert small.as_set() <= big.as_set()
        run_small = exhaustive_length1(
            kg, model, prediction, small, "necessary", "post-train", ExplainerConfig(), config
        )
        run_big = exhaustive_length1(
            kg, model, prediction, big, "necessary", "post-train", ExplainerConfig(), config
        )
        assert run_big.best.result.psi >= run_small.best.result.psi

    def test_best_matches_independent_removal_sweep(self):
        kg = make_desk_kg(seed=41, clusters=4, size=10, heldout_per_cluster=2)
        config = TrainConfig(dimension=16, epochs=40, batch_size=256, seed=41)
        model = train(init_model(kg, config), kg, config)
        prediction = next(t for t in kg.eval_split("test") if rank(model, t, kg) == 1)
        space = build_search_space(kg, "shares-entity", prediction)
        run = exhaustive_length1(
            kg, model, prediction, space, "necessary", "post-train",
            ExplainerConfig(), config,
        )
        # independent sweep over the same members, composed from primitives
        base_rank = rank(model, prediction, kg)
        best_psi, best_triple = None, None
        trainable = {prediction.subject}
        for t in kg.train_adjacency[prediction.subject]:
            trainable.update((t.subject, t.object))
        for t in sorted(space.enumerate()):
            modified = tuple(x for x in kg.train if x != t)
            tuned = post_train(model, kg, modified, trainable, config)
            psi = rank(tuned, prediction, kg) - base_rank
            if best_psi is None or psi > best_psi:
                best_psi, best_triple = psi, t
        assert run.best.result.psi == best_psi
        assert run.best.explanation.triples == {best_triple}

    def test_records_every_candidate_and_front_is_subset(self, setup):
        kg, config, model, prediction = setup
        space = build_search_space(kg, "shares-entity", prediction)
        run = exhaustive_length1(
            kg, model, prediction, space, "necessary", "post-train", ExplainerConfig(), config
        )
        assert len(run.candidates) == len(space.as_set())
        evaluated = {c.explanation.triples for c in run.candidates}
        for p in run.front.points:
            assert p.explanation.triples in evaluated

    def test_retrain_count_matches_candidates(self, setup):
        kg, config, model, prediction = setup
        space = build_search_space(kg, "shares-entity", prediction)
        run = exhaustive_length1(
            kg, model, prediction, space, "necessary", "post-train", ExplainerConfig(), config
        )
        assert run.retrain_count == len(run.candidates)


class TestDataPoisoning:
    def test_zero_lambda_orders_by_plain_score(self, setup):
        kg, config, model, prediction = setup
        neighbors = sorted(t for t in kg.train if t.subject == prediction.subject)
        ec = ExplainerConfig(lambda_weight=0.0, top_m=len(neighbors), evaluator="post-train")
        run = data_poisoning_direct(kg, model, prediction, ec, config)
        got = [sorted(c.explanation.triples)[0] for c in run.candidates]
        expected = sorted(neighbors, key=lambda t: (-score(model, t), t))
        assert got == expected

    def test_zero_step_orders_by_scaled_score(self, setup):
        kg, config, model, prediction = setup
        neighbors = sorted(t for t in kg.train if t.subject == prediction.subject)
        ec = ExplainerConfig(
            perturbation_step=0.0, lambda_weight=0.5, top_m=len(neighbors),
            evaluator="post-train",
        )
        run = data_poisoning_direct(kg, model, prediction, ec, config)
        for record in run.candidates:
            t = sorted(record.explanation.triples)[0]
            assert record.heuristic_score == pytest.approx(0.5 * score(model, t))

    def test_never_beats_the_exhaustive_oracle(self, setup):
        kg, config, model, prediction = setup
        ec = ExplainerConfig(top_m=3, evaluator="post-train")
        heuristic = data_poisoning_direct(kg, model, prediction, ec, config)
        space = build_search_space(kg, "shares-entity", prediction)
        oracle = exhaustive_length1(
            kg, model, prediction, space, "necessary", "post-train", ec, config
        )
        assert oracle.best.result.psi >= heuristic.best.result.psi

    def test_isolated_subject_warns_with_empty_run(self, setup):
        kg, config, model, _ = setup
        # entity 11 is a pure sink: never a training subject
        lonely = Triple(11, 0, 0)
        run = data_poisoning_direct(kg, model, lonely, ExplainerConfig(), config)
        assert run.candidates == []
        assert "no eligible neighbors" in run.warnings


class TestCriageFirstOrder:
    def test_disjoint_candidate_has_zero_estimate(self, setup):
        kg, config, model, _ = setup
        estimate = first_order_score_change(model, Triple(0, 0, 1), Triple(5, 1, 7), 0.1)
        assert estimate == 0.0

    def test_estimate_linear_in_step(self, setup):
        kg, config, model, prediction = setup
        candidate = next(t for t in kg.train if t.object == prediction.object)
        one = first_order_score_change(model, prediction, candidate, 0.1)
        two = first_order_score_change(model, prediction, candidate, 0.2)
        assert two == pytest.approx(2 * one, abs=1e-12)

    def test_estimates_correlate_with_post_train_score_changes(self):
        kg = make_desk_kg(seed=43, clusters=3, size=10, heldout_per_cluster=2)
        config = TrainConfig(dimension=16, epochs=40, batch_size=256, seed=43)
        model = train(init_model(kg, config), kg, config)
        prediction = next(t for t in kg.eval_split("test") if rank(model, t, kg) == 1)
        candidates = sorted(
            t for t in kg.train_adjacency[prediction.object] if t.object == prediction.object
        )
        assert len(candidates) >= 5
        estimates, truths = [], []
        trainable = {prediction.subject, prediction.object}
        for t in kg.train_adjacency[prediction.subject]:
            trainable.update((t.subject, t.object))
        for t in kg.train_adjacency[prediction.object]:
            trainable.update((t.subject, t.object))
        for t in candidates:
            estimates.append(first_order_score_change(model, prediction, t, 0.1))
            modified = tuple(x for x in kg.train if x != t)
            tuned = post_train(model, kg, modified, trainable, config, epochs=20)
            truths.append(score(tuned, prediction) - score(model, prediction))
        rho = spearmanr(estimates, truths).statistic
        assert rho > 0

    def test_candidates_ordered_by_estimated_damage(self, setup):
        kg, config, model, prediction = setup
        run = criage_first_order(kg, model, prediction, ExplainerConfig(), config)
        estimates = [c.heuristic_score for c in run.candidates]
        assert estimates == sorted(estimates)

    def test_never_beats_the_exhaustive_oracle(self, setup):
        kg, config, model, prediction = setup
        ec = ExplainerConfig(evaluator="post-train")
        heuristic = criage_first_order(kg, model, prediction, ec, config)
        space = build_search_space(kg, "shares-entity", prediction)
        oracle = exhaustive_length1(
            kg, model, prediction, space, "necessary", "post-train", ec, config
        )
        assert oracle.best.result.psi >= heuristic.best.result.psi


class TestPrefilter:
    def test_returns_all_when_fewer_than_k(self):
        kg = KnowledgeGraph(
            ["a", "b", "c", "d"],
            ["r"],
            (Triple(0, 0, 1), Triple(0, 0, 2), Triple(3, 0, 0)),
        )
        got = prefilter_topk(kg, Triple(0, 0, 1), 10)
        assert set(got) == set(kg.train)

    def test_endpoint_equal_to_object_ranks_first(self):
        kg = KnowledgeGraph(
            ["s", "o", "far", "farther"],
            ["r"],
            (Triple(0, 0, 1), Triple(0, 0, 2), Triple(2, 0, 3)),
        )
        got = prefilter_topk(kg, Triple(0, 0, 1), 10)
        assert got[0] == Triple(0, 0, 1)  # its endpoint is the object itself

    def test_distances_match_bfs_oracle(self):
        kg = make_random_kg(seed=31, n_entities=25, n_relations=2, n_triples=70)
        prediction = kg.train[0]
        s_x, o_x = prediction.subject, prediction.object
        got = prefilter_topk(kg, prediction, 1000)

        # independent breadth-first distances over undirected training edges
        edges = {}
        for t in kg.train:
            edges.setdefault(t.subject, set()).add(t.object)
            edges.setdefault(t.object, set()).add(t.subject)
        dist = {o_x: 0}
        frontier = [o_x]
        while frontier:
            nxt = []
            for e in frontier:
                for nb in edges.get(e, ()):
                    if nb not in dist:
                        dist[nb] = dist[e] + 1
                        nxt.append(nb)
            frontier = nxt

        def key(t):
            other = t.object if t.subject == s_x else t.subject
            return (dist.get(other, float("inf")), t)

        incident = sorted({t for t in kg.train if s_x in (t.subject, t.object)})
        assert list(got) == sorted(incident, key=key)

    def test_isolated_subject_returns_empty(self, caplog):
        kg = KnowledgeGraph(["a", "b", "c"], ["r"], (Triple(1, 0, 2),))
        with caplog.at_level("WARNING"):
            got = prefilter_topk(kg, Triple(0, 0, 1), 5)
        assert got == ()

    def test_k_validation(self):
        kg = KnowledgeGraph(["a", "b"], ["r"], (Triple(0, 0, 1),))
        from kgexplain import ConfigurationError

        with pytest.raises(ConfigurationError):
            prefilter_topk(kg, Triple(0, 0, 1), 0)


class TestBuilder:
    def test_threshold_minus_infinity_stops_after_singletons(self, setup):
        kg, config, model, prediction = setup
        ec = ExplainerConfig(
            max_length=3, prefilter_k=4, acceptance_threshold=float("-inf"),
            evaluator="post-train",
        )
        run = variable_length_builder(kg, model, prediction, "necessary", ec, config)
        assert all(len(c.explanation) == 1 for c in run.candidates)
        assert len(run.candidates) == len(prefilter_topk(kg, prediction, 4))

    def test_threshold_plus_infinity_exhausts_in_relevance_order(self, setup):
        kg, config, model, prediction = setup
        ec = ExplainerConfig(
            max_length=2, prefilter_k=4, acceptance_threshold=float("inf"),
            evaluator="post-train",
        )
        run = variable_length_builder(kg, model, prediction, "necessary", ec, config)
        pool = prefilter_topk(kg, prediction, 4)
        singles = [c for c in run.candidates if len(c.explanation) == 1]
        pairs = [c for c in run.candidates if len(c.explanation) == 2]
        assert len(singles) == len(pool)
        assert len(pairs) == len(list(itertools.combinations(pool, 2)))
        # pairs visited by descending preliminary relevance (sum of member psi)
        singleton_psi = {
            sorted(c.explanation.triples)[0]: c.result.psi for c in singles
        }
        relevances = [
            sum(singleton_psi[t] for t in c.explanation.triples) for c in pairs
        ]
        assert relevances == sorted(relevances, reverse=True)
        assert all(r == pytest.approx(c.heuristic_score) for r, c in zip(relevances, pairs))

    def test_front_is_subset_of_exhaustive_front_up_to_length_two(self, setup):
        kg, config, model, prediction = setup
        ec = ExplainerConfig(
            max_length=2, prefilter_k=4, acceptance_threshold=float("inf"),
            evaluator="post-train",
        )
        run = variable_length_builder(kg, model, prediction, "necessary", ec, config)
        # true front from explicit enumeration of all subsets of the pool
        pool = prefilter_topk(kg, prediction, 4)
        candidates = []
        for length in (1, 2):
            for combo in itertools.combinations(sorted(pool), length):
                explanation = CandidateExplanation(frozenset(combo))
                result = effectiveness_necessary(
                    kg, model, prediction, explanation, "post-train", config
                )
                candidates.append((explanation, result))
        truth = pareto_front(candidates)
        true_points = {(p.length, p.psi, p.explanation.triples) for p in truth.points}
        for p in run.front.points:
            assert (p.length, p.psi, p.explanation.triples) in true_points

    def test_deterministic_under_fixed_seed(self, setup):
        kg, config, model, prediction = setup
        ec = ExplainerConfig(
            max_length=2, prefilter_k=4, acceptance_threshold=5.0, seed=3,
            evaluator="post-train", max_evals_per_length=3,
        )
        a = variable_length_builder(kg, model, prediction, "necessary", ec, config)
        b = variable_length_builder(kg, model, prediction, "necessary", ec, config)
        assert [c.explanation.triples for c in a.candidates] == [
            c.explanation.triples for c in b.candidates
        ]
        assert [c.result.psi for c in a.candidates] == [c.result.psi for c in b.candidates]

    def test_annealing_respects_evaluation_budget(self, setup):
        kg, config, model, prediction = setup
        ec = ExplainerConfig(
            max_length=3, prefilter_k=6, acceptance_threshold=float("inf"),
            max_evals_per_length=5, evaluator="post-train", seed=11,
        )
        run = variable_length_builder(kg, model, prediction, "necessary", ec, config)
        by_length = {}
        for c in run.candidates:
            by_length.setdefault(len(c.explanation), []).append(c)
        for length, records in by_length.items():
            if length >= 2:
                assert len(records) <= 5

    def test_max_length_bound_respected(self, setup):
        kg, config, model, prediction = setup
        ec = ExplainerConfig(
            max_length=2, prefilter_k=4, acceptance_threshold=float("inf"),
            evaluator="post-train",
        )
        run = variable_length_builder(kg, model, prediction, "necessary", ec, config)
        assert max(len(c.explanation) for c in run.candidates) <= 2

    def test_empty_pool_rejected(self, tiny_config, tiny_model, tiny_kg):
        lonely = Triple(11, 0, 0)  # sink entity: no incident training subject edge
        kg2 = KnowledgeGraph(
            tiny_kg.entity_labels, tiny_kg.relation_labels,
            tuple(t for t in tiny_kg.train if 11 not in (t.subject, t.object)),
        )
        with pytest.raises(DomainError):
            variable_length_builder(
                kg2, tiny_model, lonely, "necessary",
                ExplainerConfig(max_length=2, evaluator="post-train"), tiny_config,
            )

    def test_max_length_validation(self, setup):
        kg, config, model, prediction = setup
        with pytest.raises(Exception):
            variable_length_builder(
                kg, model, prediction, "necessary",
                ExplainerConfig(max_length=5), config,
            )


class TestRunSerialization:
    def test_payload_round_trip(self, setup, tmp_path):
        kg, config, model, prediction = setup
        space = build_search_space(kg, "shares-entity", prediction)
        run = exhaustive_length1(
            kg, model, prediction, space, "necessary", "post-train", ExplainerConfig(), config
        )
        path = tmp_path / "run.json"
        run.save(path, kg)
        payload = json.loads(path.read_text())
        assert payload["algorithm"] == "exhaustive-length-1"
        assert payload["prediction"]["ids"] == list(prediction)
        assert len(payload["candidates"]) == len(run.candidates)
        assert payload["counters"]["retrains"] == run.retrain_count
        front_lengths = [p["length"] for p in payload["front"]]
        assert front_lengths == [p.length for p in run.front.points]

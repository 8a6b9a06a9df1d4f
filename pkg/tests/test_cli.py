"""Command-line workflow: train, select, explain, evaluate, pareto."""
from __future__ import annotations

import hashlib
import json

import pytest

from kgexplain import Triple, load_dataset, load_checkpoint, rank
from kgexplain.cli import (
    EXIT_OK,
    EXIT_VALIDATION,
    cmd_evaluate,
    cmd_explain,
    cmd_pareto,
    cmd_select,
    cmd_train,
    main,
    parse_experiment_config,
)

from conftest import make_desk_kg, write_dataset


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Dataset on disk plus a config file pointing at it."""
    root = tmp_path_factory.mktemp("cli")
    kg = make_desk_kg(seed=51, clusters=3, size=8, heldout_per_cluster=3)
    rows = {
        "train": [kg.label_triple(t) for t in kg.train],
        "valid": [kg.label_triple(t) for t in kg.valid],
        "test": [kg.label_triple(t) for t in kg.test],
    }
    data = write_dataset(root / "data", rows["train"], rows["valid"], rows["test"])
    config_path = root / "experiment.ini"
    config_path.write_text(
        f"""[dataset]
path = {data}

[training]
dimension = 16
epochs = 40
learning_rate = 0.1
reg_weight = 0.001
batch_size = 256
seed = 17

[selection]
count = 3
seed = 5
cohort_rank = 1

[explain]
mode = necessary
algorithms = exhaustive-length-1, data-poisoning-direct
search_space = shares-entity
evaluator = post-train
post_train_epochs = 20
simultaneous_removal = true

[output]
directory = {root}/out
"""
    )
    return root, config_path


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def trained(workspace):
    root, config_path = workspace
    config = parse_experiment_config(config_path)
    checkpoint = cmd_train(config, out=root / "out")
    return root, config_path, config, checkpoint


class TestTrain:
    def test_same_config_twice_yields_hash_equal_checkpoints(self, trained, tmp_path):
        root, config_path, config, checkpoint = trained
        second = cmd_train(parse_experiment_config(config_path), out=tmp_path / "again")
        assert sha(checkpoint) == sha(second)

    def test_missing_dataset_fails_validation_before_compute(self, tmp_path):
        bad = tmp_path / "bad.ini"
        bad.write_text("[dataset]\npath = /nowhere/at/all\n")
        assert main(["train", "--config", str(bad)]) == EXIT_VALIDATION
        assert not (tmp_path / "out").exists()

    def test_loss_curve_starts_monotone_decreasing(self, trained):
        root, *_ = trained
        lines = (root / "out" / "loss_curve.csv").read_text().strip().splitlines()
        nll = [float(line.split(",")[1]) for line in lines[1:]]
        assert all(nll[i + 1] < nll[i] for i in range(10))

    def test_config_echoed_verbatim(self, trained, workspace):
        root, config_path, *_ = trained
        assert (root / "out" / "config_echo.ini").read_text() == config_path.read_text()


class TestSelect:
    def test_selection_respects_count_and_cohort(self, trained):
        root, config_path, config, checkpoint = trained
        path = cmd_select(config, checkpoint, out=root / "out")
        data = json.loads(path.read_text())
        assert len(data["triples"]) == 3
        assert all(entry["rank"] == 1 for entry in data["triples"])

    def test_fixed_seed_reproduces_selection(self, trained, tmp_path):
        root, config_path, config, checkpoint = trained
        a = cmd_select(config, checkpoint, out=tmp_path / "a")
        b = cmd_select(config, checkpoint, out=tmp_path / "b")
        assert a.read_text() == b.read_text()

    def test_count_zero_is_validation_error(self, trained, tmp_path):
        root, config_path, config, checkpoint = trained
        import dataclasses

        bad = dataclasses.replace(config, selection_count=0)
        from kgexplain import ConfigurationError

        with pytest.raises(ConfigurationError):
            cmd_select(bad, checkpoint, out=tmp_path / "x")

    def test_small_cohort_returns_all_members_with_warning(self, trained, tmp_path, caplog):
        root, config_path, config, checkpoint = trained
        import dataclasses

        greedy = dataclasses.replace(config, selection_count=10**6)
        with caplog.at_level("WARNING"):
            path = cmd_select(greedy, checkpoint, out=tmp_path / "y")
        data = json.loads(path.read_text())
        assert 0 < len(data["triples"]) < 10**6
        assert any("fewer than the requested" in r.message for r in caplog.records)


@pytest.fixture(scope="module")
def explained(trained):
    root, config_path, config, checkpoint = trained
    selection = cmd_select(config, checkpoint, out=root / "out")
    written = cmd_explain(config, checkpoint, selection, out=root / "out")
    return root, config, checkpoint, selection, written


class TestExplain:
    def test_one_run_file_per_prediction_and_algorithm(self, explained):
        root, config, checkpoint, selection, written = explained
        runs = sorted(p.name for p in (root / "out" / "runs").glob("run_*.json"))
        n = len(json.loads(selection.read_text())["triples"])
        assert len(runs) == n * len(config.algorithms)

    def test_resume_skips_existing_run_files(self, explained):
        root, config, checkpoint, selection, _ = explained
        target = next((root / "out" / "runs").glob("run_exhaustive*_0000.json"))
        sentinel = '{"sentinel": true}'
        original = target.read_text()
        target.write_text(sentinel)
        try:
            cmd_explain(config, checkpoint, selection, out=root / "out")
            assert target.read_text() == sentinel  # untouched: resumed by presence
        finally:
            target.write_text(original)

    def test_worker_pool_produces_identical_run_files(self, explained, tmp_path):
        root, config, checkpoint, selection, _ = explained
        serial_dir = root / "out" / "runs"
        cmd_explain(config, checkpoint, selection, out=tmp_path / "par", workers=2)
        for serial in sorted(serial_dir.glob("run_*.json")):
            parallel = tmp_path / "par" / "runs" / serial.name
            a = json.loads(serial.read_text())
            b = json.loads(parallel.read_text())
            a["counters"].pop("wall_clock_s")
            b["counters"].pop("wall_clock_s")
            assert a == b

    def test_simultaneous_removal_reuses_one_retrained_model(self, explained):
        root, config, checkpoint, selection, _ = explained
        runs_dir = root / "out" / "runs"
        payload = json.loads((runs_dir / "simultaneous_exhaustive-length-1.json").read_text())
        kg = load_dataset(config.dataset_path)
        retrained = load_checkpoint(runs_dir / payload["checkpoint"], kg)
        # every after-rank must come from that single retrained model
        for entry in payload["after_ranks"]:
            assert rank(retrained, Triple(*entry["ids"]), kg) == entry["rank_after"]
        removed = {Triple(*ids) for ids in payload["removed"]}
        assert removed and removed <= kg.train_set


class TestEvaluate:
    def test_reports_and_comparison_written(self, explained, tmp_path):
        root, config, checkpoint, selection, _ = explained
        path = cmd_evaluate(config, selection, root / "out" / "runs", out=tmp_path / "ev")
        rows = json.loads(path.read_text())
        assert {r["algorithm"] for r in rows} == set(config.algorithms)
        mdrs = [r["m_delta_r"] for r in rows]
        assert mdrs == sorted(mdrs, reverse=True)

    def test_flags_agree_with_dominance_oracle(self, explained, tmp_path):
        root, config, checkpoint, selection, _ = explained
        path = cmd_evaluate(config, selection, root / "out" / "runs", out=tmp_path / "ev2")
        rows = json.loads(path.read_text())
        for row in rows:
            dominated = any(
                other["mean_length"] <= row["mean_length"]
                and other["m_delta_r"] >= row["m_delta_r"]
                and (
                    other["mean_length"] < row["mean_length"]
                    or other["m_delta_r"] > row["m_delta_r"]
                )
                for other in rows
                if other is not row
            )
            assert row["pareto_optimal"] == (not dominated)

    def test_byte_identical_reports_across_reruns(self, explained, tmp_path):
        root, config, checkpoint, selection, _ = explained
        a = cmd_evaluate(config, selection, root / "out" / "runs", out=tmp_path / "r1")
        b = cmd_evaluate(config, selection, root / "out" / "runs", out=tmp_path / "r2")
        assert a.read_bytes() == b.read_bytes()
        for report in sorted((tmp_path / "r1").rglob("report*.json")):
            twin = tmp_path / "r2" / report.relative_to(tmp_path / "r1")
            assert report.read_bytes() == twin.read_bytes()

    def test_missing_runs_reported_as_gaps(self, explained, tmp_path):
        root, config, checkpoint, selection, _ = explained
        from kgexplain import ConfigurationError

        with pytest.raises(ConfigurationError, match="missing run files"):
            cmd_evaluate(config, selection, tmp_path / "empty_runs", out=tmp_path / "ev3")


class TestPareto:
    def test_front_export(self, explained, tmp_path):
        root, config, checkpoint, selection, _ = explained
        out = tmp_path / "front.json"
        cmd_pareto(root / "out" / "runs", out)
        fronts = json.loads(out.read_text())
        assert set(fronts) <= set(config.algorithms)
        for points in fronts.values():
            psis = [p["psi"] for p in points]
            lengths = [p["length"] for p in points]
            assert lengths == sorted(lengths)
            # along the front, longer explanations must be strictly more effective
            assert all(b > a for a, b in zip(psis, psis[1:]))

    def test_csv_format(self, explained, tmp_path):
        root, config, checkpoint, selection, _ = explained
        out = tmp_path / "front.csv"
        assert main(["pareto", "--runs", str(root / "out" / "runs"), "--out", str(out), "--format", "csv"]) == EXIT_OK
        header = out.read_text().splitlines()[0]
        assert header == "algorithm,length,psi"


class TestSeedOverride:
    def test_override_applies_to_all_stages(self, workspace):
        root, config_path = workspace
        config = parse_experiment_config(config_path, seed_override=99)
        assert config.train.seed == 99
        assert config.selection_seed == 99
        assert config.explainer.seed == 99

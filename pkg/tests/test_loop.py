import csv
import json

import pytest

from augforge import loop as loop_mod
from augforge.gateway import EndpointConfig
from augforge.loop import (
    EpochAbort,
    LoopConfig,
    run_brute_campaign,
    run_epoch,
    run_loop,
)
from augforge.mockserver import MockLLMServer
from augforge.repository import Repository
from augforge.scheduler import EvalResult, surrogate_evaluate
from tests.conftest import make_brute_record, numbered_code


def seeded_repo(n: int = 8) -> Repository:
    repo = Repository()
    for i in range(n):
        repo.insert(make_brute_record(numbered_code(i), accuracy=0.40 + i / 100))
    return repo


def fixed_evaluator(accuracy: float):
    def _evaluate(code, config):
        return EvalResult(job_id="scripted", accuracy=accuracy)

    return _evaluate


@pytest.fixture(scope="module")
def llm():
    with MockLLMServer() as server:
        yield server


def endpoint_of(server) -> EndpointConfig:
    return EndpointConfig(url=server.url, model="mock", backoff_s=0.01)


class TestLoopConfig:
    def test_defaults(self):
        config = LoopConfig()
        assert config.n_epochs == 28
        assert config.candidates_per_epoch == 10
        assert config.filter_threshold == 0.55
        assert config.prompt_mode == "direct"
        assert config.reference_mode == "fresh"

    def test_json_roundtrip(self):
        config = LoopConfig(n_epochs=3, prompt_mode="cot", filter_threshold=0.6)
        assert LoopConfig.from_json(config.to_json()) == config

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"n_epochs": 0},
            {"candidates_per_epoch": 0},
            {"filter_threshold": 1.5},
            {"prompt_mode": "zen"},
            {"curation_mode": "loose"},
            {"reference_mode": "stale"},
            {"augment_fraction": -0.1},
        ],
    )
    def test_invalid_values(self, kwargs):
        with pytest.raises(ValueError):
            LoopConfig(**kwargs)


class TestRunEpoch:
    def test_stats_shape(self, llm):
        repo = seeded_repo()
        config = LoopConfig(n_epochs=1, candidates_per_epoch=6)
        stats = run_epoch(repo, 0, config, endpoint_of(llm), surrogate_evaluate)
        assert stats.epoch_index == 0
        assert stats.n_generated == 6
        assert 0 <= stats.n_valid <= 6
        assert stats.n_admitted <= stats.n_valid
        assert len(stats.accuracies) == stats.n_valid

    def test_threshold_is_strict_in_loop(self, llm):
        config = LoopConfig(n_epochs=1, candidates_per_epoch=4, filter_threshold=0.55)
        at_threshold = run_epoch(
            seeded_repo(), 0, config, endpoint_of(llm), fixed_evaluator(0.55)
        )
        assert at_threshold.n_admitted == 0
        just_above = run_epoch(
            seeded_repo(), 0, config, endpoint_of(llm), fixed_evaluator(0.55 + 1e-9)
        )
        assert just_above.n_admitted > 0

    def test_records_carry_epoch_provenance(self, llm):
        repo = seeded_repo()
        config = LoopConfig(n_epochs=1, candidates_per_epoch=5)
        run_epoch(repo, 3, config, endpoint_of(llm), surrogate_evaluate)
        llm_records = [r for r in repo.records() if r.source.kind == "llm"]
        assert llm_records
        assert all(r.source.epoch_index == 3 for r in llm_records)
        assert all(r.source.prompt_mode == "direct" for r in llm_records)

    def test_comment_only_completion_recorded_as_invalid(self):
        # Comment-only bodies canonicalize to nothing; the epoch must still
        # record the attempt instead of crashing on the digest.
        repo = seeded_repo()
        config = LoopConfig(
            n_epochs=1, candidates_per_epoch=3, curation_mode="unfiltered"
        )
        with MockLLMServer(mode="echo", echo_text="# nothing useful\n# just notes\n") as echo:
            stats = run_epoch(repo, 0, config, endpoint_of(echo), surrogate_evaluate)
        assert stats.n_valid == 0
        invalid = [r for r in repo.records() if r.validity == "invalid"]
        assert invalid
        assert all(r.code == "<empty completion>" for r in invalid)

    def test_all_transport_failures_abort_without_writes(self):
        repo = seeded_repo()
        before = len(repo)
        config = LoopConfig(n_epochs=1, candidates_per_epoch=3)
        with MockLLMServer(mode="flaky", fail_first=10**6) as flaky:
            endpoint = EndpointConfig(url=flaky.url, model="m", retries=1, backoff_s=0.01)
            with pytest.raises(EpochAbort):
                run_epoch(repo, 0, config, endpoint, surrogate_evaluate)
        assert len(repo) == before

    def test_unreachable_worker_aborts_without_writes(self, llm):
        repo = seeded_repo()
        before = len(repo)
        config = LoopConfig(n_epochs=1, candidates_per_epoch=3)

        def unreachable(code, config_):
            return EvalResult(job_id="x", error_class="worker_unreachable")

        with pytest.raises(EpochAbort):
            run_epoch(repo, 0, config, endpoint_of(llm), unreachable)
        assert len(repo) == before

    def test_unfiltered_mode_stores_failures_at_zero(self, llm):
        repo = seeded_repo()
        config = LoopConfig(n_epochs=1, candidates_per_epoch=8, curation_mode="unfiltered")

        def flaky_eval(code, config_):
            # Deterministically fail some candidates.
            if len(code) % 3 == 0:
                return EvalResult(job_id="x", error_class="runtime_error", detail="boom")
            return surrogate_evaluate(code, config_)

        run_epoch(repo, 0, config, endpoint_of(llm), flaky_eval)
        errored = [r for r in repo.records() if r.error_class == "runtime_error"]
        assert all(r.accuracy == 0.0 for r in errored)

    def test_shared_references_reuse_one_draw(self, llm):
        # In shared mode every slot sees the same prompt, so the mock answers
        # identically; curated insert keeps exactly one new record.
        repo = seeded_repo()
        config = LoopConfig(n_epochs=1, candidates_per_epoch=5, reference_mode="shared")
        run_epoch(repo, 0, config, endpoint_of(llm), surrogate_evaluate)
        new_records = [r for r in repo.records() if r.source.kind == "llm"]
        assert len(new_records) <= 1


class TestRunLoop:
    def test_completes_and_persists(self, tmp_path, llm):
        repo = seeded_repo()
        config = LoopConfig(n_epochs=3, candidates_per_epoch=4)
        seen = []
        result = run_loop(
            tmp_path, config, repo, endpoint_of(llm), surrogate_evaluate, on_epoch=seen.append
        )
        assert result.epochs_completed == 3
        assert not result.aborted
        assert [s.epoch_index for s in seen] == [0, 1, 2]

        with (tmp_path / "stats.csv").open() as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == list(loop_mod.STATS_HEADER)
        assert len(rows) == 4

        for i in range(3):
            assert (tmp_path / "datasets" / f"epoch_{i:03d}.jsonl").exists()
            job = json.loads((tmp_path / "finetune" / f"epoch_{i:03d}.json").read_text())
            assert job["lora"] == loop_mod.LORA_HYPERPARAMETERS
            assert job["training"] == loop_mod.TRAINING_HYPERPARAMETERS
        assert (tmp_path / "manifest.json").exists()
        assert (tmp_path / "summary.json").exists()

    def test_manifest_carries_replayable_config(self, tmp_path, llm):
        config = LoopConfig(n_epochs=2, candidates_per_epoch=3, prompt_mode="cot")
        run_loop(tmp_path, config, seeded_repo(), endpoint_of(llm), surrogate_evaluate)
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert LoopConfig.from_json(manifest["config"]) == config
        assert manifest["endpoint"]["url"] == llm.url

    def test_abort_keeps_completed_epochs(self, tmp_path):
        repo = seeded_repo()
        config = LoopConfig(n_epochs=5, candidates_per_epoch=3)
        calls = {"n": 0}

        def dying_evaluator(code, config_):
            calls["n"] += 1
            if calls["n"] > 5:
                return EvalResult(job_id="x", error_class="worker_unreachable")
            return surrogate_evaluate(code, config_)

        with MockLLMServer() as server:
            result = run_loop(
                tmp_path, config, repo, endpoint_of(server), dying_evaluator
            )
        assert result.aborted
        assert 0 < result.epochs_completed < 5
        rows = (tmp_path / "stats.csv").read_text().splitlines()
        assert len(rows) == 1 + result.epochs_completed
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["aborted"] is True
        assert "unreachable" in summary["abort_reason"]

    def test_epoch_stats_match_store_content(self, tmp_path, llm):
        repo = seeded_repo()
        config = LoopConfig(n_epochs=2, candidates_per_epoch=5)
        result = run_loop(tmp_path, config, repo, endpoint_of(llm), surrogate_evaluate)
        for stats in result.stats:
            epoch_records = [
                r
                for r in repo.records()
                if r.source.kind == "llm" and r.source.epoch_index == stats.epoch_index
            ]
            evaluated = [r for r in epoch_records if r.accuracy is not None]
            assert len(evaluated) <= stats.n_valid  # duplicates are evaluated but not stored
            admitted = [
                r for r in evaluated if r.accuracy > config.filter_threshold
            ]
            assert len(admitted) == stats.n_admitted

    def test_density_files_written_for_enough_samples(self, tmp_path, llm):
        config = LoopConfig(n_epochs=3, candidates_per_epoch=6)
        run_loop(tmp_path, config, seeded_repo(), endpoint_of(llm), surrogate_evaluate)
        summary = json.loads((tmp_path / "summary.json").read_text())
        if summary["early"]:
            early = json.loads((tmp_path / summary["early"]).read_text())
            assert len(early["grid"]) == len(early["density"]) == 512

    def test_rerun_reproduces_stats_bytes(self, tmp_path):
        def one(base):
            repo = Repository(base / "store.jsonl")
            run_brute_campaign(base, (1,), 8, seed=3, repo=repo, evaluate="surrogate")
            with MockLLMServer() as server:
                config = LoopConfig(n_epochs=3, candidates_per_epoch=4)
                run_loop(base / "run", config, repo, endpoint_of(server), surrogate_evaluate)
            return (base / "run" / "stats.csv").read_bytes()

        a = tmp_path / "a"
        b = tmp_path / "b"
        a.mkdir(), b.mkdir()
        assert one(a) == one(b)


class TestBruteCampaign:
    def test_counts_files_and_validation(self, tmp_path):
        repo = Repository()
        report = run_brute_campaign(tmp_path, (1, 2), 15, seed=4, repo=repo, evaluate="none")
        assert report.total == 30
        assert report.validated == 30
        assert len(repo) == 30
        files = list((tmp_path / "transforms").glob("bf_*.txt"))
        assert len(files) == 30
        manifest = json.loads((tmp_path / "brute_manifest.json").read_text())
        assert manifest["total_records"] == 30
        assert manifest["seed"] == 4

    def test_surrogate_evaluation_fills_accuracies(self, tmp_path):
        repo = Repository()
        report = run_brute_campaign(tmp_path, (1,), 10, seed=4, repo=repo, evaluate="surrogate")
        assert report.evaluated == 10
        assert all(r.accuracy is not None for r in repo.records())

    def test_collisions_still_stored(self, tmp_path):
        # The campaign is a census: records whose parameters collide after
        # canonicalization are kept, so counts stay exact.
        repo = Repository()
        run_brute_campaign(tmp_path, (1,), 400, seed=4, repo=repo, evaluate="none")
        assert len(repo) == 400

    def test_bad_arguments(self, tmp_path):
        with pytest.raises(ValueError):
            run_brute_campaign(tmp_path, (1,), 5, seed=0, repo=Repository(), evaluate="psychic")
        with pytest.raises(ValueError):
            run_brute_campaign(tmp_path, (1,), 5, seed=0, repo=Repository(), evaluate="worker")

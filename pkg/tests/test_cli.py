import json
import os
from pathlib import Path

import pytest

from scholarpipe import cli, config as config_mod
from scholarpipe.errors import ConfigError
from scholarpipe.semclass import StrategyKind


class TestConfigParsing:
    def test_minimal(self, tmp_path, fixture_dir):
        cfg = tmp_path / "p.cfg"
        cfg.write_text(
            f"corpus = {fixture_dir / 'corpus.jsonl'}\noutput_dir = out\n# comment\n",
            encoding="utf-8",
        )
        parsed = config_mod.load_config(cfg)
        assert parsed.output_dir == tmp_path / "out"  # relative to config dir
        assert parsed.strategy is StrategyKind.BASELINE
        assert parsed.mock_backend is True

    def test_unknown_key(self, tmp_path, fixture_dir):
        cfg = tmp_path / "p.cfg"
        cfg.write_text(f"corpus = {fixture_dir / 'corpus.jsonl'}\noutput_dir = o\nbogus = 1\n")
        with pytest.raises(ConfigError):
            config_mod.load_config(cfg)

    def test_missing_required(self, tmp_path):
        cfg = tmp_path / "p.cfg"
        cfg.write_text("output_dir = o\n")
        with pytest.raises(ConfigError):
            config_mod.load_config(cfg)

    def test_nonexistent_input_path(self, tmp_path):
        cfg = tmp_path / "p.cfg"
        cfg.write_text("corpus = /does/not/exist.jsonl\noutput_dir = o\n")
        with pytest.raises(ConfigError):
            config_mod.load_config(cfg)

    def test_endpoint_env_override(self, tmp_path, fixture_dir, monkeypatch):
        monkeypatch.setenv(config_mod.ENDPOINT_ENV, "http://example.invalid/v1")
        cfg = tmp_path / "p.cfg"
        cfg.write_text(
            f"corpus = {fixture_dir / 'corpus.jsonl'}\noutput_dir = o\n"
            "backend_endpoint = http://other.invalid/v1\n",
        )
        assert config_mod.load_config(cfg).backend_endpoint == "http://example.invalid/v1"

    def test_remote_backend_requires_endpoint(self, tmp_path, fixture_dir):
        cfg = tmp_path / "p.cfg"
        cfg.write_text(
            f"corpus = {fixture_dir / 'corpus.jsonl'}\noutput_dir = o\nmock_backend = false\n",
        )
        with pytest.raises(ConfigError):
            config_mod.load_config(cfg)


class TestExitCodes:
    def test_config_error_is_2(self, tmp_path):
        cfg = tmp_path / "p.cfg"
        cfg.write_text("corpus = /does/not/exist\noutput_dir = o\n")
        assert cli.main(["run-all", "--config", str(cfg)]) == cli.EXIT_CONFIG

    def test_run_all_ok_is_0(self, make_config):
        assert cli.main(["run-all", "--config", str(make_config("ok"))]) == cli.EXIT_OK

    def test_stage_failure_is_3(self, tmp_path, fixture_dir):
        cfg = tmp_path / "p.cfg"
        cfg.write_text(
            f"corpus = {fixture_dir / 'corpus.jsonl'}\noutput_dir = {tmp_path / 'out'}\n",
        )
        # geo needs a population table that was never configured
        assert cli.main(["geo", "--config", str(cfg)]) == cli.EXIT_STAGE

    def test_backend_exhausted_is_4(self, tmp_path, fixture_dir):
        cfg = tmp_path / "p.cfg"
        cfg.write_text(
            f"corpus = {fixture_dir / 'corpus.jsonl'}\noutput_dir = {tmp_path / 'out'}\n"
            "mock_backend = false\n"
            "backend_endpoint = http://127.0.0.1:9/v1/chat\n"
            "backend_retries = 0\nbackend_timeout = 0.2\n",
        )
        assert cli.main(["classify", "--config", str(cfg)]) == cli.EXIT_BACKEND


class TestStaging:
    def test_second_run_is_cached(self, make_config, capsys):
        cfg = make_config("cache")
        assert cli.main(["run-all", "--config", str(cfg)]) == 0
        capsys.readouterr()
        assert cli.main(["run-all", "--config", str(cfg)]) == 0
        out = capsys.readouterr().out
        assert "fresh" not in out
        assert out.count("cached") == 8

    def test_stage_restriction(self, make_config, capsys):
        cfg = make_config("restrict")
        assert cli.main(["run-all", "--config", str(cfg), "--stage", "ingest"]) == 0
        out = capsys.readouterr().out
        assert out.strip() == "ingest: fresh"

    def test_input_change_invalidates_downstream(self, make_config, tmp_path, fixture_dir):
        cfg = make_config("invalidate")
        assert cli.main(["classify", "--config", str(cfg)]) == 0
        out_dir = Path(config_mod.load_config(cfg).output_dir)
        results = out_dir / "classifications_baseline.jsonl"
        n_before = len(results.read_text().splitlines())

        # A different seed changes the classify input hash: the stale
        # checkpoint must be discarded, not resumed.
        assert cli.main(["classify", "--config", str(cfg), "--seed", "99"]) == 0
        lines = results.read_text().splitlines()
        ids = [json.loads(l)["work_id"] for l in lines]
        assert len(ids) == n_before
        assert len(set(ids)) == len(ids)  # no duplicated work ids after rebuild

    def test_classify_checkpoint_resume_across_invocations(self, make_config):
        cfg = make_config("resume")
        parsed = config_mod.load_config(cfg)
        assert cli.main(["ingest", "--config", str(cfg)]) == 0
        out_dir = Path(parsed.output_dir)
        results = out_dir / "classifications_baseline.jsonl"

        # Seed the checkpoint with a prefix, as if a prior run was killed.
        from scholarpipe.backends import MockBackend
        from scholarpipe.pipeline import Pipeline
        from scholarpipe import corpus, semclass
        pipe = Pipeline(config_mod.load_config(cfg))
        works = list(corpus.load_normalized(out_dir / "normalized.jsonl"))
        gen = semclass.run_campaign(works, pipe._strategy(), MockBackend(pipe._matcher()), results)
        for _ in range(100):
            next(gen)
        gen.close()
        assert len(results.read_text().splitlines()) == 100

        stats_path = out_dir / "classifications_baseline.jsonl"
        assert cli.main(["classify", "--config", str(cfg)]) == 0
        lines = stats_path.read_text().splitlines()
        assert len(lines) == 1000
        ids = [json.loads(l)["work_id"] for l in lines]
        assert len(set(ids)) == 1000


class TestValidateCommand:
    def test_agreement_output(self, make_config, capsys):
        cfg = make_config("validate")
        assert cli.main(["classify", "--config", str(cfg)]) == 0
        out_dir = Path(config_mod.load_config(cfg).output_dir)
        coder_csv = out_dir / "coders.csv"
        # Three coders unanimously matching the planted machine labels.
        rows = ["work_id,coder_id,q1,q2"]
        for wid, q1, q2 in [("W0000", 1, 1), ("W0012", 1, 0), ("W0055", 0, 0)]:
            rows += [f"{wid},c{k},{q1},{q2}" for k in range(1, 4)]
        coder_csv.write_text("\n".join(rows) + "\n", encoding="utf-8")
        capsys.readouterr()
        assert cli.main([
            "validate", "--config", str(cfg),
            "--coder-labels", str(coder_csv), "--question", "q1",
        ]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["precision"] == 100.0
        assert report["recall"] == 100.0
        assert report["kripp_alpha"] == 1.0
        assert report["n"] == 3

    def test_validate_without_classifications(self, make_config):
        cfg = make_config("novalidate")
        out_dir = Path(config_mod.load_config(cfg).output_dir)
        csv_path = out_dir.parent / "c.csv"
        csv_path.write_text("work_id,coder_id,q1,q2\n", encoding="utf-8")
        assert cli.main([
            "validate", "--config", str(cfg), "--coder-labels", str(csv_path),
        ]) == cli.EXIT_STAGE

from __future__ import annotations

import json

import pytest
import yaml
from click.testing import CliRunner

from revstrike.cli import main
from revstrike.grammar import BUILTIN_GRAMMAR_TEXT
from revstrike.orchestrator import run_phase1, run_phase2

from conftest import fixture_config, mock_adapter


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def cli_campaign(tmp_path_factory):
    campaign_dir = tmp_path_factory.mktemp("cli") / "camp"
    config = fixture_config(campaign_dir, rounds=2)
    config = config.model_copy(update={"adapters": [mock_adapter("echoing", 2)]})
    run_phase1(config, notice=False)
    run_phase2(config, notice=False)
    return str(campaign_dir)


class TestInformational:
    def test_payloads_list(self, runner):
        result = runner.invoke(main, ["payloads", "list"])
        assert result.exit_code == 0
        assert "img-onerror" in result.output
        assert "len=37" in result.output

    def test_grammar_export_matches_builtin(self, runner):
        result = runner.invoke(main, ["grammar", "export"])
        assert result.exit_code == 0
        assert result.output == BUILTIN_GRAMMAR_TEXT

    def test_payloads_export_round_trips(self, runner):
        from revstrike.payloads import builtin_payloads, load_payloads

        result = runner.invoke(main, ["payloads", "export"])
        assert result.exit_code == 0
        assert load_payloads(result.output) == builtin_payloads()

    def test_grammar_validate_builtin(self, runner):
        result = runner.invoke(main, ["grammar", "validate"])
        assert result.exit_code == 0
        assert "valid" in result.output

    def test_grammar_validate_bad_file(self, runner, tmp_path):
        path = tmp_path / "bad.pcfg"
        path.write_text('start R\nR 1 A B C D\nA 0.7 "a"\nA 0.7 "b"\nB 1 "b"\nC 1 "c"\nD 1 "d"\n')
        result = runner.invoke(main, ["grammar", "validate", str(path)])
        assert result.exit_code == 1
        assert "distribution-excess" in result.output


class TestCampaignCommands:
    def test_audit(self, runner, cli_campaign):
        result = runner.invoke(main, ["audit", "--campaign", cli_campaign])
        assert result.exit_code == 0, result.output
        assert "clean" in result.output

    def test_summarize_exit_code(self, runner, cli_campaign):
        result = runner.invoke(main, ["summarize", "--campaign", cli_campaign])
        assert result.exit_code == 2
        assert "echoing" in result.output

    def test_analyze_writes_artifacts(self, runner, cli_campaign):
        result = runner.invoke(main, ["analyze", "--campaign", cli_campaign])
        assert result.exit_code == 0, result.output
        import pathlib

        assert (pathlib.Path(cli_campaign) / "stats.ndjson").exists()
        assert (pathlib.Path(cli_campaign) / "correlation_tainted.csv").exists()

    def test_audit_flags_tampering_and_exits_nonzero(self, runner, cli_campaign, tmp_path):
        import shutil

        tampered = tmp_path / "tampered"
        shutil.copytree(cli_campaign, tampered)
        path = tampered / "tainted.ndjson"
        line = json.loads(path.read_text().split("\n")[0])
        line["round"] = 424242
        path.write_text(json.dumps(line) + "\n")
        result = runner.invoke(main, ["audit", "--campaign", str(tampered)])
        assert result.exit_code == 1
        assert "mutated-record" in result.output

    def test_campaign_dir_from_environment(self, runner, cli_campaign, monkeypatch):
        monkeypatch.setenv("REVSTRIKE_CAMPAIGN_DIR", cli_campaign)
        result = runner.invoke(main, ["audit"])
        assert result.exit_code == 0

    def test_missing_campaign_dir_is_an_error(self, runner, monkeypatch):
        monkeypatch.delenv("REVSTRIKE_CAMPAIGN_DIR", raising=False)
        result = runner.invoke(main, ["audit"])
        assert result.exit_code != 0
        assert "campaign" in result.output


class TestServeCommand:
    def test_phase1_stub_starts_and_stops(self, runner, tmp_path, monkeypatch):
        import revstrike.cli as cli_module

        def interrupt(_seconds):
            raise KeyboardInterrupt

        monkeypatch.setattr(cli_module.time, "sleep", interrupt)
        result = runner.invoke(
            main,
            [
                "serve",
                "--mode",
                "phase1",
                "--bind",
                "127.0.0.1:0",
                "--campaign",
                str(tmp_path / "camp"),
                "--campaign-id",
                "serve-test",
                "--seed",
                "3",
            ],
        )
        assert result.exit_code == 0, result.output
        assert "serving phase1" in result.output
        assert "stub stopped" in result.output


class TestPhaseCommands:
    def test_phase1_and_phase2_from_config_file(self, runner, tmp_path):
        campaign_dir = tmp_path / "camp"
        config = fixture_config(campaign_dir, rounds=2)
        config = config.model_copy(update={"adapters": [mock_adapter("echoing", 2)]})
        config_path = tmp_path / "campaign.yaml"
        config_path.write_text(yaml.safe_dump(config.model_dump()))

        result = runner.invoke(main, ["phase1", "--config", str(config_path)])
        assert result.exit_code == 0, result.output
        assert "tainted flows" in result.output

        result = runner.invoke(main, ["phase2", "--config", str(config_path)])
        assert result.exit_code == 0, result.output
        assert "confirmed" in result.output

    def test_stats_file_is_valid_ndjson(self, runner, cli_campaign):
        runner.invoke(main, ["analyze", "--campaign", cli_campaign])
        import pathlib

        lines = (pathlib.Path(cli_campaign) / "stats.ndjson").read_text().strip().split("\n")
        assert len(lines) == 14
        fields = [json.loads(line)["field"] for line in lines]
        assert "Server" in fields and "Body" in fields

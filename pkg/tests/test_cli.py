import json

import pytest

from coedlab.cli import main
from coedlab.repro import REPRO_NAMES, scenario_path


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestRepro:
    def test_fig1_ot(self, capsys):
        code, out, _ = run_cli(capsys, "repro", "fig1-ot")
        assert code == 0
        assert "PASS" in out
        assert "'ace'" in out or "ace" in out

    def test_infloop_flags_expected_fail_but_exits_zero(self, capsys):
        code, out, _ = run_cli(capsys, "repro", "logoot-infloop")
        assert code == 0
        assert "EXPECTED-FAIL" in out

    @pytest.mark.parametrize("name", sorted(REPRO_NAMES))
    def test_every_registered_name_succeeds(self, capsys, name):
        code, out, _ = run_cli(capsys, "repro", name)
        assert code == 0, out

    def test_unknown_name_is_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run_cli(capsys, "repro", "nope")
        assert exc.value.code == 2


class TestRun:
    def test_missing_file_usage_error(self, capsys):
        code, _, err = run_cli(capsys, "run", "missing.json")
        assert code == 2
        assert "usage" in err

    def test_run_scenario_file(self, capsys):
        code, out, _ = run_cli(capsys, "run", str(scenario_path("fig1-ot")))
        assert code == 0
        assert "pass" in out

    def test_engine_override(self, capsys):
        code, out, _ = run_cli(capsys, "run", str(scenario_path("fig1-ot")), "--engine", "woot")
        assert code == 0

    def test_anomalous_run_exits_one(self, capsys):
        code, out, _ = run_cli(capsys, "run", str(scenario_path("logoot-interleave")))
        assert code == 1
        assert "interleav" in out

    def test_json_report_round_trips(self, capsys):
        from coedlab.harness import Report

        code, out, _ = run_cli(capsys, "--format", "json", "run", str(scenario_path("fig1-ot")))
        assert code == 0
        parsed = Report.from_json(json.loads(out))
        assert parsed.converged
        assert json.dumps(parsed.to_json(), sort_keys=True) == out.strip()

    def test_identical_invocations_byte_identical(self, capsys):
        args = ("--format", "json", "run", str(scenario_path("fig1-woot")), "--schedule-seed", "9")
        _, first, _ = run_cli(capsys, *args)
        _, second, _ = run_cli(capsys, *args)
        assert first == second


class TestOracle:
    def test_sound_scenario_passes(self, capsys):
        code, out, _ = run_cli(capsys, "oracle", str(scenario_path("fig1-woot")))
        assert code == 0
        assert "pass" in out

    def test_divergent_scenario_fails(self, capsys):
        code, out, _ = run_cli(capsys, "oracle", str(scenario_path("dopt")))
        assert code == 1
        assert "fail" in out


class TestFuzz:
    def test_small_sound_fuzz(self, capsys):
        code, out, _ = run_cli(
            capsys, "fuzz", "--engine", "woot", "--iterations", "25", "--seed", "3"
        )
        assert code == 0
        assert "pass" in out

    def test_fuzz_catches_broken_engine(self, capsys):
        code, out, _ = run_cli(
            capsys, "fuzz", "--engine", "ot-arbitrary", "--iterations", "40", "--seed", "5"
        )
        assert code == 1
        assert "minimal witness" in out


class TestBench:
    def test_bench_config_file(self, capsys, tmp_path):
        cfg = tmp_path / "bench.json"
        cfg.write_text(
            json.dumps(
                {
                    "engine": "woot",
                    "doc_sizes": [50, 200],
                    "repetitions": 3,
                    "space_trace": {"visible": 10, "deletes": 30},
                }
            )
        )
        code, out, _ = run_cli(capsys, "bench", str(cfg))
        assert code == 0
        assert "woot" in out and "space:" in out

    def test_bench_json_lines(self, capsys, tmp_path):
        cfg = tmp_path / "bench.json"
        cfg.write_text(json.dumps({"engine": "ot-seq", "doc_sizes": [50], "concurrency": [0, 2]}))
        code, out, _ = run_cli(capsys, "--format", "json", "bench", str(cfg))
        assert code == 0
        for line in out.strip().splitlines():
            json.loads(line)

    def test_missing_config_usage_error(self, capsys):
        code, _, err = run_cli(capsys, "bench", "missing.json")
        assert code == 2

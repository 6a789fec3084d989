from pathlib import Path

import pytest

from poses_verify import cli, formats, verify, world
from poses_verify.cli import EXIT_FAILS, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE
from poses_verify.world import ScenarioConfig, UniformPayoff, Vehicle

GOLDEN = Path(__file__).parent / "golden" / "measure_table.txt"


def squash(text):
    return [line.split() for line in text.splitlines() if line.strip()]


def decoy_config():
    return ScenarioConfig(
        vehicles=[Vehicle((100.0, 500.0), (10.0, 0.0)),
                  Vehicle((100.0, 510.0), (10.0, 0.0),
                          {k: (100.0 + 10 * k, 510.0 + 6 * (k - 8)) for k in range(9, 20)})],
        payoff_model=UniformPayoff(1.0, 2.0), seed=3)


@pytest.fixture
def scenario_file(tmp_path):
    path = tmp_path / "s.cfg"
    path.write_text(formats.scenario_to_text(world.generate(decoy_config())))
    return path


class TestParse:
    def test_verify(self):
        spec = cli.parse_args(["verify", "--scenario", "s.cfg", "--attack", "6:8",
                               "--property", "robustness", "--epsilon", "120"])
        assert (spec.command, spec.attack, spec.property, spec.epsilon) == \
            ("verify", (6, 8), verify.Kind.ROBUSTNESS, 120.0)
        assert spec.scenario_path == "s.cfg" and not spec.monitor and not spec.joint

    def test_flags(self):
        spec = cli.parse_args(["verify", "--scenario", "s", "--attack", "2:3", "--joint",
                               "--monitor", "--property", "resilience", "--dist-max-window", "2:3",
                               "--format", "table-text", "-o", "out.txt"])
        assert spec.joint and spec.monitor and spec.dist_max_window == (2, 3)
        assert spec.property is verify.Kind.RESILIENCE and spec.format == "table-text"
        assert spec.output_path == "out.txt"

    @pytest.mark.parametrize("argv", [
        ["verify", "--attack", "6:8"],
        ["verify", "--scenario", "s", "--attack", "8:6"],
        ["verify", "--scenario", "s", "--attack", "0:2"],
        ["verify", "--scenario", "s", "--attack", "six"],
        ["verify", "--scenario", "s", "--attack", "1:2", "--epsilon", "-1"],
        ["verify", "--scenario", "s", "--attack", "1:2", "--property", "safety"],
        ["unfold", "--scenario", "s", "--attack", "1:2", "--cap", "0"],
        ["knapsack", "--max-items", "40"],
        ["frobnicate"],
        [],
    ])
    def test_usage_errors(self, argv):
        with pytest.raises(cli.UsageError):
            cli.parse_args(argv)

    def test_main_reports_usage(self, capsys):
        assert cli.main(["verify", "--attack", "8:6"]) == EXIT_USAGE
        assert "usage" in capsys.readouterr().err


class TestRun:
    def test_reproduce_tables(self, capsys):
        assert cli.main(["reproduce-tables"]) == EXIT_OK
        report = formats.report_from_text(capsys.readouterr().out)
        rob, res = report.results
        assert (rob.sol_opt, rob.theta_star, rob.rho_star.label) == (6.81, 3.1, "10")
        assert (res.sol_opt, res.theta_star, res.rho_star.label) == (53.65, 30.51, "5")

    def test_golden_table(self, capsys):
        assert cli.main(["reproduce-tables", "--format", "table-text"]) == EXIT_OK
        assert squash(capsys.readouterr().out) == squash(GOLDEN.read_text())

    def test_fixture_file(self, tmp_path, capsys):
        path = tmp_path / "t.txt"
        path.write_text(cli.bundled_fixture())
        assert cli.main(["reproduce-tables", "--fixture", str(path)]) == EXIT_OK

    def test_knapsack(self, capsys):
        assert cli.main(["knapsack", "--seeds", "50", "--max-items", "12"]) == EXIT_OK
        assert capsys.readouterr().out.strip().endswith("50/50 instances match")

    def test_verify_holds(self, scenario_file, capsys):
        code = cli.main(["verify", "--scenario", str(scenario_file), "--attack", "6:8"])
        report = formats.report_from_text(capsys.readouterr().out)
        assert code == EXIT_OK and report.results[0].sol_opt > 0
        assert len(report.rows) == 27 and len(report.tree) > 27

    def test_verify_fails_on_theta(self, scenario_file, capsys):
        argv = ["verify", "--scenario", str(scenario_file), "--attack", "6:8", "--theta", "100"]
        assert cli.main(argv) == EXIT_FAILS

    def test_vacuous_with_joint_monitor(self, scenario_file, capsys):
        argv = ["verify", "--scenario", str(scenario_file), "--attack", "6:8", "--joint",
                "--monitor", "--format", "table-text"]
        assert cli.main(argv) == EXIT_OK
        out = capsys.readouterr().out
        assert "vacuous" in out and "inf." in out

    def test_explosion_is_runtime_error(self, scenario_file, capsys):
        argv = ["unfold", "--scenario", str(scenario_file), "--attack", "6:8", "--cap", "5"]
        assert cli.main(argv) == EXIT_RUNTIME
        assert "Explosion" in capsys.readouterr().err

    def test_window_past_end(self, scenario_file, capsys):
        argv = ["unfold", "--scenario", str(scenario_file), "--attack", "18:25"]
        assert cli.main(argv) == EXIT_USAGE

    def test_missing_file(self, tmp_path, capsys):
        argv = ["verify", "--scenario", str(tmp_path / "nope"), "--attack", "1:2"]
        assert cli.main(argv) == EXIT_RUNTIME

    def test_bad_threads_env(self, scenario_file, monkeypatch, capsys):
        monkeypatch.setenv("POSES_VERIFY_THREADS", "0")
        argv = ["unfold", "--scenario", str(scenario_file), "--attack", "6:8"]
        assert cli.main(argv) == EXIT_RUNTIME

    def test_simulate(self, tmp_path, capsys):
        cfg = tmp_path / "c.cfg"
        cfg.write_text(formats.config_to_text(decoy_config()))
        out = tmp_path / "s.cfg"
        assert cli.main(["simulate", "--config", str(cfg), "-o", str(out)]) == EXIT_OK
        assert formats.scenario_from_text(out.read_text()) == world.generate(decoy_config())

    def test_unfold_writes_file(self, scenario_file, tmp_path):
        out = tmp_path / "r.txt"
        argv = ["unfold", "--scenario", str(scenario_file), "--attack", "6:7", "-o", str(out)]
        assert cli.main(argv) == EXIT_OK
        report = cli.read_report(str(out))
        assert len(report.rows) == 9 and report.results == []
        assert sum(r.is_original for r in report.rows) == 1


class TestReport:
    def test_empty_rows_vacuous(self, tmp_path):
        problem = verify.VerificationProblem("robustness", 120, window=(1, 1, 1))
        result = verify.VerificationResult(problem, None, None, None)
        out = tmp_path / "r.txt"
        cli.emit_report([result], [], "table-text", str(out))
        text = out.read_text()
        assert "(no rows)" in text and "vacuous" in text
        cli.emit_report([result], [], "structured-text", str(out))
        back = cli.read_report(str(out))
        assert back.rows == [] and back.results[0].verdict is verify.Verdict.VACUOUS

    def test_round_trip(self, tmp_path):
        report = cli.reproduce_tables(cli.bundled_fixture(), 120, 1)
        out = tmp_path / "r.txt"
        out.write_text(cli.render(report, "structured-text"))
        back = cli.read_report(str(out))
        assert [(r.label, r.measures, r.is_original) for r in back.rows] == \
            [(r.label, r.measures, r.is_original) for r in report.rows]
        for a, b in zip(back.results, report.results):
            assert (a.sol_opt, a.theta_star, a.rho_star.label, a.verdict) == \
                (b.sol_opt, b.theta_star, b.rho_star.label, b.verdict)
            assert [r.label for r in a.p_plus] == [r.label for r in b.p_plus]
            assert a.problem == b.problem
        assert cli.render(back, "structured-text") == out.read_text()


class TestFormats:
    def test_config_round_trip(self):
        cfg = decoy_config()
        cfg.vehicles[1].visible_until = 15
        cfg.init_position = (99.0, 501.0)
        back = formats.config_from_text(formats.config_to_text(cfg))
        assert world.generate(back) == world.generate(cfg)
        assert back.vehicles[1].visible_until == 15

    def test_scenario_round_trip_is_exact(self):
        cfg = decoy_config()
        cfg.detection_noise_sigma, cfg.false_alarm_rate = 1.7, 2.0
        sc = world.generate(cfg)
        assert formats.scenario_from_text(formats.scenario_to_text(sc)) == sc

    @pytest.mark.parametrize("text", [
        "",
        "poses-verify/2 scenario\n",
        "poses-verify/1 report\n",
        "poses-verify/1 scenario\n[scenario]\nn_steps = two\n",
        "poses-verify/1 scenario\nkey = value outside a section\n",
    ])
    def test_rejects_malformed(self, text):
        with pytest.raises(formats.FormatError):
            formats.scenario_from_text(text)

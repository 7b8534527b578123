"""Command-line interface: exit codes, output formats, suite execution."""

import json

import pytest

from playtest import fixtures
from playtest.cli import main

MINI_SUITE = [
    {
        "id": "careers_mini",
        "study": "career_progression",
        "tuning_ref": "desk_base.json",
        "scenario": {},
        "heuristic": {"weights": {"career_xp": 1.0}},
        "goal": {"kind": "career_level_reached",
                 "max_minutes": 20000, "max_actions": 2000},
        "trials": 2,
        "base_seed": 77,
        "agent": {"kind": "astar", "node_budget": 2000},
        "careers": [{"career": "barista", "target_level": 2}],
    },
    {
        "id": "broken_ref",
        "study": "career_progression",
        "tuning_ref": "no_such_file.json",
        "scenario": {},
        "heuristic": {"weights": {"career_xp": 1.0}},
        "goal": {"kind": "career_level_reached",
                 "max_minutes": 20000, "max_actions": 2000},
        "trials": 1,
        "base_seed": 77,
        "agent": {"kind": "astar"},
        "careers": [{"career": "barista", "target_level": 2}],
    },
]


@pytest.fixture()
def suite_dir(tmp_path):
    for name in ("desk_base",):
        (tmp_path / f"{name}.json").write_text(fixtures.path(name).read_text())
    (tmp_path / "suite.json").write_text(json.dumps(MINI_SUITE))
    return tmp_path


class TestValidate:
    def test_clean_fixture_exit_zero(self, capsys):
        assert main(["validate", str(fixtures.path("desk_base"))]) == 0
        assert "no diagnostics" in capsys.readouterr().out

    def test_anomalous_fixture_warns_but_passes(self, capsys):
        assert main(["validate", str(fixtures.path("bugged_event"))]) == 0
        out = capsys.readouterr().out
        assert "warning" in out and "audit" in out

    def test_missing_file_exit_two(self, capsys):
        assert main(["validate", "definitely_missing.json"]) == 2

    def test_malformed_json_exit_two(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["validate", str(bad)]) == 2

    def test_semantic_error_exit_one(self, tmp_path, capsys):
        doc = json.loads(fixtures.path("desk_base").read_text())
        doc["careers"][0]["xp_per_level"] = [100, 50, 20]
        broken = tmp_path / "broken.json"
        broken.write_text(json.dumps(doc))
        assert main(["validate", str(broken)]) == 1
        assert "xp_per_level" in capsys.readouterr().out

    def test_json_format_is_parseable(self, capsys):
        assert main(["validate", "--format", "json",
                     str(fixtures.path("bugged_event"))]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert isinstance(payload, list)
        assert any(d["code"] == "step-anomaly" for d in payload)


class TestDiff:
    def test_identical_files(self, capsys):
        path = str(fixtures.path("desk_base"))
        assert main(["diff", path, path]) == 0
        assert "no differences" in capsys.readouterr().out

    def test_builds_show_regen_change(self, capsys):
        assert main(["diff", str(fixtures.path("build_a")),
                     str(fixtures.path("build_b"))]) == 0
        out = capsys.readouterr().out
        assert "regen_rate" in out

    def test_json_format(self, capsys):
        assert main(["diff", "--format", "json",
                     str(fixtures.path("build_a")),
                     str(fixtures.path("build_b"))]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["entries"]

    def test_malformed_second_file_exit_two(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{oops")
        code = main(["diff", str(fixtures.path("desk_base")), str(bad)])
        assert code == 2
        assert "line" in capsys.readouterr().err


class TestRun:
    def test_failures_are_isolated(self, suite_dir, capsys):
        out_dir = suite_dir / "out"
        code = main(["run", str(suite_dir / "suite.json"),
                     "--out", str(out_dir), "--seed", "5"])
        assert code == 1  # one experiment failed
        stats_ok = json.loads((out_dir / "careers_mini" / "stats.json").read_text())
        stats_bad = json.loads((out_dir / "broken_ref" / "stats.json").read_text())
        assert stats_ok["status"] == "ok"
        assert stats_bad["status"] == "failed"
        assert (out_dir / "careers_mini" / "trials.csv").exists()
        assert (out_dir / "careers_mini" / "chartdata.json").exists()
        assert (out_dir / "careers_mini" / "bundle.json").exists()

    def test_seeded_runs_byte_identical(self, suite_dir):
        for name in ("a", "b"):
            main(["run", str(suite_dir / "suite.json"),
                  "--out", str(suite_dir / name), "--seed", "42"])
        first = (suite_dir / "a" / "careers_mini" / "stats.json").read_bytes()
        second = (suite_dir / "b" / "careers_mini" / "stats.json").read_bytes()
        assert first == second

    def test_playtest_out_env_default(self, suite_dir, monkeypatch, capsys):
        target = suite_dir / "env_out"
        monkeypatch.setenv("PLAYTEST_OUT", str(target))
        main(["run", str(suite_dir / "suite.json")])
        assert (target / "careers_mini" / "stats.json").exists()

    def test_missing_suite_exit_two(self):
        assert main(["run", "no_suite.json"]) == 2

    def test_json_summary(self, suite_dir, capsys):
        main(["run", str(suite_dir / "suite.json"),
              "--out", str(suite_dir / "json_out"), "--format", "json"])
        payload = json.loads(capsys.readouterr().out)
        assert {entry["experiment"] for entry in payload} == {
            "careers_mini", "broken_ref"}

    def test_digest_tracks_input_bytes(self, suite_dir):
        main(["run", str(suite_dir / "suite.json"),
              "--out", str(suite_dir / "d1"), "--seed", "1"])
        bundle1 = json.loads(
            (suite_dir / "d1" / "careers_mini" / "bundle.json").read_text())
        # byte-level change to an input: digest must change
        tuning = suite_dir / "desk_base.json"
        tuning.write_text(tuning.read_text() + "\n")
        main(["run", str(suite_dir / "suite.json"),
              "--out", str(suite_dir / "d2"), "--seed", "1"])
        bundle2 = json.loads(
            (suite_dir / "d2" / "careers_mini" / "bundle.json").read_text())
        assert bundle1["inputs_digest"] != bundle2["inputs_digest"]


class TestTrain:
    GOAL = json.dumps({"kind": "career_level_reached", "career": "fashion",
                       "level": 2, "max_minutes": 20000, "max_actions": 400})

    def test_writes_policy_and_curve(self, tmp_path, capsys):
        out = tmp_path / "policy.json"
        code = main(["train", str(fixtures.path("desk_base")),
                     "--goal", self.GOAL, "--episodes", "60",
                     "--step-size", "0.05", "--seed", "3",
                     "--out", str(out)])
        assert code == 0
        policy = json.loads(out.read_text())
        assert len(policy["weights"]) == len(policy["feature_names"])
        curve = (tmp_path / "policy.curve.csv").read_text().splitlines()
        assert curve[0] == "episode,return"
        assert len(curve) == 61

    def test_zero_episodes_usage_error(self, tmp_path):
        code = main(["train", str(fixtures.path("desk_base")),
                     "--goal", self.GOAL, "--episodes", "0",
                     "--out", str(tmp_path / "p.json")])
        assert code == 2

    def test_unreachable_goal_exit_one(self, tmp_path, capsys):
        goal = json.dumps({"kind": "career_level_reached", "career": "medical",
                           "level": 5, "max_minutes": 100, "max_actions": 5})
        code = main(["train", str(fixtures.path("desk_base")),
                     "--goal", goal, "--episodes", "20",
                     "--out", str(tmp_path / "p.json")])
        assert code == 1
        assert "never reached" in capsys.readouterr().err

    def test_bad_goal_json_exit_two(self, tmp_path):
        code = main(["train", str(fixtures.path("desk_base")),
                     "--goal", "{broken", "--episodes", "5",
                     "--out", str(tmp_path / "p.json")])
        assert code == 2


def test_run_csv_summary(tmp_path, capsys):
    (tmp_path / "desk_base.json").write_text(fixtures.path("desk_base").read_text())
    (tmp_path / "suite.json").write_text(json.dumps([MINI_SUITE[0]]))
    code = main(["run", str(tmp_path / "suite.json"),
                 "--out", str(tmp_path / "out"), "--format", "csv"])
    assert code == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "experiment,study,status,groups,trials,seconds"
    assert lines[1].startswith("careers_mini,career_progression,ok")

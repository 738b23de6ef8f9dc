import filecmp
import json

import pytest

from treetalk.cli import main
from treetalk.env import Agent
from treetalk.policies import read_jsonl
from treetalk.tree import deserialize_tree

from conftest import assert_golden


@pytest.fixture(scope="module")
def fixed_north_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "fixed_north.jsonl"
    code = main([
        "rollout", "--policy", "fixed_north", "--n", "1", "--seed", "1",
        "--max-steps", "100", "--out", str(path),
    ])
    assert code == 0
    return path


def test_rollout_fixed_north_actions(fixed_north_file, capsys):
    with open(fixed_north_file, encoding="utf-8") as fh:
        records = read_jsonl(fh)
    engineer = [r.action.value for r in records if r.agent is Agent.ENGINEER]
    assert engineer, "no engineer steps recorded"
    assert set(engineer) <= {"MoveNorth", "Wait"}
    # three rows from the south wall to the north wall, then waiting
    assert engineer[:3] == ["MoveNorth"] * 3
    assert engineer[-1] == "Wait"


def test_rollout_reports_step_count(tmp_path, capsys):
    out = tmp_path / "r.jsonl"
    code = main(["rollout", "--policy", "expert", "--n", "2", "--seed", "0", "--out", str(out)])
    assert code == 0
    msg = capsys.readouterr().out
    assert "episodes of expert" in msg and str(out) in msg
    with open(out, encoding="utf-8") as fh:
        n_lines = sum(1 for _ in fh)
    assert f"wrote {n_lines} steps from 2 episodes" in msg


def test_rollout_is_deterministic(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    for out in (a, b):
        main(["rollout", "--policy", "expert", "--n", "3", "--seed", "5", "--out", str(out)])
    assert filecmp.cmp(a, b, shallow=False)


def test_distill_single_episode_needs_smaller_leaves(fixed_north_file, tmp_path, capsys):
    tree_path = tmp_path / "t.json"
    code = main([
        "distill", "--trajectories", str(fixed_north_file),
        "--role", "engineer", "--out", str(tree_path),
    ])
    assert code == 0
    default_report = capsys.readouterr().out
    # one episode has only 3 MoveNorth rows, below the default leaf minimum
    assert "fidelity (agreement with recorded actions): 0.9" in default_report

    code = main([
        "distill", "--trajectories", str(fixed_north_file),
        "--role", "engineer", "--out", str(tree_path), "--min-samples-leaf", "1",
    ])
    assert code == 0
    assert "fidelity (agreement with recorded actions): 1.000000" in capsys.readouterr().out
    with open(tree_path, encoding="utf-8") as fh:
        tree = deserialize_tree(fh.read())
    assert tree.role is Agent.ENGINEER


def test_distill_two_episodes_fits_perfectly_with_defaults(tmp_path, capsys):
    traj = tmp_path / "fn2.jsonl"
    main(["rollout", "--policy", "fixed_north", "--n", "2", "--seed", "1",
          "--max-steps", "100", "--out", str(traj)])
    capsys.readouterr()
    report_path = tmp_path / "report.txt"
    code = main([
        "distill", "--trajectories", str(traj), "--role", "engineer",
        "--out", str(tmp_path / "t.json"), "--report", str(report_path),
    ])
    assert code == 0
    out = capsys.readouterr().out
    assert "fidelity (agreement with recorded actions): 1.000000" in out
    text = report_path.read_text(encoding="utf-8")
    assert text.endswith("1.000000\n")


def test_replay_exit_codes(fixed_north_file, tmp_path, capsys):
    clean = main(["replay", "--trajectories", str(fixed_north_file)])
    assert clean == 0
    assert "consistent" in capsys.readouterr().out

    loose_tree = tmp_path / "loose.json"
    main(["distill", "--trajectories", str(fixed_north_file), "--role", "engineer",
          "--out", str(loose_tree)])
    tight_tree = tmp_path / "tight.json"
    main(["distill", "--trajectories", str(fixed_north_file), "--role", "engineer",
          "--out", str(tight_tree), "--min-samples-leaf", "1"])
    capsys.readouterr()

    bad = main(["replay", "--trajectories", str(fixed_north_file),
                "--tree", str(loose_tree), "--role", "engineer"])
    assert bad == 1
    good = main(["replay", "--trajectories", str(fixed_north_file),
                 "--tree", str(tight_tree), "--role", "engineer"])
    assert good == 0


def test_explain_prompt_only(capsys):
    code = main([
        "explain", "--role", "engineer", "--condition", "no_br",
        "--scenario-seed", "3", "--train-episodes", "30",
    ])
    assert code == 0
    out = capsys.readouterr().out
    for marker in ("## Environment", "## Behavior evidence", "## Examples", "## Query"):
        assert marker in out
    assert "--- explanation ---" not in out
    assert "Current state:" in out


def test_explain_json_golden(capsys):
    code = main([
        "explain", "--role", "medic", "--condition", "br_path",
        "--scenario-seed", "42", "--advance", "1",
        "--train-episodes", "40", "--mock", "echo", "--json",
    ])
    assert code == 0
    out = capsys.readouterr().out
    doc = json.loads(out)
    assert doc["agent"] == "medic"
    assert doc["explanation"]  # echo mock answered
    assert doc["behavior_text"].startswith("The medic ")
    assert_golden("cli_explain.json", out)


def test_explain_with_saved_tree_and_samples(fixed_north_file, tmp_path, capsys):
    tree_path = tmp_path / "t.json"
    main(["distill", "--trajectories", str(fixed_north_file), "--role", "engineer",
          "--out", str(tree_path), "--min-samples-leaf", "1"])
    capsys.readouterr()

    missing = main([
        "explain", "--role", "engineer", "--condition", "br_states",
        "--tree", str(tree_path),
    ])
    assert missing == 2
    assert "--trajectories" in capsys.readouterr().err

    code = main([
        "explain", "--role", "engineer", "--condition", "br_states",
        "--tree", str(tree_path), "--trajectories", str(fixed_north_file),
        "--k", "5", "--out", str(tmp_path / "p.txt"),
    ])
    assert code == 0
    text = (tmp_path / "p.txt").read_text(encoding="utf-8")
    assert text.count("Sample ") == 5


STUDY_ARGS = [
    "study", "--mock", "echo", "--policies", "expert,fixed_north",
    "--states-per-cell", "2", "--seed", "3",
    "--train-episodes", "20", "--eval-episodes", "6", "--max-steps", "100",
]


def test_study_reports_deterministic_and_golden(tmp_path, capsys):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    for out in (out_a, out_b):
        code = main(STUDY_ARGS + ["--out-dir", str(out)])
        assert code == 0
    capsys.readouterr()
    for name in ("study_rows.csv", "feature_frequency.csv", "study_summary.txt"):
        assert filecmp.cmp(out_a / name, out_b / name, shallow=False), name
    assert_golden("cli_study_rows.csv", (out_a / "study_rows.csv").read_text(encoding="utf-8"))

    code = main(STUDY_ARGS)
    assert code == 0
    summary = capsys.readouterr().out
    assert summary == (out_a / "study_summary.txt").read_text(encoding="utf-8")


def test_module_errors_exit_2(tmp_path, capsys):
    code = main(["distill", "--trajectories", str(tmp_path / "nope.jsonl"),
                 "--role", "engineer", "--out", str(tmp_path / "t.json")])
    assert code == 2
    err = capsys.readouterr().err
    assert err.startswith("error:")


def test_argparse_rejects_bad_enums(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["rollout", "--policy", "optimal", "--n", "1", "--out", "x.jsonl"])
    assert exc.value.code == 2
    assert "not one of" in capsys.readouterr().err

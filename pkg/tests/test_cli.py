"""Command-line interface behaviour (generation, benchmarking, interaction)."""

import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from disambig.cli import main
from disambig.learner import CSV_HEADER, LearnerConfig, Session, oracle_option
from disambig.rulelang import eval_program, gen_task, task_from_json, task_to_json


@pytest.fixture()
def runner():
    return CliRunner()


def oracle_answers(task):
    session = Session.from_task(task, LearnerConfig(seed=task.seed))
    answers = []
    while session.status == "awaiting-answer":
        query = session.next_query()
        letter = oracle_option(session._pending.plan, query, task.ground_truth)
        session.submit_answer(letter)
        answers.append(letter)
    assert session.status == "converged"
    return answers


def read_tree(root: Path) -> dict:
    return {
        path.relative_to(root): path.read_bytes()
        for path in sorted(root.rglob("*"))
        if path.is_file()
    }


# ---------------------------------------------------------------------------
# gen
# ---------------------------------------------------------------------------


def test_gen_fixed_seed_is_byte_identical(runner, tmp_path):
    for name in ("one", "two"):
        result = runner.invoke(
            main,
            ["gen", "--seed", "3", "--count", "3", "--out", str(tmp_path / name)],
        )
        assert result.exit_code == 0, result.output
    assert read_tree(tmp_path / "one") == read_tree(tmp_path / "two")


def test_gen_count_zero_writes_empty_manifest(runner, tmp_path):
    result = runner.invoke(
        main, ["gen", "--count", "0", "--out", str(tmp_path / "none")]
    )
    assert result.exit_code == 0, result.output
    manifest = json.loads((tmp_path / "none" / "manifest.json").read_text())
    assert manifest["tasks"] == []
    assert list((tmp_path / "none").iterdir()) == [tmp_path / "none" / "manifest.json"]


def test_gen_tasks_satisfy_task_invariants(runner, tmp_path):
    out = tmp_path / "tasks"
    result = runner.invoke(
        main, ["gen", "--seed", "11", "--count", "4", "--out", str(out)]
    )
    assert result.exit_code == 0, result.output
    manifest = json.loads((out / "manifest.json").read_text())
    assert len(manifest["tasks"]) == 4
    for name in manifest["tasks"]:
        task = task_from_json(json.loads((out / name).read_text()))
        assert 5 <= len(task.hypotheses) <= 60
        assert task.ground_truth in task.hypotheses
        for model, expected in task.examples:
            assert eval_program(task.ground_truth, model) == expected


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def task_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("bench") / "tasks"
    result = CliRunner().invoke(
        main, ["gen", "--seed", "3", "--count", "2", "--out", str(out)]
    )
    assert result.exit_code == 0, result.output
    return out


def test_bench_single_task_single_strategy(runner, tmp_path):
    task = gen_task(3)
    out = tmp_path / "tasks"
    out.mkdir()
    (out / "task-3.json").write_text(json.dumps(task_to_json(task)))
    (out / "manifest.json").write_text(json.dumps({"tasks": ["task-3.json"]}))
    csv = tmp_path / "bench.csv"
    result = runner.invoke(
        main,
        ["bench", "--tasks", str(out), "--strategies", "mc", "--out", str(csv)],
    )
    assert result.exit_code == 0, result.output
    lines = csv.read_text().splitlines()
    assert lines[0] == CSV_HEADER
    assert len(lines) == 2
    task_id, strategy, rounds, converged, equivalent, _ = lines[1].split(",")
    assert (task_id, strategy, converged, equivalent) == ("3", "mc", "true", "true")
    assert "mc: mean rounds" in result.output


def test_bench_runs_both_strategies(runner, task_dir, tmp_path):
    csv = tmp_path / "bench.csv"
    result = runner.invoke(
        main, ["bench", "--tasks", str(task_dir), "--out", str(csv)]
    )
    assert result.exit_code == 0, result.output
    lines = csv.read_text().splitlines()
    assert len(lines) == 1 + 2 * 2  # header + two strategies x two tasks
    strategies = {line.split(",")[1] for line in lines[1:]}
    assert strategies == {"mc", "minimax-io"}
    assert "minimax-io: mean rounds" in result.output


def test_bench_accepts_manifest_path(runner, task_dir, tmp_path):
    csv = tmp_path / "bench.csv"
    result = runner.invoke(
        main,
        [
            "bench",
            "--tasks",
            str(task_dir / "manifest.json"),
            "--strategies",
            "mc",
            "--out",
            str(csv),
        ],
    )
    assert result.exit_code == 0, result.output
    assert len(csv.read_text().splitlines()) == 3


def test_bench_rejects_unknown_strategy(runner, task_dir, tmp_path):
    result = runner.invoke(
        main,
        ["bench", "--tasks", str(task_dir), "--strategies", "telepathy"],
    )
    assert result.exit_code != 0


def test_bench_is_deterministic(runner, task_dir, tmp_path):
    outputs = []
    for name in ("a.csv", "b.csv"):
        csv = tmp_path / name
        result = runner.invoke(
            main, ["bench", "--tasks", str(task_dir), "--out", str(csv)]
        )
        assert result.exit_code == 0, result.output
        # timing column varies run to run; everything else must not
        outputs.append(
            [line.rsplit(",", 1)[0] for line in csv.read_text().splitlines()]
        )
    assert outputs[0] == outputs[1]


# ---------------------------------------------------------------------------
# ask
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def task_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("ask") / "task.json"
    path.write_text(json.dumps(task_to_json(gen_task(3))))
    return path


def test_ask_scripted_oracle_run_converges(runner, task_file, tmp_path):
    answers = oracle_answers(gen_task(3))
    result = runner.invoke(
        main,
        ["ask", "--task", str(task_file), "--data-dir", str(tmp_path / "data")],
        input="".join(a + "\n" for a in answers),
    )
    assert result.exit_code == 0, result.output
    assert f"converged after {len(answers)} round(s)" in result.output
    assert "apply " in result.output  # the pretty program is printed


def test_ask_invalid_letter_reprompts(runner, task_file, tmp_path):
    answers = oracle_answers(gen_task(3))
    scripted = "z\n9\n" + "".join(a + "\n" for a in answers)
    result = runner.invoke(
        main,
        ["ask", "--task", str(task_file), "--data-dir", str(tmp_path / "data")],
        input=scripted,
    )
    assert result.exit_code == 0, result.output
    assert result.output.count("please answer one of:") == 2
    assert "converged" in result.output


def test_ask_eof_saves_session_then_resume_finishes(runner, task_file, tmp_path):
    data_dir = tmp_path / "data"
    first = runner.invoke(
        main,
        ["ask", "--task", str(task_file), "--data-dir", str(data_dir)],
        input="",
    )
    assert first.exit_code == 0, first.output
    assert "session saved as awaiting-answer" in first.output
    session_id = first.output.split()[1]

    answers = oracle_answers(gen_task(3))
    second = runner.invoke(
        main,
        ["ask", "--resume", session_id, "--data-dir", str(data_dir)],
        input="".join(a + "\n" for a in answers),
    )
    assert second.exit_code == 0, second.output
    assert "converged" in second.output


def test_ask_requires_exactly_one_source(runner, task_file, tmp_path):
    assert runner.invoke(main, ["ask"]).exit_code != 0
    result = runner.invoke(
        main, ["ask", "--task", str(task_file), "--resume", "abc"]
    )
    assert result.exit_code != 0


def test_ask_unknown_resume_id_fails_cleanly(runner, tmp_path):
    result = runner.invoke(
        main, ["ask", "--resume", "feedface", "--data-dir", str(tmp_path / "d")]
    )
    assert result.exit_code != 0
    assert "unknown session" in result.output

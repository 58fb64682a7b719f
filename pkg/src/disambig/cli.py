"""Command-line entry points: task generation, benchmarking, interactive
disambiguation sessions, and the HTTP service."""

from __future__ import annotations

import json
import random
from pathlib import Path
from typing import Optional

import click

from disambig.learner import (
    CSV_HEADER,
    LearnerConfig,
    RunResult,
    SessionFailed,
    baseline_minimax_io,
    run_with_oracle,
)
from disambig.render import LlmConfig
from disambig.rulelang import (
    DIFFICULTY_PRESETS,
    gen_task,
    task_from_json,
    task_to_json,
)
from disambig.service import SessionStore, create_app, program_text

__all__ = ["main"]

STRATEGIES = ("mc", "minimax-io")


def _dump(path: Path, data: dict) -> None:
    # no sort_keys: mapping order is meaningful (schema attribute order)
    path.write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")


def _engine_options(fn):
    for option in reversed(
        (
            click.option("--k", type=int, default=None, help="Max options per query."),
            click.option(
                "--lambda-pre",
                type=float,
                default=None,
                help="Precondition size penalty.",
            ),
            click.option(
                "--lambda-post",
                type=float,
                default=None,
                help="Option wording size penalty.",
            ),
            click.option(
                "--sample-size",
                type=int,
                default=None,
                help="Max candidates planned over per round.",
            ),
            click.option("--seed", type=int, default=None, help="Engine RNG seed."),
            click.option(
                "--no-llm",
                is_flag=True,
                help="Force template wording (no LLM calls).",
            ),
            click.option(
                "--llm-endpoint",
                type=str,
                default=None,
                help="Chat-completions URL for natural wording "
                "(key read from LLM_API_KEY).",
            ),
        )
    ):
        fn = option(fn)
    return fn


def _build_config(
    *,
    seed: int,
    k: Optional[int],
    lambda_pre: Optional[float],
    lambda_post: Optional[float],
    sample_size: Optional[int],
    no_llm: bool,
    llm_endpoint: Optional[str],
) -> LearnerConfig:
    kwargs = {"seed": seed}
    if k is not None:
        kwargs["k"] = k
    if lambda_pre is not None:
        kwargs["lambda_pre"] = lambda_pre
    if lambda_post is not None:
        kwargs["lambda_post"] = lambda_post
    if sample_size is not None:
        kwargs["sample_size"] = sample_size
    if llm_endpoint and not no_llm:
        kwargs["render_mode"] = "llm"
        kwargs["llm"] = LlmConfig(endpoint=llm_endpoint)
    return LearnerConfig(**kwargs)


@click.group()
def main() -> None:
    """Pin down which program a user means by asking multiple-choice
    questions about hypothetical inputs."""


# ---------------------------------------------------------------------------
# gen
# ---------------------------------------------------------------------------


@main.command()
@click.option("--seed", type=int, default=0, show_default=True, help="Base seed.")
@click.option("--count", type=int, default=10, show_default=True)
@click.option(
    "--difficulty",
    type=click.Choice(sorted(DIFFICULTY_PRESETS)),
    default="medium",
    show_default=True,
)
@click.option(
    "--out",
    "out_path",
    type=click.Path(file_okay=False, path_type=Path),
    default="tasks",
    show_default=True,
)
def gen(seed: int, count: int, difficulty: str, out_path: Path) -> None:
    """Generate a reproducible benchmark task set."""
    if count < 0:
        raise click.BadParameter("--count must be >= 0")
    out_path.mkdir(parents=True, exist_ok=True)
    names = []
    for offset in range(count):
        task = gen_task(seed + offset, difficulty=difficulty)
        name = f"task-{task.seed}.json"
        _dump(out_path / name, task_to_json(task))
        names.append(name)
    _dump(
        out_path / "manifest.json",
        {
            "api": "v1",
            "seed": seed,
            "count": count,
            "difficulty": difficulty,
            "tasks": names,
        },
    )
    click.echo(f"wrote {count} task(s) and manifest.json to {out_path}")


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------


def _load_tasks(tasks_path: Path):
    manifest_path = tasks_path / "manifest.json" if tasks_path.is_dir() else tasks_path
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    base = manifest_path.parent
    return [
        task_from_json(json.loads((base / name).read_text(encoding="utf-8")))
        for name in manifest["tasks"]
    ]


@main.command()
@click.option(
    "--tasks",
    "tasks_path",
    type=click.Path(exists=True, path_type=Path),
    required=True,
    help="Task directory or manifest.json path.",
)
@click.option(
    "--strategies",
    default="mc,minimax-io",
    show_default=True,
    help="Comma-separated subset of: " + ", ".join(STRATEGIES),
)
@click.option(
    "--seed",
    type=int,
    default=0,
    show_default=True,
    help="Seed for the shared baseline input pool.",
)
@click.option("--pool-size", type=int, default=40, show_default=True)
@click.option(
    "--out",
    "out_csv",
    type=click.Path(dir_okay=False, path_type=Path),
    default="bench.csv",
    show_default=True,
)
def bench(
    tasks_path: Path, strategies: str, seed: int, pool_size: int, out_csv: Path
) -> None:
    """Benchmark question strategies against a truthful oracle."""
    chosen = [s.strip() for s in strategies.split(",") if s.strip()]
    unknown = [s for s in chosen if s not in STRATEGIES]
    if unknown or not chosen:
        raise click.BadParameter(
            f"--strategies must name a subset of {'/'.join(STRATEGIES)}"
        )
    tasks = _load_tasks(tasks_path)
    if not tasks:
        raise click.ClickException("task set is empty")

    results: list[RunResult] = []
    pools: dict = {}
    for task in tasks:
        for strategy in chosen:
            if strategy == "mc":
                results.append(run_with_oracle(task, LearnerConfig(seed=task.seed)))
            else:
                if task.schema not in pools:
                    rng = random.Random(f"{seed}:pool")
                    pools[task.schema] = [
                        task.schema.sample_model(rng) for _ in range(pool_size)
                    ]
                results.append(
                    baseline_minimax_io(
                        task, pools[task.schema], LearnerConfig(seed=task.seed)
                    )
                )

    lines = [CSV_HEADER] + [r.csv_row() for r in results]
    out_csv.write_text("\n".join(lines) + "\n", encoding="utf-8")
    click.echo(f"wrote {len(results)} row(s) to {out_csv}")
    for strategy in chosen:
        rows = [r for r in results if r.strategy == strategy]
        mean_rounds = sum(r.rounds for r in rows) / len(rows)
        accuracy = sum(r.equivalent_to_truth for r in rows) / len(rows)
        click.echo(
            f"{strategy}: mean rounds {mean_rounds:.2f}, accuracy {accuracy:.2f}"
        )


# ---------------------------------------------------------------------------
# ask
# ---------------------------------------------------------------------------


@main.command()
@click.option(
    "--task",
    "task_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    default=None,
    help="Task JSON file to start a new session from.",
)
@click.option("--resume", "resume_id", default=None, help="Session id to resume.")
@click.option(
    "--data-dir",
    type=click.Path(file_okay=False, path_type=Path),
    default="disambig-data",
    show_default=True,
)
@_engine_options
def ask(
    task_path: Optional[Path],
    resume_id: Optional[str],
    data_dir: Path,
    seed: Optional[int],
    **engine,
) -> None:
    """Interactively disambiguate a task by answering queries by hand."""
    if (task_path is None) == (resume_id is None):
        raise click.UsageError("provide exactly one of --task or --resume")
    store = SessionStore(data_dir)
    if resume_id is not None:
        try:
            session = store.get(resume_id)
        except KeyError:
            raise click.ClickException(f"unknown session {resume_id!r}")
    else:
        task = task_from_json(json.loads(task_path.read_text(encoding="utf-8")))
        config = _build_config(seed=seed if seed is not None else task.seed, **engine)
        session = store.create_from_task(task, config)
    click.echo(f"session {session.id}")

    while session.status == "awaiting-answer":
        try:
            query = store.next_query(session.id)
        except SessionFailed:
            break
        click.echo("")
        click.echo(f"[round {query.round}] {query.question}")
        for option in query.options:
            click.echo(f"  ({option.letter}) {option.text}")
        while True:
            try:
                raw = input("answer: ").strip().lower()
            except EOFError:
                click.echo("")
                click.echo(
                    "session saved as awaiting-answer; resume with "
                    f"--resume {session.id}"
                )
                return
            try:
                store.submit_answer(session.id, raw)
                break
            except ValueError:
                click.echo(f"please answer one of: {'/'.join(query.letters)}")

    if session.status == "converged":
        click.echo("")
        click.echo(f"converged after {session.round} round(s); the program:")
        click.echo(program_text(session.result()))
    else:
        click.echo(f"no consistent program remains: {session.failure_reason}")
        raise SystemExit(1)


# ---------------------------------------------------------------------------
# serve
# ---------------------------------------------------------------------------


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option(
    "--data-dir",
    type=click.Path(file_okay=False, path_type=Path),
    default="disambig-data",
    show_default=True,
)
@click.option(
    "--static-dir",
    type=click.Path(file_okay=False, exists=True, path_type=Path),
    default=None,
    help="Built web UI directory to serve at /.",
)
@_engine_options
def serve(
    host: str,
    port: int,
    data_dir: Path,
    static_dir: Optional[Path],
    seed: Optional[int],
    **engine,
) -> None:
    """Run the HTTP session service (and the web UI, if built)."""
    import uvicorn

    defaults = _build_config(seed=seed if seed is not None else 0, **engine)
    app = create_app(
        SessionStore(data_dir), defaults=defaults, static_dir=static_dir
    )
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()

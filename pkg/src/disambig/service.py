"""HTTP session service and file-backed persistence.

Sessions live in append-only event logs (one line-delimited JSON file per
session): a ``created`` event capturing everything a replay needs, then a
``query-issued`` / ``answer`` pair per round and a terminal marker.  The
engine is deterministic per seed, so replaying the recorded answers (with
the recorded timestamps fed back through the session clock) reconstructs
the exact pre-crash state — including the pending query, which is why the
store never snapshots plans.

The FastAPI app exposes the session lifecycle over JSON (bodies carry
``api: "v1"``), serializes requests per session, and can serve a built
web UI directory statically next to the API.
"""

from __future__ import annotations

import json
import os
import threading
import time
import uuid
from dataclasses import asdict, replace
from pathlib import Path
from typing import Callable, Iterator, Mapping, Optional, Sequence

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, ConfigDict, Field

from disambig.learner import (
    HistoryEntry,
    InvalidSessionState,
    LearnerConfig,
    RenderedQuery,
    Session,
    SessionFailed,
)
from disambig.render import LlmConfig
from disambig.rulelang import (
    And,
    ExistsOther,
    Guard,
    Not,
    Program,
    Schema,
    SelfAttr,
    Task,
    gen_task,
    program_from_json,
    program_to_json,
    schema_from_json,
    schema_to_json,
    task_from_json,
)

__all__ = [
    "SessionStore",
    "config_from_json",
    "config_to_json",
    "create_app",
    "program_text",
]

API_VERSION = "v1"


# ---------------------------------------------------------------------------
# pretty-printing programs
# ---------------------------------------------------------------------------


def _guard_text(guard: Guard) -> str:
    if isinstance(guard, SelfAttr):
        return f"{guard.attribute} is {guard.value}"
    if isinstance(guard, ExistsOther):
        conds = " and ".join(
            f"{attribute} is {'' if positive else 'not '}{value}"
            for attribute, value, positive in guard.witness
        )
        clause = f" where {conds}" if conds else ""
        return f"some object related by '{guard.relation}'{clause} exists"
    if isinstance(guard, Not):
        return f"not ({_guard_text(guard.child)})"
    joiner = " and " if isinstance(guard, And) else " or "
    return "(" + joiner.join(_guard_text(child) for child in guard.children) + ")"


def program_text(program: Program) -> str:
    """One readable line per rule; rules are already canonically ordered."""
    if not program.rules:
        return "apply no action to any object"
    return "\n".join(
        f"apply {rule.action} to every object where {_guard_text(rule.guard)}"
        for rule in program.rules
    )


# ---------------------------------------------------------------------------
# config serialization
# ---------------------------------------------------------------------------


def config_to_json(config: LearnerConfig) -> dict:
    data = asdict(config)
    if config.llm is not None:
        llm = asdict(config.llm)
        llm["few_shot"] = [list(pair) for pair in config.llm.few_shot]
        llm["extra_headers"] = [list(pair) for pair in config.llm.extra_headers]
        data["llm"] = llm
    return data


def config_from_json(data: Mapping) -> LearnerConfig:
    payload = dict(data)
    llm = payload.pop("llm", None)
    if llm is not None:
        llm = dict(llm)
        llm["few_shot"] = tuple(tuple(pair) for pair in llm.get("few_shot", ()))
        llm["extra_headers"] = tuple(
            tuple(pair) for pair in llm.get("extra_headers", ())
        )
        payload["llm"] = LlmConfig(**llm)
    return LearnerConfig(**payload)


# ---------------------------------------------------------------------------
# event-sourced session store
# ---------------------------------------------------------------------------


class _ReplayClock:
    """Feeds recorded timestamps back to a session, then real time."""

    def __init__(self) -> None:
        self._queue: list[float] = []

    def push(self, ts: float) -> None:
        self._queue.append(ts)

    def __call__(self) -> float:
        if self._queue:
            return self._queue.pop(0)
        return time.time()


class SessionStore:
    """Append-only JSONL persistence with in-memory session cache.

    Every mutation happens under the session's lock and is followed by one
    atomic event-line append (write + flush + fsync).  A partial trailing
    line — the signature of a crash mid-write — is ignored on replay.
    """

    def __init__(self, data_dir: str | os.PathLike):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self._sessions: dict[str, Session] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry = threading.Lock()

    # -- plumbing ----------------------------------------------------------

    def _path(self, session_id: str) -> Path:
        if not session_id.replace("-", "").isalnum():
            raise KeyError(session_id)  # ids are uuid hex; no path tricks
        return self.data_dir / f"{session_id}.jsonl"

    def _lock(self, session_id: str) -> threading.Lock:
        with self._registry:
            return self._locks.setdefault(session_id, threading.Lock())

    def _append(self, session_id: str, event: dict) -> None:
        # no sort_keys: nested mappings (e.g. schema attributes) are ordered
        line = json.dumps(event)
        with open(self._path(session_id), "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def _events(self, session_id: str) -> Iterator[dict]:
        path = self._path(session_id)
        if not path.exists():
            raise KeyError(session_id)
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                try:
                    yield json.loads(line)
                except json.JSONDecodeError:
                    return  # torn trailing write from a crash; stop here

    # -- lifecycle ---------------------------------------------------------

    def create(
        self,
        schema: Schema,
        hypotheses: Sequence[Program],
        config: LearnerConfig,
        *,
        ground_truth: Optional[Program] = None,
        task_seed: Optional[int] = None,
        session_id: Optional[str] = None,
        clock: Callable[[], float] = time.time,
    ) -> Session:
        session_id = session_id if session_id is not None else uuid.uuid4().hex
        session = Session(
            schema,
            hypotheses,
            config,
            ground_truth=ground_truth,
            session_id=session_id,
            clock=clock,
        )
        event = {
            "api": API_VERSION,
            "event": "created",
            "session_id": session_id,
            "schema": schema_to_json(schema),
            "hypotheses": [program_to_json(p) for p in hypotheses],
            "ground_truth": (
                program_to_json(ground_truth) if ground_truth is not None else None
            ),
            "config": config_to_json(config),
            "task_seed": task_seed,
        }
        with self._lock(session_id):
            self._append(session_id, event)
            self._sessions[session_id] = session
        return session

    def create_from_task(self, task: Task, config: LearnerConfig, **kwargs) -> Session:
        return self.create(
            task.schema,
            task.hypotheses,
            config,
            ground_truth=task.ground_truth,
            task_seed=task.seed,
            **kwargs,
        )

    def get(self, session_id: str) -> Session:
        """The live session, replaying its log on first access."""
        with self._lock(session_id):
            session = self._sessions.get(session_id)
            if session is None:
                session = self._replay(session_id)
                self._sessions[session_id] = session
            return session

    def _replay(self, session_id: str) -> Session:
        events = iter(self._events(session_id))
        try:
            head = next(events)
        except StopIteration:
            raise KeyError(session_id) from None
        if head.get("event") != "created":
            raise ValueError(f"corrupt session log for {session_id}")
        clock = _ReplayClock()
        schema = schema_from_json(head["schema"])
        truth = head.get("ground_truth")
        session = Session(
            schema,
            [program_from_json(p) for p in head["hypotheses"]],
            config_from_json(head["config"]),
            ground_truth=program_from_json(truth) if truth else None,
            session_id=session_id,
            clock=clock,
        )
        for event in events:
            kind = event.get("event")
            if kind == "query-issued":
                clock.push(event["ts"])
                session.next_query()
            elif kind == "answer":
                clock.push(event["ts"])
                session.submit_answer(event["option"])
            elif kind == "failed" and session.status == "awaiting-answer":
                # the failure happened while planning a query, so no
                # query-issued event exists; recompute it deterministically
                try:
                    session.next_query()
                except SessionFailed:
                    pass
            # converged markers carry no extra state; status is derived
        return session

    # -- serialized operations --------------------------------------------

    def next_query(self, session_id: str) -> RenderedQuery:
        with self._lock(session_id):
            session = self._sessions.get(session_id) or self._replay(session_id)
            self._sessions[session_id] = session
            fresh = session._pending is None
            try:
                query = session.next_query()
            except SessionFailed:
                self._append(
                    session_id,
                    {
                        "api": API_VERSION,
                        "event": "failed",
                        "reason": session.failure_reason,
                    },
                )
                raise
            if fresh:
                self._append(
                    session_id,
                    {
                        "api": API_VERSION,
                        "event": "query-issued",
                        "round": query.round,
                        "ts": session._pending.asked_at,
                    },
                )
            return query

    def submit_answer(self, session_id: str, option: str) -> Session:
        with self._lock(session_id):
            session = self._sessions.get(session_id) or self._replay(session_id)
            self._sessions[session_id] = session
            session.submit_answer(option)
            entry = session.history[-1]
            self._append(
                session_id,
                {
                    "api": API_VERSION,
                    "event": "answer",
                    "round": entry.round,
                    "option": option,
                    "ts": entry.answered_at,
                },
            )
            if session.status != "awaiting-answer":
                self._append(
                    session_id,
                    {
                        "api": API_VERSION,
                        "event": session.status,
                        "reason": session.failure_reason,
                    },
                )
            return session


# ---------------------------------------------------------------------------
# HTTP API
# ---------------------------------------------------------------------------


class TaskRef(BaseModel):
    seed: int
    difficulty: str = "medium"


class HypothesesUpload(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    schema_data: dict = Field(alias="schema")
    programs: list[dict]
    ground_truth: Optional[dict] = None


class CreateSessionRequest(BaseModel):
    api: str = API_VERSION
    task: Optional[dict] = None
    task_ref: Optional[TaskRef] = None
    hypotheses: Optional[HypothesesUpload] = None
    config: Optional[dict] = None


class AnswerRequest(BaseModel):
    api: str = API_VERSION
    option: str


def _cube_text(cube) -> str:
    return " & ".join(repr(lit) for lit in cube.literals) or "true"


def _query_payload(query: RenderedQuery, session: Session) -> dict:
    plan = session._pending.plan if session._pending is not None else None
    options = [
        {
            "letter": option.letter,
            "text": option.text,
            "bin_size": option.bin_size,
            "logic": (
                _cube_text(option.separator)
                if option.separator is not None
                else "none of the listed outcomes"
            ),
        }
        for option in query.options
    ]
    return {
        "api": API_VERSION,
        "round": query.round,
        "question": query.question,
        "options": options,
        "has_none": query.has_none,
        "fallback": query.fallback,
        "precondition_logic": _cube_text(plan.precondition) if plan else "",
    }


def _history_payload(entry: HistoryEntry) -> dict:
    return {
        "round": entry.round,
        "question": entry.rendered.question,
        "options": [
            {"letter": o.letter, "text": o.text} for o in entry.rendered.options
        ],
        "option": entry.option,
        "h_before": entry.h_before,
        "h_after": entry.h_after,
        "asked_at": entry.asked_at,
        "answered_at": entry.answered_at,
    }


def _status_payload(session: Session) -> dict:
    return {
        "api": API_VERSION,
        "session_id": session.id,
        "status": session.status,
        "round": session.round,
        "initial": len(session.programs),
        "remaining": len(session.working),
        "remaining_classes": session.num_unique() if session.working else 0,
        "failure_reason": session.failure_reason,
        "history": [_history_payload(entry) for entry in session.history],
    }


def _learner_config(
    body: CreateSessionRequest, defaults: LearnerConfig, task_seed: Optional[int]
) -> LearnerConfig:
    if body.config is not None:
        data = dict(body.config)
        if "seed" not in data:
            if task_seed is None:
                raise HTTPException(
                    status_code=422,
                    detail="config.seed is required for uploaded hypotheses",
                )
            data["seed"] = task_seed
        try:
            return config_from_json(data)
        except (TypeError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=f"bad config: {exc}")
    if task_seed is not None:
        return replace(defaults, seed=task_seed)
    raise HTTPException(
        status_code=422, detail="config.seed is required for uploaded hypotheses"
    )


def create_app(
    store: SessionStore,
    *,
    defaults: Optional[LearnerConfig] = None,
    static_dir: Optional[str | os.PathLike] = None,
) -> FastAPI:
    """The v1 session API, optionally serving a built UI directory."""
    defaults = defaults if defaults is not None else LearnerConfig(seed=0)
    app = FastAPI(title="disambig session service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    def _session_or_404(session_id: str) -> Session:
        try:
            return store.get(session_id)
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown session")

    @app.get("/healthz")
    def healthz() -> dict:
        return {"api": API_VERSION, "ok": True}

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionRequest) -> dict:
        sources = [body.task, body.task_ref, body.hypotheses]
        if sum(source is not None for source in sources) != 1:
            raise HTTPException(
                status_code=422,
                detail="exactly one of task, task_ref, hypotheses is required",
            )
        try:
            if body.task is not None:
                task = task_from_json(body.task)
                config = _learner_config(body, defaults, task.seed)
                session = store.create_from_task(task, config)
            elif body.task_ref is not None:
                task = gen_task(
                    seed=body.task_ref.seed, difficulty=body.task_ref.difficulty
                )
                config = _learner_config(body, defaults, task.seed)
                session = store.create_from_task(task, config)
            else:
                upload = body.hypotheses
                schema = schema_from_json(upload.schema_data)
                programs = [program_from_json(p) for p in upload.programs]
                truth = (
                    program_from_json(upload.ground_truth)
                    if upload.ground_truth is not None
                    else None
                )
                config = _learner_config(body, defaults, None)
                session = store.create(
                    schema, programs, config, ground_truth=truth
                )
        except HTTPException:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=f"bad payload: {exc}")
        return {"api": API_VERSION, "session_id": session.id}

    @app.get("/sessions/{session_id}")
    def session_status(session_id: str) -> dict:
        return _status_payload(_session_or_404(session_id))

    @app.get("/sessions/{session_id}/query")
    def session_query(session_id: str) -> dict:
        session = _session_or_404(session_id)
        try:
            query = store.next_query(session_id)
        except (InvalidSessionState, SessionFailed) as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return _query_payload(query, session)

    @app.post("/sessions/{session_id}/answer")
    def session_answer(session_id: str, body: AnswerRequest) -> dict:
        _session_or_404(session_id)
        try:
            session = store.submit_answer(session_id, body.option)
        except InvalidSessionState as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return _status_payload(session)

    @app.get("/sessions/{session_id}/result")
    def session_result(session_id: str) -> dict:
        session = _session_or_404(session_id)
        try:
            program = session.result()
        except InvalidSessionState as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return {
            "api": API_VERSION,
            "session_id": session.id,
            "rounds": session.round,
            "remaining": len(session.working),
            "program": program_to_json(program),
            "pretty": program_text(program),
        }

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app

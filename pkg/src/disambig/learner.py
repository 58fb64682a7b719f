"""Interactive disambiguation sessions, the oracle harness, and a baseline.

A :class:`Session` drives the full loop over a finite candidate set: sample
a working subset, pick the precondition cube that forces the most
candidates apart, build the best multiple-choice question under it, and
filter the full set by the chosen option's outcome cube until one
equivalence class remains.  ``run_with_oracle`` automates that dialogue
with a truthful answerer for benchmarking, and ``baseline_minimax_io``
implements the classic alternative — asking the user to label concrete
inputs picked by worst-case elimination — so the two query styles can be
compared on the same tasks.

A session is a state machine; callers must serialize ``next_query`` /
``submit_answer`` per session.  Distinct sessions are independent.  All
randomness is derived from the config seed, so identical (task, config)
pairs replay identical transcripts.
"""

from __future__ import annotations

import random
import time
import uuid
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from disambig.answers import (
    DEFAULT_K,
    DEFAULT_LAMBDA_POST,
    QueryPlan,
    SingleOutcomeError,
    generate_query,
    postcondition_universe,
)
from disambig.distinguish import (
    DistinguishingSet,
    build_distinguishing_set,
    precondition_universe,
    refine_predicates,
)
from disambig.logic import (
    Axioms,
    Cube,
    Literal,
    ResourceLimitError,
    attr_atom,
    cube_formula,
    entails,
)
from disambig.precond import DEFAULT_LAMBDA_PRE, get_best_precondition
from disambig.render import (
    LlmConfig,
    PhraseTable,
    render_llm,
    render_template,
)
from disambig.rulelang import (
    Model,
    Program,
    Schema,
    Task,
    equivalent,
    eval_program,
    strongest_post,
)

__all__ = [
    "CSV_HEADER",
    "HistoryEntry",
    "InvalidSessionState",
    "LearnerConfig",
    "QueryOption",
    "RenderedQuery",
    "RunResult",
    "Session",
    "SessionFailed",
    "baseline_minimax_io",
    "num_unique",
    "oracle_option",
    "run_with_oracle",
]

# Outcome formulas range over out-action atoms, which the attribute theory
# leaves unconstrained, so entailment between them is decided theory-free.
_OUT_AXIOMS = Axioms({})

# How many candidate scenes the query fallback tries before giving up.
_FALLBACK_SCENE_ATTEMPTS = 20


class InvalidSessionState(RuntimeError):
    """The operation is not allowed in the session's current status."""


class SessionFailed(RuntimeError):
    """The session hit a resource or feasibility limit and is now failed."""


def num_unique(programs: Sequence[Program]) -> int:
    """Number of semantic equivalence classes under pairwise ``equivalent``."""
    representatives: list[Program] = []
    for program in programs:
        if all(not equivalent(program, rep) for rep in representatives):
            representatives.append(program)
    return len(representatives)


@dataclass(frozen=True)
class LearnerConfig:
    """Loop parameters.

    The seed is mandatory: it drives sampling and every tie-break that is
    not already canonical, so a session's transcript is a pure function of
    (hypotheses, config).  ``sample_size`` bounds how many candidates each
    round's query is computed over; filtering always applies to the full
    set.  ``render_mode`` selects the deterministic template renderer or
    the external translation client (which falls back to the template).
    """

    seed: int
    k: int = DEFAULT_K
    lambda_pre: float = DEFAULT_LAMBDA_PRE
    lambda_post: float = DEFAULT_LAMBDA_POST
    sample_size: int = 50
    render_mode: str = "template"
    llm: Optional[LlmConfig] = None

    def __post_init__(self) -> None:
        if self.k < 2:
            raise ValueError("k must allow at least two options")
        if self.sample_size < 1:
            raise ValueError("sample_size must be positive")
        if self.render_mode not in ("template", "llm"):
            raise ValueError(f"unknown render mode {self.render_mode!r}")


@dataclass(frozen=True)
class QueryOption:
    """One answerable option: its letter, text, and logical content.

    ``separator`` is the outcome cube the option asserts (``None`` only
    for the trailing none-of-the-above option) and ``bin_size`` counts the
    sampled programs it covers (0 for none-of-the-above).
    """

    letter: str
    text: str
    separator: Optional[Cube]
    bin_size: int


@dataclass(frozen=True)
class RenderedQuery:
    """A displayable round: question text plus lettered options.

    Option ``i`` always corresponds to bin ``i`` of the underlying plan —
    the letter→bin mapping is positional and authoritative regardless of
    what the rendered text says.  ``has_none`` marks a trailing
    none-of-the-above option, present exactly when the plan was computed
    on a strict sample of the working set.
    """

    round: int
    question: str
    options: tuple[QueryOption, ...]
    has_none: bool
    fallback: bool = False

    @property
    def letters(self) -> tuple[str, ...]:
        return tuple(option.letter for option in self.options)


@dataclass(frozen=True)
class HistoryEntry:
    """One completed round: the plan, its rendering, and the answer."""

    round: int
    plan: QueryPlan
    rendered: RenderedQuery
    option: str
    h_before: int
    h_after: int
    asked_at: float
    answered_at: float


@dataclass(frozen=True)
class _Pending:
    plan: QueryPlan
    rendered: RenderedQuery
    asked_at: float
    # the deduplicated candidates the plan was computed over; the plan's
    # bins index into this tuple
    programs: tuple[Program, ...] = ()


def _complete_scene(cube: Cube, schema: Schema) -> Cube:
    """Deterministically extend ``cube`` to pin one full input scene.

    Every attribute slot gets its cube-forced value or the first value the
    cube does not exclude; every unmentioned relation atom is set false.
    The result admits exactly one model, and it extends ``cube``, so any
    pair of programs the cube forces apart stays forced apart.
    """
    by_atom = {lit.atom: lit.positive for lit in cube.literals}
    literals = list(cube.literals)
    for i in schema.objects():
        for name, values in schema.attributes:
            if any(by_atom.get(attr_atom(i, name, v)) is True for v in values):
                continue
            chosen = next(
                v for v in values if by_atom.get(attr_atom(i, name, v)) is not False
            )
            literals.append(Literal(attr_atom(i, name, chosen)))
    for atom in schema.rel_atoms():
        if atom not in by_atom:
            literals.append(Literal(atom, False))
    return Cube(literals)


class Session:
    """One interactive disambiguation dialogue over a candidate set.

    The working set only ever shrinks; ``converged`` means exactly one
    equivalence class remains, and ``failed`` is a distinct terminal state
    reached when resource limits bite or the recorded answers turn out to
    be mutually inconsistent.  ``next_query`` is idempotent: it computes a
    plan once and re-serves it until ``submit_answer`` consumes it.

    ``clock`` exists so a persistence layer can replay recorded
    timestamps; everything else about a transcript is already a pure
    function of (hypotheses, config).
    """

    def __init__(
        self,
        schema: Schema,
        hypotheses: Sequence[Program],
        config: LearnerConfig,
        *,
        ground_truth: Optional[Program] = None,
        session_id: Optional[str] = None,
        table: Optional[PhraseTable] = None,
        clock: Callable[[], float] = time.time,
    ):
        if not hypotheses:
            raise ValueError("need at least one hypothesis")
        self.id = session_id if session_id is not None else uuid.uuid4().hex
        self.schema = schema
        self.programs: tuple[Program, ...] = tuple(hypotheses)
        self.ground_truth = ground_truth
        self.config = config
        self.table = table if table is not None else PhraseTable()
        self.clock = clock
        self.working: tuple[int, ...] = tuple(range(len(self.programs)))
        self.upre: tuple[Literal, ...] = precondition_universe(schema)
        self.upost: tuple[Literal, ...] = postcondition_universe(schema)
        self.history: list[HistoryEntry] = []
        self.failure_reason: Optional[str] = None
        self._pending: Optional[_Pending] = None
        self.status = (
            "converged" if num_unique(self.programs) == 1 else "awaiting-answer"
        )

    @classmethod
    def from_task(cls, task: Task, config: LearnerConfig, **kwargs) -> "Session":
        return cls(
            task.schema,
            task.hypotheses,
            config,
            ground_truth=task.ground_truth,
            **kwargs,
        )

    # -- observers ---------------------------------------------------------

    @property
    def round(self) -> int:
        """Completed rounds so far."""
        return len(self.history)

    def working_programs(self) -> tuple[Program, ...]:
        return tuple(self.programs[j] for j in self.working)

    def num_unique(self) -> int:
        """Equivalence classes remaining in the working set."""
        return num_unique(self.working_programs())

    def result(self) -> Program:
        """The converged program (a representative of the last class)."""
        if self.status != "converged":
            raise InvalidSessionState(
                f"session is {self.status}, not converged; no result to return"
            )
        return self.programs[self.working[0]]

    # -- the loop ----------------------------------------------------------

    def next_query(self) -> RenderedQuery:
        """Compute (or re-serve) the current round's question.

        Samples the working set, deduplicates it by equivalence, picks the
        best precondition over the session's literal universe (refining it
        once if no cube distinguishes anything), and builds the best
        multiple-choice plan under that precondition.  Exhausting the
        feasibility fallbacks marks the session failed and raises
        :class:`SessionFailed`.
        """
        if self.status != "awaiting-answer":
            raise InvalidSessionState(
                f"session is {self.status}; no further queries can be asked"
            )
        if self._pending is not None:
            return self._pending.rendered
        sample, strict = self._sample_working()
        representatives = self._dedup(sample)
        if len(representatives) == 1 and strict:
            # the seeded sample collapsed to one class even though the
            # working set holds several; plan over the full set instead
            representatives = self._dedup(self.working)
            strict = False
        plan = self._plan_query(representatives)
        rendered = self._render(plan, strict)
        self._pending = _Pending(
            plan=plan,
            rendered=rendered,
            asked_at=self.clock(),
            programs=tuple(representatives),
        )
        return rendered

    def submit_answer(self, option: str) -> None:
        """Filter the full working set by the chosen option.

        A lettered option keeps every candidate whose guaranteed outcome
        under the question's precondition entails that option's cube;
        none-of-the-above keeps the candidates entailing none of the
        listed cubes.  The status then updates: one class left means
        converged, an empty set (mutually inconsistent answers) means
        failed.
        """
        if self.status != "awaiting-answer":
            raise InvalidSessionState(f"cannot answer a {self.status} session")
        if self._pending is None:
            raise InvalidSessionState("no outstanding query; call next_query first")
        rendered = self._pending.rendered
        if option not in rendered.letters:
            raise ValueError(
                f"invalid option {option!r}; expected one of {rendered.letters}"
            )
        plan = self._pending.plan
        chosen = rendered.letters.index(option)
        separators = [cube_formula(sep) for sep in plan.separators]
        keep = []
        for j in self.working:
            sp = strongest_post(self.programs[j], plan.precondition)
            if chosen < len(plan.bins):
                ok = entails(sp, separators[chosen], _OUT_AXIOMS)
            else:
                ok = all(not entails(sp, psi, _OUT_AXIOMS) for psi in separators)
            if ok:
                keep.append(j)
        h_before = len(self.working)
        self.working = tuple(keep)
        self.history.append(
            HistoryEntry(
                round=rendered.round,
                plan=plan,
                rendered=rendered,
                option=option,
                h_before=h_before,
                h_after=len(keep),
                asked_at=self._pending.asked_at,
                answered_at=self.clock(),
            )
        )
        self._pending = None
        if not keep:
            self.status = "failed"
            self.failure_reason = (
                "every candidate was eliminated; the recorded answers are "
                "mutually inconsistent"
            )
        elif self.num_unique() == 1:
            self.status = "converged"

    # -- internals ---------------------------------------------------------

    def _sample_working(self) -> tuple[Sequence[int], bool]:
        working = list(self.working)
        if len(working) > self.config.sample_size:
            rng = random.Random(f"{self.config.seed}:round:{len(self.history)}")
            return sorted(rng.sample(working, self.config.sample_size)), True
        return working, False

    def _dedup(self, indices: Sequence[int]) -> list[Program]:
        representatives: list[Program] = []
        for j in indices:
            program = self.programs[j]
            if all(not equivalent(program, rep) for rep in representatives):
                representatives.append(program)
        return representatives

    def _fail(self, reason: str) -> None:
        self.status = "failed"
        self.failure_reason = reason
        raise SessionFailed(reason)

    def _plan_query(self, representatives: Sequence[Program]) -> QueryPlan:
        dset = build_distinguishing_set(representatives, self.upre)
        best = get_best_precondition(dset, self.upre, self.config.lambda_pre)
        if best is None:
            # no cube over the current universe is worth asking about;
            # grow the universe from the pairs' disagreements and retry
            # (one step reaches the fixed point here)
            self.upre = refine_predicates(representatives, self.upre)
            dset = build_distinguishing_set(representatives, self.upre)
            best = get_best_precondition(dset, self.upre, self.config.lambda_pre)
        if best is None:
            self._fail("no precondition distinguishes the sampled candidates")
        try:
            return generate_query(
                best.cube,
                representatives,
                self.upost,
                self.config.k,
                self.config.lambda_post,
            )
        except (ResourceLimitError, SingleOutcomeError):
            # either option construction hit its resource rails, or the
            # chosen region distinguishes some pair on every single input
            # while both reach the same outcome SET over the whole region;
            # a fully pinned scene resolves both
            plan = self._scene_fallback(dset, representatives)
            if plan is None:
                self._fail(
                    "no multiple-choice split exists under the chosen "
                    "precondition or any candidate scene"
                )
            return plan

    def _scene_fallback(
        self, dset: DistinguishingSet, representatives: Sequence[Program]
    ) -> Optional[QueryPlan]:
        """Retry query construction under fully pinned input scenes.

        On one concrete scene every program guarantees a single outcome
        row, so distinct behaviours always admit exclusive outcome cubes;
        option merging can still fail when more than k distinct rows must
        share bins, hence the bounded scan over candidate scenes (each a
        completion of some pair's distinguishing cube, in canonical
        order).
        """
        attempts = 0
        for _pair, cubes in dset.entries:
            for cube in cubes:
                if attempts >= _FALLBACK_SCENE_ATTEMPTS:
                    return None
                attempts += 1
                scene = _complete_scene(cube, self.schema)
                try:
                    return generate_query(
                        scene,
                        representatives,
                        self.upost,
                        self.config.k,
                        self.config.lambda_post,
                    )
                except (ResourceLimitError, SingleOutcomeError):
                    continue
        return None

    def _render(self, plan: QueryPlan, strict: bool) -> RenderedQuery:
        if self.config.render_mode == "llm":
            cfg = self.config.llm if self.config.llm is not None else LlmConfig()
            base = render_llm(plan, cfg, self.table, none_option=strict)
        else:
            base = render_template(plan, self.table, none_option=strict)
        options = []
        for i, (letter, text) in enumerate(base.options):
            if i < len(plan.bins):
                options.append(
                    QueryOption(letter, text, plan.separators[i], len(plan.bins[i]))
                )
            else:
                options.append(QueryOption(letter, text, None, 0))
        return RenderedQuery(
            round=len(self.history) + 1,
            question=base.question,
            options=tuple(options),
            has_none=strict,
            fallback=base.fallback,
        )


# ---------------------------------------------------------------------------
# benchmarking harnesses
# ---------------------------------------------------------------------------

CSV_HEADER = "task_id,strategy,rounds,converged,equivalent_to_truth,total_ms"


@dataclass(frozen=True)
class RunResult:
    """Outcome of one automated run, in CSV-friendly shape.

    ``h_sizes`` starts with the initial candidate count and appends the
    size after every round; ``round_ms`` holds per-round wall times.
    """

    task_id: str
    strategy: str
    rounds: int
    converged: bool
    equivalent_to_truth: bool
    total_ms: float
    final_program: Optional[Program]
    h_sizes: tuple[int, ...]
    round_ms: tuple[float, ...]

    def csv_row(self) -> str:
        return ",".join(
            [
                self.task_id,
                self.strategy,
                str(self.rounds),
                str(self.converged).lower(),
                str(self.equivalent_to_truth).lower(),
                f"{self.total_ms:.1f}",
            ]
        )


def oracle_option(plan: QueryPlan, query: RenderedQuery, truth: Program) -> str:
    """The letter a truthful answerer picks for this query.

    The truthful choice is the option whose outcome cube the truth's
    guaranteed outcome entails; when no lettered option qualifies the
    truth was outside the sampled bins and the answer is
    none-of-the-above.
    """
    sp = strongest_post(truth, plan.precondition)
    for i, sep in enumerate(plan.separators):
        if entails(sp, cube_formula(sep), _OUT_AXIOMS):
            return query.options[i].letter
    if query.has_none:
        return query.options[-1].letter
    raise AssertionError(
        "no option covers the oracle's program; separators cannot cover "
        "an unsampled working set without a none-of-the-above option"
    )


def run_with_oracle(task: Task, config: LearnerConfig) -> RunResult:
    """Drive a session to termination with truthful answers.

    Returns the per-round trace; ``converged`` is false only if the
    session failed (resource limits), which the benchmark suites assert
    never happens.
    """
    start = time.perf_counter()
    session = Session.from_task(task, config)
    h_sizes = [len(session.working)]
    round_ms: list[float] = []
    while session.status == "awaiting-answer":
        round_start = time.perf_counter()
        try:
            query = session.next_query()
        except SessionFailed:
            break
        plan = session._pending.plan
        session.submit_answer(oracle_option(plan, query, task.ground_truth))
        round_ms.append((time.perf_counter() - round_start) * 1000.0)
        h_sizes.append(len(session.working))
    converged = session.status == "converged"
    final = session.result() if converged else None
    return RunResult(
        task_id=str(task.seed),
        strategy="mc",
        rounds=len(session.history),
        converged=converged,
        equivalent_to_truth=bool(
            final is not None and equivalent(final, task.ground_truth)
        ),
        total_ms=(time.perf_counter() - start) * 1000.0,
        final_program=final,
        h_sizes=tuple(h_sizes),
        round_ms=tuple(round_ms),
    )


def baseline_minimax_io(
    task: Task, input_pool: Sequence[Model], config: LearnerConfig
) -> RunResult:
    """Input-labeling baseline: worst-case-optimal example queries.

    Each round picks the pool input whose worst-case answer keeps the
    smallest fraction of survivors, asks the oracle to label it, and
    keeps the candidates that agree with the label observationally.  The
    loop stops once every survivor agrees on the whole pool; the returned
    program is a seeded random survivor and may be non-equivalent to the
    truth — exactly the failure mode the benchmark records.
    """
    pool = list(input_pool)
    if not pool:
        raise ValueError("input pool must be nonempty")
    start = time.perf_counter()
    schema = task.schema
    patterns = [
        [eval_program(p, m).out_pattern(schema) for m in pool]
        for p in task.hypotheses
    ]
    truth_patterns = [
        eval_program(task.ground_truth, m).out_pattern(schema) for m in pool
    ]
    survivors = list(range(len(task.hypotheses)))
    h_sizes = [len(survivors)]
    round_ms: list[float] = []
    while True:
        round_start = time.perf_counter()
        best_index: Optional[int] = None
        best_worst = 1.0
        for mi in range(len(pool)):
            counts = Counter(patterns[j][mi] for j in survivors)
            worst = max(counts.values()) / len(survivors)
            if worst < best_worst:
                best_index, best_worst = mi, worst
        if best_index is None:
            break  # every survivor labels the whole pool identically
        survivors = [
            j for j in survivors if patterns[j][best_index] == truth_patterns[best_index]
        ]
        round_ms.append((time.perf_counter() - round_start) * 1000.0)
        h_sizes.append(len(survivors))
    rng = random.Random(f"{config.seed}:baseline")
    final = task.hypotheses[rng.choice(survivors)]
    return RunResult(
        task_id=str(task.seed),
        strategy="minimax-io",
        rounds=len(round_ms),
        converged=True,
        equivalent_to_truth=equivalent(final, task.ground_truth),
        total_ms=(time.perf_counter() - start) * 1000.0,
        final_program=final,
        h_sizes=tuple(h_sizes),
        round_ms=tuple(round_ms),
    )

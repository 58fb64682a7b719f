"""Guarded-rule programs over finite object scenes.

A program is a set of rules ``guard -> action``.  Guards are small NNF
templates over two leaf tests: ``SelfAttr`` (the object itself has an
attribute value) and ``ExistsOther`` (some other object, related to it,
matches a cube of attribute literals).  Applying a program to a scene model
emits, for every object, the set of actions whose guards hold there — set
semantics, so rule order never matters.

The module also provides the semantic tools the query engine is built on:
the weakest precondition of two programs disagreeing, strongest
postconditions of a program under a precondition cube (as canonical formulas
over out-action atoms), an exhaustive synthesizer, and a seeded task
generator.
"""

from __future__ import annotations

import functools
import itertools
import random
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .logic import (
    FALSE,
    Atom,
    Axioms,
    Cube,
    Formula,
    Literal,
    Model,
    ResourceLimitError,
    attr_atom,
    cube_formula,
    f_and,
    f_lit,
    f_not,
    f_or,
    is_sat,
    out_atom,
    rel_atom,
    _space_for,  # shared package-internal bitmask space (see strongest_post)
)

__all__ = [
    "Schema",
    "SelfAttr",
    "ExistsOther",
    "Not",
    "And",
    "Or",
    "Guard",
    "Rule",
    "Program",
    "OutputMap",
    "Task",
    "TaskDifficulty",
    "DIFFICULTY_PRESETS",
    "desk_schema",
    "instantiate",
    "eval_program",
    "diff_wp",
    "strongest_post",
    "equivalent",
    "synthesize",
    "gen_task",
    "guard_size",
    "program_size",
    "schema_to_json",
    "schema_from_json",
    "program_to_json",
    "program_from_json",
    "model_to_json",
    "model_from_json",
    "output_map_to_json",
    "output_map_from_json",
    "task_to_json",
    "task_from_json",
]


# ---------------------------------------------------------------------------
# schema
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Schema:
    """A finite scene vocabulary with a bounded object count."""

    attributes: tuple[tuple[str, tuple[str, ...]], ...]
    relations: tuple[str, ...]
    actions: tuple[str, ...]
    n_objects: int

    def __init__(
        self,
        attributes: Mapping[str, Sequence[str]],
        relations: Sequence[str],
        actions: Sequence[str],
        n_objects: int,
    ):
        attrs = tuple((name, tuple(vals)) for name, vals in attributes.items())
        names = [n for n, _ in attrs] + list(relations) + list(actions)
        if len(set(names)) != len(names):
            raise ValueError("attribute/relation/action names must be unique")
        if not actions:
            raise ValueError("schema needs at least one action")
        if n_objects < 1:
            raise ValueError("n_objects must be positive")
        for name, vals in attrs:
            if not vals:
                raise ValueError(f"attribute {name!r} has an empty domain")
        object.__setattr__(self, "attributes", attrs)
        object.__setattr__(self, "relations", tuple(relations))
        object.__setattr__(self, "actions", tuple(actions))
        object.__setattr__(self, "n_objects", n_objects)

    @property
    def attribute_map(self) -> dict[str, tuple[str, ...]]:
        return dict(self.attributes)

    def axioms(self) -> Axioms:
        return Axioms(self.attribute_map)

    def objects(self) -> range:
        return range(self.n_objects)

    def attr_atoms(self) -> list[Atom]:
        return [
            attr_atom(i, name, value)
            for i in self.objects()
            for name, values in self.attributes
            for value in values
        ]

    def rel_atoms(self) -> list[Atom]:
        return [
            rel_atom(i, name, j)
            for name in self.relations
            for i in self.objects()
            for j in self.objects()
            if j != i
        ]

    def out_atoms(self) -> list[Atom]:
        return sorted(
            (out_atom(i, a) for i in self.objects() for a in self.actions),
            key=lambda atom: atom.key,
        )

    def scene_atoms(self) -> list[Atom]:
        """Every input atom a guard may read."""
        return self.attr_atoms() + self.rel_atoms()

    def sample_model(self, rng: random.Random) -> Model:
        attrs = {
            (i, name): rng.choice(values)
            for i in self.objects()
            for name, values in self.attributes
        }
        bools = {atom: rng.random() < 0.5 for atom in self.rel_atoms()}
        return Model(attrs, bools)


def desk_schema(n_objects: int = 3) -> Schema:
    """The default desk-scale scene vocabulary."""
    return Schema(
        attributes={
            "label": ("face", "guitar", "dog"),
            "hair": ("brown", "blonde", "none"),
            "expression": ("smiling", "neutral"),
        },
        relations=["above"],
        actions=["Blur", "Brighten", "Crop"],
        n_objects=n_objects,
    )


# ---------------------------------------------------------------------------
# guards
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SelfAttr:
    """The subject object has ``value`` for ``attribute``."""

    attribute: str
    value: str

    @property
    def key(self) -> tuple:
        return (0, self.attribute, self.value)


@dataclass(frozen=True)
class ExistsOther:
    """Some related other object satisfies a cube of attribute literals.

    ``witness`` entries are (attribute, value, positive) triples evaluated on
    the other object.
    """

    relation: str
    witness: tuple[tuple[str, str, bool], ...]

    def __init__(self, relation: str, witness: Iterable[tuple[str, str, bool]]):
        object.__setattr__(self, "relation", relation)
        object.__setattr__(self, "witness", tuple(sorted(witness)))

    @property
    def key(self) -> tuple:
        return (1, self.relation, self.witness)


@dataclass(frozen=True)
class Not:
    child: "SelfAttr | ExistsOther"

    @property
    def key(self) -> tuple:
        return (2, self.child.key)


@dataclass(frozen=True)
class And:
    children: tuple["Guard", ...]

    def __init__(self, children: Iterable["Guard"]):
        kids = tuple(sorted(children, key=lambda g: g.key))
        if not kids:
            raise ValueError("and-guard needs at least one child")
        object.__setattr__(self, "children", kids)

    @property
    def key(self) -> tuple:
        return (3, tuple(c.key for c in self.children))


@dataclass(frozen=True)
class Or:
    children: tuple["Guard", ...]

    def __init__(self, children: Iterable["Guard"]):
        kids = tuple(sorted(children, key=lambda g: g.key))
        if not kids:
            raise ValueError("or-guard needs at least one child")
        object.__setattr__(self, "children", kids)

    @property
    def key(self) -> tuple:
        return (4, tuple(c.key for c in self.children))


Guard = SelfAttr | ExistsOther | Not | And | Or


def guard_size(g: Guard) -> int:
    """Total node count; witness literals count one node each."""
    if isinstance(g, SelfAttr):
        return 1
    if isinstance(g, ExistsOther):
        return 1 + len(g.witness)
    if isinstance(g, Not):
        return 1 + guard_size(g.child)
    return 1 + sum(guard_size(c) for c in g.children)


def instantiate(g: Guard, subject: int, schema: Schema) -> Formula:
    """The guard's meaning at a concrete object index."""
    if isinstance(g, SelfAttr):
        return f_lit(attr_atom(subject, g.attribute, g.value))
    if isinstance(g, ExistsOther):
        branches = []
        for j in schema.objects():
            if j == subject:
                continue
            witness = [
                f_lit(attr_atom(j, attribute, value), positive)
                for attribute, value, positive in g.witness
            ]
            branches.append(f_and(f_lit(rel_atom(subject, g.relation, j)), *witness))
        return f_or(*branches) if branches else FALSE
    if isinstance(g, Not):
        return f_not(instantiate(g.child, subject, schema))
    parts = [instantiate(c, subject, schema) for c in g.children]
    return f_and(*parts) if isinstance(g, And) else f_or(*parts)


# ---------------------------------------------------------------------------
# rules and programs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Rule:
    guard: Guard
    action: str

    @property
    def key(self) -> tuple:
        return (self.action, self.guard.key)

    @property
    def size(self) -> int:
        return guard_size(self.guard) + 1


@dataclass(frozen=True)
class Program:
    """A canonical, order-insensitive set of rules over one schema."""

    schema: Schema
    rules: tuple[Rule, ...]

    def __init__(self, schema: Schema, rules: Iterable[Rule] = ()):
        canonical = tuple(sorted(set(rules), key=lambda r: r.key))
        object.__setattr__(self, "schema", schema)
        object.__setattr__(self, "rules", canonical)

    @property
    def size(self) -> int:
        return sum(r.size for r in self.rules)


def program_size(p: Program) -> int:
    return p.size


@dataclass(frozen=True)
class OutputMap:
    """Per object, the set of actions a program applied."""

    actions: tuple[frozenset[str], ...]

    def __init__(self, actions: Iterable[Iterable[str]]):
        object.__setattr__(self, "actions", tuple(frozenset(a) for a in actions))

    def of(self, index: int) -> frozenset[str]:
        return self.actions[index]

    def __len__(self) -> int:
        return len(self.actions)

    def out_pattern(self, schema: Schema) -> tuple[bool, ...]:
        """Truth of every schema out-atom, in canonical atom order."""
        return tuple(
            atom.name in self.actions[atom.subject] for atom in schema.out_atoms()
        )


@functools.lru_cache(maxsize=4096)
def _guard_formulas(program: Program) -> tuple[tuple[tuple[str, Formula], ...], ...]:
    """Per object index, the (action, instantiated guard) pairs."""
    return tuple(
        tuple((r.action, instantiate(r.guard, i, program.schema)) for r in program.rules)
        for i in program.schema.objects()
    )


def eval_program(p: Program, m: Model) -> OutputMap:
    """Apply ``p`` to a scene: every action whose guard holds, per object."""
    per_object = []
    for pairs in _guard_formulas(p):
        per_object.append({action for action, g in pairs if g.evaluate(m)})
    return OutputMap(per_object)


def _action_guard(p: Program, subject: int, action: str) -> Formula:
    parts = [g for a, g in _guard_formulas(p)[subject] if a == action]
    return f_or(*parts) if parts else FALSE


@functools.lru_cache(maxsize=32768)
def diff_wp(p1: Program, p2: Program) -> Formula:
    """Weakest precondition of ``p1`` and ``p2`` producing different outputs.

    A scene model satisfies the result exactly when the two programs
    disagree on it: some object receives an action under one program but
    not the other.  Results are memoized: the planner revisits the same
    pairs when deduplicating, pairing and re-planning over surviving
    candidates, and the cache also makes repeated calls hand back the
    identical formula object, so downstream per-formula caches hit too.
    """
    if p1.schema != p2.schema:
        raise ValueError("programs must share a schema")
    schema = p1.schema
    branches = []
    for i in schema.objects():
        for action in schema.actions:
            g1 = _action_guard(p1, i, action)
            g2 = _action_guard(p2, i, action)
            if g1 == g2:
                continue
            branches.append(
                f_or(f_and(g1, f_not(g2)), f_and(f_not(g1), g2))
            )
    return f_or(*branches) if branches else FALSE


@functools.lru_cache(maxsize=65536)
def equivalent(p1: Program, p2: Program) -> bool:
    """Same outputs on every scene of the bounded schema.

    Memoized: deduplication and uniqueness counting test the same pairs
    round after round as the candidate set shrinks.
    """
    return not is_sat(diff_wp(p1, p2), p1.schema.axioms())


# ---------------------------------------------------------------------------
# strongest postconditions
# ---------------------------------------------------------------------------


def _mask_bits(mask: int, total: int) -> np.ndarray:
    data = mask.to_bytes((total + 7) // 8, "little")
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="little")
    return bits[:total].astype(bool)


def image_patterns(p: Program, phi: Cube) -> tuple[tuple[bool, ...], ...]:
    """The exact set of output patterns ``p`` can produce on φ-scenes.

    Patterns are truth tuples over the schema's out-action atoms in
    canonical order, sorted ascending; raises ValueError when φ has no
    scene model.
    """
    schema = p.schema
    axioms = schema.axioms()
    guard_forms = [
        _action_guard(p, atom.subject, atom.name) for atom in schema.out_atoms()
    ]
    phi_formula = cube_formula(phi)
    space = _space_for(axioms, phi_formula, *guard_forms)
    phi_mask = space.formula_mask(phi_formula)
    if phi_mask == 0:
        raise ValueError("precondition is unsatisfiable")
    width = len(guard_forms)
    if width > 63:
        raise ResourceLimitError("more out-action atoms than the packer supports")
    sel = _mask_bits(phi_mask, space.total)
    packed = np.zeros(int(sel.sum()), dtype=np.uint64)
    for k, g in enumerate(guard_forms):
        fired = _mask_bits(space.formula_mask(g), space.total)[sel]
        packed |= fired.astype(np.uint64) << np.uint64(k)
    uniq = np.unique(packed)
    return tuple(
        tuple(bool((v >> k) & 1) for k in range(width)) for v in uniq.tolist()
    )


def strongest_post(p: Program, phi: Cube) -> Formula:
    """Canonical formula over out-action atoms describing p's φ-image.

    The result is the disjunction of one full minterm cube per reachable
    output pattern, so two programs have structurally equal results exactly
    when their images under φ coincide.
    """
    atoms = p.schema.out_atoms()
    minterms = []
    for pattern in image_patterns(p, phi):
        lits = [Literal(atom, bit) for atom, bit in zip(atoms, pattern)]
        minterms.append(cube_formula(Cube(lits)))
    return f_or(*minterms)


# ---------------------------------------------------------------------------
# synthesis
# ---------------------------------------------------------------------------


def _leaf_pool(schema: Schema) -> list[Guard]:
    """The synthesizer's guard leaves, in canonical order."""
    leaves: list[Guard] = []
    for name, values in schema.attributes:
        for value in values:
            leaves.append(SelfAttr(name, value))
            leaves.append(Not(SelfAttr(name, value)))
    for relation in schema.relations:
        for name, values in schema.attributes:
            for value in values:
                probe = ExistsOther(relation, [(name, value, True)])
                leaves.append(probe)
                leaves.append(Not(probe))
    leaves.sort(key=lambda g: g.key)
    return leaves


def _guard_pool(schema: Schema, max_guard_size: int) -> list[Guard]:
    leaves = [l for l in _leaf_pool(schema) if guard_size(l) <= max_guard_size]
    guards: list[Guard] = list(leaves)
    for a, b in itertools.combinations(leaves, 2):
        if 1 + guard_size(a) + guard_size(b) <= max_guard_size:
            guards.append(And([a, b]))
    guards.sort(key=lambda g: (guard_size(g), g.key))
    return guards


def _rule_pool(schema: Schema, size_bound: int) -> list[Rule]:
    rules = [
        Rule(g, action)
        for g in _guard_pool(schema, size_bound - 1)
        for action in schema.actions
    ]
    rules.sort(key=lambda r: (r.size, r.key))
    return rules


def _rule_consistency(
    rule: Rule, schema: Schema, examples: Sequence[tuple[Model, OutputMap]]
) -> tuple[bool, frozenset[tuple[int, int, str]]]:
    """(sound, demands met): soundness = never fires a wrong action."""
    met = set()
    for ei, (model, output) in enumerate(examples):
        for i in schema.objects():
            if instantiate(rule.guard, i, schema).evaluate(model):
                if rule.action not in output.of(i):
                    return False, frozenset()
                met.add((ei, i, rule.action))
    return True, frozenset(met)


def synthesize(
    schema: Schema,
    examples: Sequence[tuple[Model, OutputMap]],
    size_bound: int,
    *,
    max_programs: int | None = None,
) -> list[Program]:
    """Every grammar program of AST size ≤ bound consistent with the examples.

    The grammar: each rule's guard is one leaf or a conjunction of two
    distinct leaves, where a leaf is a possibly negated ``SelfAttr`` or a
    possibly negated single-witness ``ExistsOther``.  Programs are nonempty
    rule sets; results are structurally deduplicated and deterministically
    ordered.  ``max_programs`` is a resource guard: exceeding it raises
    ``ResourceLimitError``.
    """
    demands: set[tuple[int, int, str]] = set()
    for ei, (model, output) in enumerate(examples):
        for i in schema.objects():
            for action in output.of(i):
                demands.add((ei, i, action))

    sound_rules: list[tuple[Rule, frozenset]] = []
    for rule in _rule_pool(schema, size_bound):
        ok, met = _rule_consistency(rule, schema, examples)
        if ok:
            sound_rules.append((rule, met))

    # a demand no sound rule can meet is unsatisfiable
    coverable = set().union(*(met for _, met in sound_rules)) if sound_rules else set()
    if demands - coverable:
        return []

    results: list[Program] = []

    def extend(start: int, chosen: list[Rule], missing: set, budget: int) -> None:
        if not missing and chosen:
            results.append(Program(schema, chosen))
            if max_programs is not None and len(results) > max_programs:
                raise ResourceLimitError(
                    f"synthesis exceeds {max_programs} programs"
                )
        for idx in range(start, len(sound_rules)):
            rule, met = sound_rules[idx]
            if rule.size > budget:
                break  # pool is size-sorted: nothing later fits either
            # the suffix must still be able to cover what's missing
            if missing and not any(
                met2 & missing for _, met2 in sound_rules[idx:]
            ):
                break
            chosen.append(rule)
            extend(idx + 1, chosen, missing - met, budget - rule.size)
            chosen.pop()

    extend(0, [], set(demands), size_bound)
    results.sort(key=lambda p: (p.size, tuple(r.key for r in p.rules)))
    return results


# ---------------------------------------------------------------------------
# task generation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TaskDifficulty:
    """Knobs for generated benchmark tasks."""

    name: str
    size_bound: int
    min_hypotheses: int
    max_hypotheses: int
    n_examples: int = 2
    max_rules: int = 2


DIFFICULTY_PRESETS = {
    "easy": TaskDifficulty("easy", size_bound=4, min_hypotheses=5, max_hypotheses=60),
    "medium": TaskDifficulty("medium", size_bound=5, min_hypotheses=5, max_hypotheses=60),
    "hard": TaskDifficulty(
        "hard", size_bound=6, min_hypotheses=5, max_hypotheses=60, max_rules=2
    ),
}


@dataclass(frozen=True)
class Task:
    """A seeded benchmark instance for the disambiguation loop."""

    schema: Schema
    ground_truth: Program
    examples: tuple[tuple[Model, OutputMap], ...]
    hypotheses: tuple[Program, ...]
    seed: int

    def __init__(self, schema, ground_truth, examples, hypotheses, seed):
        object.__setattr__(self, "schema", schema)
        object.__setattr__(self, "ground_truth", ground_truth)
        object.__setattr__(self, "examples", tuple((m, o) for m, o in examples))
        object.__setattr__(self, "hypotheses", tuple(hypotheses))
        object.__setattr__(self, "seed", seed)


def _sample_program(rng: random.Random, schema: Schema, difficulty: TaskDifficulty) -> Program:
    pool = _rule_pool(schema, difficulty.size_bound)
    budget = difficulty.size_bound
    n_rules = rng.randint(1, difficulty.max_rules)
    rules: list[Rule] = []
    for _ in range(n_rules):
        fitting = [r for r in pool if r.size <= budget and r not in rules]
        if not fitting:
            break
        rule = rng.choice(fitting)
        rules.append(rule)
        budget -= rule.size
    return Program(schema, rules)


def gen_task(
    seed: int,
    schema: Schema | None = None,
    difficulty: TaskDifficulty | str = "medium",
    *,
    max_attempts: int = 200,
) -> Task:
    """A reproducible benchmark task whose hypothesis space fits the knobs."""
    if isinstance(difficulty, str):
        difficulty = DIFFICULTY_PRESETS[difficulty]
    schema = schema or desk_schema()
    rng = random.Random(seed)
    for _ in range(max_attempts):
        gt = _sample_program(rng, schema, difficulty)
        if not gt.rules:
            continue
        examples = []
        for _ in range(difficulty.n_examples):
            m = schema.sample_model(rng)
            examples.append((m, eval_program(gt, m)))
        # degenerate labelling (no action ever fires) rarely disambiguates
        if all(not out.of(i) for _, out in examples for i in schema.objects()):
            continue
        try:
            hypotheses = synthesize(
                schema,
                examples,
                difficulty.size_bound,
                max_programs=max(4 * difficulty.max_hypotheses, 400),
            )
        except ResourceLimitError:
            continue
        if not difficulty.min_hypotheses <= len(hypotheses) <= difficulty.max_hypotheses:
            continue
        if gt not in hypotheses:
            continue
        return Task(schema, gt, examples, hypotheses, seed)
    raise ResourceLimitError(
        f"no task with {difficulty.min_hypotheses}..{difficulty.max_hypotheses} "
        f"hypotheses found in {max_attempts} attempts (seed {seed})"
    )


# ---------------------------------------------------------------------------
# JSON (format "rulelang/1")
# ---------------------------------------------------------------------------

FORMAT = "rulelang/1"


def _require_format(data: Mapping) -> None:
    if data.get("format") != FORMAT:
        raise ValueError(f"expected format {FORMAT!r}, got {data.get('format')!r}")


def schema_to_json(schema: Schema) -> dict:
    return {
        "format": FORMAT,
        "attributes": {name: list(vals) for name, vals in schema.attributes},
        "relations": list(schema.relations),
        "actions": list(schema.actions),
        "n_objects": schema.n_objects,
    }


def schema_from_json(data: Mapping) -> Schema:
    _require_format(data)
    return Schema(
        attributes=data["attributes"],
        relations=data["relations"],
        actions=data["actions"],
        n_objects=data["n_objects"],
    )


def _guard_to_json(g: Guard) -> dict:
    if isinstance(g, SelfAttr):
        return {"op": "selfattr", "attribute": g.attribute, "value": g.value}
    if isinstance(g, ExistsOther):
        return {
            "op": "existsother",
            "relation": g.relation,
            "witness": [
                {"attribute": a, "value": v, "positive": pos}
                for a, v, pos in g.witness
            ],
        }
    if isinstance(g, Not):
        return {"op": "not", "child": _guard_to_json(g.child)}
    op = "and" if isinstance(g, And) else "or"
    return {"op": op, "children": [_guard_to_json(c) for c in g.children]}


def _guard_from_json(data: Mapping) -> Guard:
    op = data["op"]
    if op == "selfattr":
        return SelfAttr(data["attribute"], data["value"])
    if op == "existsother":
        return ExistsOther(
            data["relation"],
            [(w["attribute"], w["value"], bool(w["positive"])) for w in data["witness"]],
        )
    if op == "not":
        child = _guard_from_json(data["child"])
        if not isinstance(child, (SelfAttr, ExistsOther)):
            raise ValueError("negation applies to leaf guards only")
        return Not(child)
    if op in ("and", "or"):
        children = [_guard_from_json(c) for c in data["children"]]
        return And(children) if op == "and" else Or(children)
    raise ValueError(f"unknown guard op {op!r}")


def program_to_json(p: Program) -> dict:
    return {
        "format": FORMAT,
        "schema": schema_to_json(p.schema),
        "rules": [
            {"guard": _guard_to_json(r.guard), "action": r.action} for r in p.rules
        ],
    }


def program_from_json(data: Mapping) -> Program:
    _require_format(data)
    schema = schema_from_json(data["schema"])
    rules = [
        Rule(_guard_from_json(r["guard"]), r["action"]) for r in data["rules"]
    ]
    return Program(schema, rules)


def model_to_json(m: Model, schema: Schema) -> dict:
    objects = []
    for i in schema.objects():
        objects.append({name: m.value(i, name) for name, _ in schema.attributes})
    relations = [
        {"relation": atom.name, "subject": atom.subject, "other": atom.other}
        for atom in schema.rel_atoms()
        if m.truth(atom)
    ]
    return {"objects": objects, "relations": relations}


def model_from_json(data: Mapping, schema: Schema) -> Model:
    attrs = {}
    for i, obj in enumerate(data["objects"]):
        for name, value in obj.items():
            attrs[(i, name)] = value
    true_rels = {
        rel_atom(r["subject"], r["relation"], r["other"]) for r in data["relations"]
    }
    bools = {atom: atom in true_rels for atom in schema.rel_atoms()}
    return Model(attrs, bools)


def output_map_to_json(out: OutputMap) -> list[list[str]]:
    return [sorted(acts) for acts in out.actions]


def output_map_from_json(data: Sequence[Sequence[str]]) -> OutputMap:
    return OutputMap(data)


def task_to_json(task: Task) -> dict:
    return {
        "format": FORMAT,
        "schema": schema_to_json(task.schema),
        "ground_truth": program_to_json(task.ground_truth),
        "examples": [
            {
                "model": model_to_json(m, task.schema),
                "output": output_map_to_json(o),
            }
            for m, o in task.examples
        ],
        "hypotheses": [program_to_json(p) for p in task.hypotheses],
        "seed": task.seed,
    }


def task_from_json(data: Mapping) -> Task:
    _require_format(data)
    schema = schema_from_json(data["schema"])
    examples = [
        (
            model_from_json(e["model"], schema),
            output_map_from_json(e["output"]),
        )
        for e in data["examples"]
    ]
    return Task(
        schema=schema,
        ground_truth=program_from_json(data["ground_truth"]),
        examples=examples,
        hypotheses=[program_from_json(p) for p in data["hypotheses"]],
        seed=data["seed"],
    )

"""Guarded-rule DSL tests: worked examples plus exhaustive-scene oracles.

The second interpreter in ``_oracles`` (written straight from the semantics
equation) and full scene enumeration pin down eval, the disagreement
precondition, strongest postconditions, and equivalence on small schemas.
"""

from __future__ import annotations

import random

import pytest

from disambig.logic import (
    Cube,
    Literal,
    ResourceLimitError,
    attr_atom,
    cube_formula,
    entails,
    is_sat,
    out_atom,
    rel_atom,
)
from disambig.rulelang import (
    And,
    ExistsOther,
    Not,
    Or,
    OutputMap,
    Program,
    Rule,
    Schema,
    SelfAttr,
    desk_schema,
    diff_wp,
    equivalent,
    eval_program,
    gen_task,
    guard_size,
    image_patterns,
    instantiate,
    model_from_json,
    model_to_json,
    program_from_json,
    program_to_json,
    schema_from_json,
    schema_to_json,
    strongest_post,
    synthesize,
    task_from_json,
    task_to_json,
)

from ._oracles import holds, o_eval, o_image, scene_assignments

TINY = Schema(
    attributes={"color": ("red", "blue"), "shape": ("circle", "square")},
    relations=["near"],
    actions=["mark", "tag"],
    n_objects=2,
)

DESK2 = desk_schema(2)

FACE = SelfAttr("label", "face")
BROWN = SelfAttr("hair", "brown")
SMILING = SelfAttr("expression", "smiling")
GUITAR_ABOVE = ExistsOther("above", [("label", "guitar", True)])

P_BROWN = Program(DESK2, [Rule(And([FACE, BROWN]), "Brighten")])
P_SMILE = Program(DESK2, [Rule(And([FACE, SMILING]), "Brighten")])
P_FIND = Program(DESK2, [Rule(And([FACE, GUITAR_ABOVE]), "Brighten")])


def mk_model(schema: Schema, objects, true_rels=()):
    attrs = {}
    for i, spec in enumerate(objects):
        for name, _ in schema.attributes:
            attrs[(i, name)] = spec[name]
    rels = {rel_atom(s, name, o) for name, s, o in true_rels}
    bools = {atom: atom in rels for atom in schema.rel_atoms()}
    from disambig.logic import Model

    return Model(attrs, bools)


def smiling_face(hair="blonde"):
    return {"label": "face", "hair": hair, "expression": "smiling"}


def plain_guitar():
    return {"label": "guitar", "hair": "none", "expression": "neutral"}


def rand_guard(rng: random.Random, schema: Schema, depth: int = 2):
    roll = rng.random()
    if depth == 0 or roll < 0.45:
        if rng.random() < 0.55:
            name, values = rng.choice(schema.attributes)
            leaf = SelfAttr(name, rng.choice(values))
        else:
            relation = rng.choice(schema.relations)
            witness = []
            for _ in range(rng.randint(1, 2)):
                name, values = rng.choice(schema.attributes)
                witness.append((name, rng.choice(values), rng.random() < 0.7))
            leaf = ExistsOther(relation, witness)
        return Not(leaf) if rng.random() < 0.3 else leaf
    kids = [rand_guard(rng, schema, depth - 1) for _ in range(rng.randint(2, 3))]
    return And(kids) if rng.random() < 0.5 else Or(kids)


def rand_program(rng: random.Random, schema: Schema, max_rules: int = 2) -> Program:
    rules = [
        Rule(rand_guard(rng, schema), rng.choice(schema.actions))
        for _ in range(rng.randint(1, max_rules))
    ]
    return Program(schema, rules)


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


def test_empty_program_emits_nothing():
    empty = Program(DESK2, [])
    m = mk_model(DESK2, [smiling_face(), plain_guitar()])
    assert eval_program(empty, m).actions == (frozenset(), frozenset())


def test_smiling_face_program_brightens_only_the_smiling_face():
    m = mk_model(DESK2, [smiling_face(), plain_guitar()])
    out = eval_program(P_SMILE, m)
    assert out.of(0) == {"Brighten"}
    assert out.of(1) == frozenset()


def test_find_program_needs_the_relation_to_hold():
    objs = [smiling_face(), plain_guitar()]
    without = mk_model(DESK2, objs)
    with_rel = mk_model(DESK2, objs, [("above", 0, 1)])
    assert eval_program(P_FIND, without).of(0) == frozenset()
    assert eval_program(P_FIND, with_rel).of(0) == {"Brighten"}


def test_exists_other_is_false_with_a_single_object():
    solo = Schema(
        attributes={"color": ("red", "blue")},
        relations=["near"],
        actions=["mark"],
        n_objects=1,
    )
    p = Program(solo, [Rule(ExistsOther("near", [("color", "red", True)]), "mark")])
    m = mk_model(solo, [{"color": "red"}])
    assert eval_program(p, m).of(0) == frozenset()


def test_eval_matches_the_second_interpreter():
    rng = random.Random(3001)
    for _ in range(60):
        schema = TINY if rng.random() < 0.7 else DESK2
        p = rand_program(rng, schema)
        attrs = {
            (i, name): rng.choice(values)
            for i in range(schema.n_objects)
            for name, values in schema.attributes
        }
        bools = {a: rng.random() < 0.5 for a in schema.rel_atoms()}
        from disambig.logic import Model

        got = eval_program(p, Model(attrs, bools))
        assert got.actions == o_eval(p, attrs, bools)


# ---------------------------------------------------------------------------
# diff_wp / equivalent
# ---------------------------------------------------------------------------


def test_diff_wp_of_a_program_with_itself_is_unsatisfiable():
    rng = random.Random(3002)
    for _ in range(10):
        p = rand_program(rng, TINY)
        assert not is_sat(diff_wp(p, p), TINY.axioms())


def test_diff_wp_separates_the_two_face_programs():
    dwp = diff_wp(P_BROWN, P_SMILE)
    witness = mk_model(
        DESK2,
        [
            {"label": "face", "hair": "brown", "expression": "neutral"},
            plain_guitar(),
        ],
    )
    assert witness.satisfies(dwp)
    brown_not_smiling = Cube(
        [
            Literal(attr_atom(0, "label", "face")),
            Literal(attr_atom(0, "hair", "brown")),
            Literal(attr_atom(0, "expression", "smiling"), False),
        ]
    )
    assert entails(cube_formula(brown_not_smiling), dwp, DESK2.axioms())


def test_diff_wp_holds_exactly_where_outputs_differ():
    rng = random.Random(3003)
    for trial in range(30):
        schema = TINY if trial % 3 else DESK2
        p1 = rand_program(rng, schema)
        p2 = rand_program(rng, schema)
        dwp = diff_wp(p1, p2)
        for attrs, bools in scene_assignments(schema):
            differs = o_eval(p1, attrs, bools) != o_eval(p2, attrs, bools)
            assert holds(dwp, attrs, bools) == differs


def test_equivalent_is_reflexive_and_order_insensitive():
    r1 = Rule(FACE, "Blur")
    r2 = Rule(SMILING, "Crop")
    assert Program(DESK2, [r1, r2]) == Program(DESK2, [r2, r1])
    assert equivalent(Program(DESK2, [r1, r2]), Program(DESK2, [r2, r1]))


def test_equivalent_matches_exhaustive_scene_comparison():
    rng = random.Random(3004)
    for _ in range(25):
        p1 = rand_program(rng, TINY)
        p2 = rand_program(rng, TINY)
        same = all(
            o_eval(p1, a, b) == o_eval(p2, a, b)
            for a, b in scene_assignments(TINY)
        )
        assert equivalent(p1, p2) == same


# ---------------------------------------------------------------------------
# strongest_post
# ---------------------------------------------------------------------------


def test_strongest_post_of_the_empty_program_is_the_all_silent_minterm():
    empty = Program(DESK2, [])
    silent = Cube([Literal(a, False) for a in DESK2.out_atoms()])
    assert strongest_post(empty, Cube()) == cube_formula(silent)


def test_strongest_post_forces_the_guaranteed_action():
    phi = Cube(
        [
            Literal(attr_atom(0, "label", "face")),
            Literal(attr_atom(0, "expression", "smiling")),
        ]
    )
    sp = strongest_post(P_SMILE, phi)
    assert entails(sp, cube_formula(Cube([Literal(out_atom(0, "Brighten"))])), DESK2.axioms())


def test_structurally_different_programs_with_equal_images_compare_equal():
    pa = Program(DESK2, [Rule(FACE, "Blur")])
    pb = Program(DESK2, [Rule(And([FACE]), "Blur")])
    assert pa != pb
    assert strongest_post(pa, Cube()) == strongest_post(pb, Cube())


def test_strongest_post_rejects_unsatisfiable_preconditions():
    clash = Cube(
        [
            Literal(attr_atom(0, "label", "face")),
            Literal(attr_atom(0, "label", "dog")),
        ]
    )
    with pytest.raises(ValueError):
        strongest_post(P_SMILE, clash)


def test_image_patterns_match_exhaustive_projection():
    rng = random.Random(3005)
    for trial in range(30):
        schema = TINY if trial % 3 else DESK2
        p = rand_program(rng, schema)
        lits = []
        for _ in range(rng.randint(0, 3)):
            name, values = rng.choice(schema.attributes)
            lits.append(
                Literal(
                    attr_atom(rng.randrange(schema.n_objects), name, rng.choice(values)),
                    rng.random() < 0.7,
                )
            )
        try:
            phi = Cube(lits)
        except ValueError:
            continue
        want = o_image(p, phi)
        if not want:
            with pytest.raises(ValueError):
                image_patterns(p, phi)
            continue
        assert set(image_patterns(p, phi)) == want


def test_strongest_post_models_are_exactly_the_image():
    rng = random.Random(3006)
    for _ in range(10):
        p = rand_program(rng, TINY)
        sp = strongest_post(p, Cube())
        realizable = o_image(p, [])
        outs = TINY.out_atoms()
        from ._oracles import sat_assignments

        got = set()
        for attrs, bools in sat_assignments(sp, TINY.axioms(), extra_atoms=outs):
            got.add(tuple(bools[a] for a in outs))
        assert got == realizable


# ---------------------------------------------------------------------------
# synthesize
# ---------------------------------------------------------------------------


def test_synthesize_without_examples_counts_single_rule_programs():
    # independent count: guards of size <= 2 are the 8 positive SelfAttr
    # leaves, their 8 negations, and 8 single-witness relation probes;
    # each pairs with 3 actions, and no two-rule program fits in size 3
    n_selfattr = sum(len(vals) for _, vals in desk_schema().attributes)
    n_guards = n_selfattr + n_selfattr + len(desk_schema().relations) * n_selfattr
    want = n_guards * len(desk_schema().actions)
    got = synthesize(desk_schema(), [], 3)
    assert len(got) == want == 72
    assert all(len(p.rules) == 1 and p.size <= 3 for p in got)
    assert len(set(got)) == len(got)


def test_synthesize_recovers_the_labelling_program():
    examples = []
    for objs, rels in [
        ([smiling_face(), plain_guitar()], []),
        (
            [
                {"label": "face", "hair": "brown", "expression": "neutral"},
                smiling_face("brown"),
            ],
            [("above", 0, 1)],
        ),
    ]:
        m = mk_model(DESK2, objs, rels)
        examples.append((m, eval_program(P_SMILE, m)))
    result = synthesize(DESK2, examples, 4)
    assert P_SMILE in result
    for p in result:
        for m, out in examples:
            assert eval_program(p, m) == out


def test_synthesize_returns_nothing_for_contradictory_examples():
    m = mk_model(DESK2, [smiling_face(), plain_guitar()])
    a = OutputMap([{"Brighten"}, set()])
    b = OutputMap([set(), set()])
    assert synthesize(DESK2, [(m, a), (m, b)], 6) == []


def test_synthesize_is_deterministic_and_size_bounded():
    m = mk_model(DESK2, [smiling_face(), plain_guitar()])
    examples = [(m, eval_program(P_SMILE, m))]
    first = synthesize(DESK2, examples, 5)
    second = synthesize(DESK2, examples, 5)
    assert first == second
    assert all(p.size <= 5 for p in first)
    sizes = [p.size for p in first]
    assert sizes == sorted(sizes)


def test_synthesize_resource_guard_trips_on_wide_bounds():
    with pytest.raises(ResourceLimitError):
        synthesize(desk_schema(), [], 8, max_programs=500)


# ---------------------------------------------------------------------------
# gen_task
# ---------------------------------------------------------------------------


def test_gen_task_is_reproducible_and_well_formed():
    t1 = gen_task(42)
    t2 = gen_task(42)
    assert t1 == t2
    assert t1.ground_truth in t1.hypotheses
    assert 5 <= len(t1.hypotheses) <= 60
    for p in t1.hypotheses:
        for m, out in t1.examples:
            assert eval_program(p, m) == out


def test_gen_task_respects_difficulty_presets():
    t = gen_task(7, difficulty="easy")
    assert all(p.size <= 4 for p in t.hypotheses)


# ---------------------------------------------------------------------------
# sizes and JSON
# ---------------------------------------------------------------------------


def test_ast_sizes_count_every_node():
    assert guard_size(FACE) == 1
    assert guard_size(Not(FACE)) == 2
    assert guard_size(GUITAR_ABOVE) == 2
    assert guard_size(And([FACE, BROWN])) == 3
    assert P_BROWN.size == 4
    assert P_FIND.size == 5
    two_rules = Program(DESK2, [Rule(FACE, "Blur"), Rule(Not(FACE), "Crop")])
    assert two_rules.size == 2 + 3


def test_schema_json_round_trip():
    assert schema_from_json(schema_to_json(DESK2)) == DESK2
    with pytest.raises(ValueError):
        schema_from_json({"format": "rulelang/2"})


def test_program_json_round_trip_covers_all_guard_forms():
    p = Program(
        DESK2,
        [
            Rule(Or([Not(FACE), And([BROWN, SMILING])]), "Blur"),
            Rule(ExistsOther("above", [("label", "dog", False), ("hair", "none", True)]), "Crop"),
        ],
    )
    assert program_from_json(program_to_json(p)) == p


def test_model_and_task_json_round_trips():
    m = mk_model(DESK2, [smiling_face(), plain_guitar()], [("above", 1, 0)])
    assert model_from_json(model_to_json(m, DESK2), DESK2) == m
    task = gen_task(11, difficulty="easy")
    assert task_from_json(task_to_json(task)) == task


def test_instantiate_unrolls_exists_other_over_all_partners():
    f = instantiate(GUITAR_ABOVE, 0, desk_schema(3))
    atoms = f.atoms()
    assert rel_atom(0, "above", 1) in atoms
    assert rel_atom(0, "above", 2) in atoms
    assert attr_atom(1, "label", "guitar") in atoms
    assert attr_atom(2, "label", "guitar") in atoms

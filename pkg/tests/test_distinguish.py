"""Distinguishing-cube tests against exhaustive scene-mask oracles."""

from __future__ import annotations

import random

import pytest

from disambig.distinguish import (
    build_distinguishing_set,
    get_distinguishing,
    precondition_universe,
    refine_predicates,
)
from disambig.logic import Cube, Literal, attr_atom, rel_atom
from disambig.rulelang import (
    And,
    ExistsOther,
    Not,
    Program,
    Rule,
    Schema,
    SelfAttr,
    desk_schema,
)

from ._oracles import SceneSpace, o_distinguishing

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

P_BROWN = Program(DESK2, [Rule(And([FACE, BROWN]), "Brighten")])
P_SMILE = Program(DESK2, [Rule(And([FACE, SMILING]), "Brighten")])
P_FIND = Program(
    DESK2,
    [Rule(And([FACE, ExistsOther("above", [("label", "guitar", True)])]), "Brighten")],
)


def rand_program(rng: random.Random, schema: Schema) -> Program:
    pool = []
    for name, values in schema.attributes:
        for value in values:
            pool.append(SelfAttr(name, value))
            pool.append(Not(SelfAttr(name, value)))
    for relation in schema.relations:
        for name, values in schema.attributes:
            for value in values:
                pool.append(ExistsOther(relation, [(name, value, True)]))
    rules = []
    for _ in range(rng.randint(1, 2)):
        kids = rng.sample(pool, rng.randint(1, 2))
        guard = kids[0] if len(kids) == 1 else And(kids)
        rules.append(Rule(guard, rng.choice(schema.actions)))
    return Program(schema, rules)


def test_identical_programs_have_no_distinguishing_cubes():
    uni = precondition_universe(DESK2)
    assert get_distinguishing(P_SMILE, P_SMILE, uni) == ()


def test_brown_versus_smiling_contains_the_expected_cube():
    uni = precondition_universe(DESK2)
    cubes = get_distinguishing(P_BROWN, P_SMILE, uni)
    want = Cube(
        [
            Literal(attr_atom(0, "label", "face")),
            Literal(attr_atom(0, "hair", "brown")),
            Literal(attr_atom(0, "expression", "smiling"), False),
        ]
    )
    assert want in cubes


def test_cubes_match_the_bounded_brute_force():
    rng = random.Random(4001)
    uni = precondition_universe(TINY)
    space = SceneSpace(TINY)
    for _ in range(12):
        p1, p2 = rand_program(rng, TINY), rand_program(rng, TINY)
        got = get_distinguishing(p1, p2, uni, max_cubes=100_000)
        want = o_distinguishing(space, p1, p2, uni, max_len=3)
        assert {frozenset(c) for c in got if len(c) <= 3} == want
        # soundness and minimality of everything returned, at any length
        diff = space.diff_mask(p1, p2)
        for cube in got:
            assert space.entails_diff(cube, diff)
            for lit in cube:
                rest = [l for l in cube if l != lit]
                assert not space.entails_diff(rest, diff)


def test_every_entailing_cube_contains_a_returned_cube():
    rng = random.Random(4002)
    uni = precondition_universe(TINY)
    space = SceneSpace(TINY)
    import itertools

    for _ in range(6):
        p1, p2 = rand_program(rng, TINY), rand_program(rng, TINY)
        got = [frozenset(c) for c in get_distinguishing(p1, p2, uni, max_cubes=100_000)]
        diff = space.diff_mask(p1, p2)
        for combo in itertools.combinations(uni, 3):
            if space.entails_diff(combo, diff):
                assert any(g <= frozenset(combo) for g in got)


def test_cap_keeps_the_shortest_cubes_in_canonical_order():
    uni = precondition_universe(DESK2)
    full = get_distinguishing(P_BROWN, P_FIND, uni, max_cubes=100_000)
    capped = get_distinguishing(P_BROWN, P_FIND, uni, max_cubes=3)
    assert capped == full[:3]
    assert [(len(c), c.key) for c in full] == sorted(
        (len(c), c.key) for c in full
    )


def test_build_distinguishing_set_covers_all_pairs():
    uni = precondition_universe(DESK2)
    neutral = Program(DESK2, [Rule(SelfAttr("expression", "neutral"), "Blur")])
    not_smiling = Program(DESK2, [Rule(Not(SMILING), "Blur")])
    hyps = [P_SMILE, neutral, not_smiling]
    dset = build_distinguishing_set(hyps, uni)
    assert [pair for pair, _ in dset.entries] == [(0, 1), (0, 2), (1, 2)]
    # the two rephrasings of "not smiling" are semantically equal: no cube
    assert dset.cubes(1, 2) == ()
    assert dset.cubes(2, 1) == ()  # unordered access
    assert dset.covered_pairs() == ((0, 1), (0, 2))
    assert dset == build_distinguishing_set(hyps, uni)
    with pytest.raises(KeyError):
        dset.cubes(0, 3)


def test_refine_predicates_is_a_fixed_point_on_a_closed_universe():
    uni = precondition_universe(DESK2)
    hyps = [P_BROWN, P_SMILE, P_FIND]
    assert refine_predicates(hyps, uni) == uni
    assert refine_predicates([], ()) == ()


def test_refine_predicates_adds_missing_relation_atoms():
    attr_only = tuple(
        l for l in precondition_universe(DESK2) if l.atom.kind == "attr"
    )
    silent = Program(DESK2, [])
    refined = refine_predicates([P_FIND, silent], attr_only)
    assert set(refined) >= set(attr_only)
    assert Literal(rel_atom(0, "above", 1), True) in refined
    assert Literal(rel_atom(0, "above", 1), False) in refined
    # monotone and idempotent at the fixed point
    assert set(refined) >= set(attr_only)
    assert refine_predicates([P_FIND, silent], refined) == refined

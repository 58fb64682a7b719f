"""Logic kernel tests: fixed worked examples plus seeded random properties.

Every random property is checked against the brute-force oracles in
``_oracles``, which enumerate assignments with ``itertools.product`` and
never touch the kernel's bitmask/search machinery.
"""

from __future__ import annotations

import random

import pytest

from disambig.logic import (
    FALSE,
    TRUE,
    Axioms,
    Cube,
    Literal,
    ResourceLimitError,
    attr_atom,
    cube_formula,
    cube_from_json,
    cube_to_json,
    enumerate_models,
    entails,
    equivalent_formulas,
    f_and,
    f_lit,
    f_not,
    f_or,
    flag_atom,
    is_sat,
    maxsat,
    out_atom,
    prime_implicants,
    rel_atom,
    to_dnf,
)

from ._oracles import (
    columns_of,
    holds,
    o_entails,
    o_equivalent,
    o_is_sat,
    o_maxsat,
    o_prime_implicants,
    sat_assignments,
)

AX = Axioms({"color": ("red", "green", "blue"), "shape": ("circle", "square")})

COLOR0 = {v: attr_atom(0, "color", v) for v in AX.domain("color")}
COLOR1 = {v: attr_atom(1, "color", v) for v in AX.domain("color")}
SHAPE0 = {v: attr_atom(0, "shape", v) for v in AX.domain("shape")}
SHAPE1 = {v: attr_atom(1, "shape", v) for v in AX.domain("shape")}
NEAR01 = rel_atom(0, "near", 1)
NEAR10 = rel_atom(1, "near", 0)
MARK0 = out_atom(0, "mark")

ATOM_POOL = (
    list(COLOR0.values())
    + list(COLOR1.values())
    + list(SHAPE0.values())
    + list(SHAPE1.values())
    + [NEAR01, NEAR10, MARK0]
)


def rand_formula(rng: random.Random, depth: int = 3, pool=ATOM_POOL):
    """A small random NNF formula over the fixture schema."""
    if depth == 0 or rng.random() < 0.4:
        roll = rng.random()
        if roll < 0.04:
            return TRUE
        if roll < 0.08:
            return FALSE
        return f_lit(rng.choice(pool), rng.random() < 0.6)
    op = f_and if rng.random() < 0.5 else f_or
    return op(*(rand_formula(rng, depth - 1, pool) for _ in range(rng.randint(1, 3))))


def closed(atoms):
    """Literal-closed universe over the given atoms."""
    return [Literal(a, p) for a in atoms for p in (True, False)]


def model_key(model):
    return (
        tuple(sorted(model.attrs.items())),
        tuple(sorted(model.bools.items(), key=lambda kv: kv[0].key)),
    )


def assignment_key(attrs, bools):
    return (
        tuple(sorted(attrs.items())),
        tuple(sorted(bools.items(), key=lambda kv: kv[0].key)),
    )


# ---------------------------------------------------------------------------
# atoms, literals, cubes
# ---------------------------------------------------------------------------


def test_negation_is_involutive():
    for atom in ATOM_POOL + [flag_atom("s1")]:
        for pos in (True, False):
            lit = Literal(atom, pos)
            assert lit.negate().negate() == lit
            assert lit.negate() != lit


def test_relation_atom_rejects_self_loop():
    with pytest.raises(ValueError):
        rel_atom(1, "near", 1)


def test_cube_is_canonical_and_rejects_complements():
    a = Literal(COLOR0["red"])
    b = Literal(NEAR01, False)
    assert Cube([b, a]) == Cube([a, b]) == Cube([a, b, a])
    assert Cube([a, b]).size == 2
    with pytest.raises(ValueError):
        Cube([a, a.negate()])


def test_negative_literal_sorts_before_positive_of_same_atom():
    atom = COLOR0["red"]
    assert Literal(atom, False).key < Literal(atom, True).key
    cube = Cube([Literal(NEAR01, True), Literal(COLOR0["blue"], False)])
    assert cube.literals[0] == Literal(COLOR0["blue"], False)


def test_cube_json_round_trip():
    cube = Cube(
        [
            Literal(COLOR0["red"]),
            Literal(SHAPE1["square"], False),
            Literal(NEAR01, True),
            Literal(MARK0, False),
        ]
    )
    assert cube_from_json(cube_to_json(cube)) == cube


# ---------------------------------------------------------------------------
# to_dnf
# ---------------------------------------------------------------------------


def test_to_dnf_keeps_a_disjunction_that_is_already_dnf():
    a = Literal(NEAR01)
    b = Literal(NEAR10)
    f = f_or(f_and(f_lit(a), f_lit(b)), f_and(f_lit(a), f_lit(b.negate())))
    got = set(to_dnf(f, AX))
    assert got == {Cube([a, b]), Cube([a, b.negate()])}


def test_to_dnf_of_false_is_empty():
    assert to_dnf(FALSE, AX) == ()


def test_to_dnf_drops_theory_contradictions():
    clash = f_and(f_lit(COLOR0["red"]), f_lit(COLOR0["blue"]))
    assert to_dnf(clash, AX) == ()


def test_to_dnf_respects_cube_cap():
    f = f_and(f_lit(NEAR01), TRUE)
    wide = f_and(
        f_or(f_lit(COLOR0["red"]), f_lit(COLOR0["blue"])),
        f_or(f_lit(SHAPE0["circle"]), f_lit(SHAPE0["square"])),
    )
    with pytest.raises(ResourceLimitError):
        to_dnf(wide, AX, max_cubes=3)
    assert len(to_dnf(wide, AX, max_cubes=4)) == 4
    assert to_dnf(f, AX) == (Cube([Literal(NEAR01)]),)


def test_to_dnf_default_cap_triggers_on_wide_products():
    flags = [flag_atom(f"w{i}") for i in range(28)]
    f = f_and(
        *(
            f_or(f_lit(flags[2 * i]), f_lit(flags[2 * i + 1]))
            for i in range(14)
        )
    )
    with pytest.raises(ResourceLimitError):
        to_dnf(f, AX)


def test_to_dnf_equivalence_on_random_formulas():
    rng = random.Random(2001)
    for _ in range(120):
        f = rand_formula(rng)
        cubes = to_dnf(f, AX)
        g = f_or(*(cube_formula(c) for c in cubes)) if cubes else FALSE
        assert o_equivalent(f, g, AX)
        for c in cubes:
            assert o_is_sat(cube_formula(c), AX)


# ---------------------------------------------------------------------------
# is_sat / entails
# ---------------------------------------------------------------------------


def test_is_sat_rejects_propositional_contradiction():
    a = f_lit(NEAR01)
    assert not is_sat(f_and(a, f_not(a)), AX)


def test_is_sat_rejects_two_values_for_one_slot():
    f = f_and(f_lit(COLOR0["red"]), f_lit(COLOR0["blue"]))
    assert not is_sat(f, AX)


def test_is_sat_accepts_clash_free_cubes():
    rng = random.Random(2002)
    for _ in range(100):
        lits = []
        pinned_slots: set = set()
        slot_negatives: dict = {}
        for atom in rng.sample(ATOM_POOL, rng.randint(1, 5)):
            positive = rng.random() < 0.6
            if atom.kind == "attr":
                if atom.slot in pinned_slots:
                    continue
                if positive:
                    if slot_negatives.get(atom.slot):
                        continue
                    pinned_slots.add(atom.slot)
                else:
                    # leave at least one allowed value in the domain
                    taken = slot_negatives.setdefault(atom.slot, set())
                    if len(taken) + 1 >= len(AX.domain(atom.name)):
                        continue
                    taken.add(atom.value)
            lits.append(Literal(atom, positive))
        assert is_sat(cube_formula(Cube(lits)), AX)


def test_is_sat_matches_oracle_on_random_formulas():
    rng = random.Random(2003)
    for _ in range(150):
        f = rand_formula(rng)
        assert is_sat(f, AX) == o_is_sat(f, AX)


def test_entails_is_reflexive_and_false_entails_everything():
    rng = random.Random(2004)
    for _ in range(25):
        f = rand_formula(rng)
        assert entails(f, f, AX)
        assert entails(FALSE, f, AX)


def test_entails_matches_oracle_on_random_pairs():
    rng = random.Random(2005)
    for _ in range(150):
        f = rand_formula(rng)
        g = rand_formula(rng)
        assert entails(f, g, AX) == o_entails(f, g, AX)
        assert equivalent_formulas(f, g, AX) == o_equivalent(f, g, AX)


# ---------------------------------------------------------------------------
# enumerate_models
# ---------------------------------------------------------------------------


def test_enumerate_models_of_true_over_one_relation_atom():
    models = list(enumerate_models(TRUE, [NEAR01], AX))
    assert len(models) == 2
    assert {m.truth(NEAR01) for m in models} == {True, False}


def test_enumerate_models_of_false_is_empty():
    assert list(enumerate_models(FALSE, [NEAR01], AX)) == []


def test_enumerate_models_count_matches_free_domain_product():
    # pinned slot (color0), excluded value (shape1 != square -> 1 option),
    # free: shape0 (2) * color1 (3) * near01,near10 (4) = 24
    cube = Cube([Literal(COLOR0["red"]), Literal(SHAPE1["square"], False)])
    variables = [COLOR0["red"], COLOR1["red"], SHAPE0["circle"], SHAPE1["circle"], NEAR01, NEAR10]
    models = list(enumerate_models(cube_formula(cube), variables, AX))
    assert len(models) == 24
    assert len({model_key(m) for m in models}) == 24
    for m in models:
        assert m.value(0, "color") == "red"
        assert m.value(1, "shape") == "circle"


def test_enumerate_models_rejects_formulas_outside_the_variables():
    with pytest.raises(ValueError):
        list(enumerate_models(f_lit(NEAR01), [NEAR10], AX))


def test_enumerate_models_matches_oracle_assignments():
    rng = random.Random(2006)
    for _ in range(60):
        pool = rng.sample(ATOM_POOL, rng.randint(2, 5))
        f = rand_formula(rng, depth=2, pool=pool)
        got = list(enumerate_models(f, pool, AX))
        assert len(got) == len({model_key(m) for m in got})
        slots, bools = columns_of(AX, [f], extra_atoms=pool)
        want = {
            assignment_key(a, b)
            for a, b in sat_assignments(f, AX, extra_atoms=pool)
        }
        assert {model_key(m) for m in got} == want


def test_enumerate_models_is_deterministic():
    f = f_or(f_lit(COLOR0["red"]), f_lit(NEAR01))
    first = [model_key(m) for m in enumerate_models(f, [COLOR0["red"], NEAR01], AX)]
    second = [model_key(m) for m in enumerate_models(f, [COLOR0["red"], NEAR01], AX)]
    assert first == second


# ---------------------------------------------------------------------------
# prime implicants
# ---------------------------------------------------------------------------


def test_prime_implicants_of_a_literal():
    a = Literal(NEAR01)
    assert prime_implicants(f_lit(a), closed([NEAR01]), AX) == (Cube([a]),)


def test_prime_implicants_absorb_case_split():
    a = Literal(NEAR01)
    b = Literal(NEAR10)
    f = f_or(f_and(f_lit(a), f_lit(b)), f_and(f_lit(a), f_lit(b.negate())))
    assert prime_implicants(f, closed([NEAR01, NEAR10]), AX) == (Cube([a]),)


def test_prime_implicants_empty_when_no_cube_entails():
    a = f_lit(NEAR01)
    b = f_lit(NEAR10)
    xor = f_or(f_and(a, f_not(b)), f_and(f_not(a), b))
    assert prime_implicants(xor, closed([NEAR01]), AX) == ()


def test_prime_implicants_never_mention_irrelevant_atoms():
    f = f_lit(NEAR01)
    universe = closed([NEAR01, MARK0, COLOR1["green"]])
    for cube in prime_implicants(f, universe, AX):
        assert cube.atoms() <= {NEAR01}


def test_prime_implicants_exploit_attribute_domains():
    # color0 is not green and not blue -> must be red
    f = f_lit(COLOR0["red"])
    universe = closed(COLOR0.values())
    got = prime_implicants(f, universe, AX)
    assert Cube([Literal(COLOR0["red"])]) in got
    assert Cube([Literal(COLOR0["green"], False), Literal(COLOR0["blue"], False)]) in got
    assert len(got) == 2


def test_prime_implicants_match_brute_force():
    rng = random.Random(2007)
    for trial in range(60):
        n_atoms = 3 if trial % 2 else 4
        atoms = rng.sample(ATOM_POOL, n_atoms)
        pool = atoms if rng.random() < 0.7 else rng.sample(ATOM_POOL, 3)
        f = rand_formula(rng, depth=2, pool=pool)
        universe = closed(atoms)
        got = prime_implicants(f, universe, AX)
        want = o_prime_implicants(f, universe, AX)
        assert {frozenset(c.literals) for c in got} == want
        # determinism
        assert prime_implicants(f, universe, AX) == got


def test_prime_implicants_are_minimal_sat_and_cover():
    rng = random.Random(2008)
    for _ in range(30):
        atoms = rng.sample(ATOM_POOL, 3)
        f = rand_formula(rng, depth=2, pool=atoms)
        universe = closed(atoms)
        primes = prime_implicants(f, universe, AX)
        prime_sets = {frozenset(c.literals) for c in primes}
        for cube in primes:
            cf = cube_formula(cube)
            assert o_is_sat(cf, AX)
            assert o_entails(cf, f, AX)
            for lit in cube:
                smaller = Cube(l for l in cube if l != lit)
                assert not o_entails(cube_formula(smaller), f, AX)
        # coverage-completeness against the oracle's entailing cubes
        for cand in o_prime_implicants(f, universe, AX):
            assert any(p <= cand for p in prime_sets)


# ---------------------------------------------------------------------------
# maxsat
# ---------------------------------------------------------------------------


def test_maxsat_breaks_symmetric_tie_toward_the_lowest_index():
    s1, s2 = flag_atom("s1"), flag_atom("s2")
    hard = [f_or(f_lit(s1), f_lit(s2))]
    soft = [(Literal(s1, False), 1), (Literal(s2, False), 1)]
    result = maxsat(hard, soft, AX)
    assert result is not None
    assert result.cost == 1
    assert result.model.truth(s1)
    assert not result.model.truth(s2)
    assert result.true_soft_atoms == (s1,)


def test_maxsat_returns_none_when_hard_is_unsatisfiable():
    s1 = flag_atom("s1")
    assert maxsat([f_lit(s1), f_lit(s1, positive=False)], [], AX) is None
    assert maxsat([FALSE], [], AX) is None


def test_maxsat_with_no_constraints_returns_the_empty_model():
    result = maxsat([], [], AX)
    assert result is not None
    assert result.cost == 0
    assert result.true_soft_atoms == ()


def test_maxsat_six_variable_instance_matches_brute_force():
    t = [flag_atom(f"t{i}") for i in range(6)]
    hard = [
        f_or(f_lit(t[0]), f_lit(t[1])),
        f_or(f_lit(t[2], positive=False), f_lit(t[3])),
        f_or(f_lit(t[1], positive=False), f_lit(t[4]), f_lit(t[5])),
        f_or(f_lit(t[0], positive=False), f_lit(t[2])),
    ]
    soft = [
        (Literal(t[0], False), 3),
        (Literal(t[1], False), 2),
        (Literal(t[2], False), 2),
        (Literal(t[3], False), 1),
        (Literal(t[4], False), 1),
        (Literal(t[5], True), 2),
    ]
    result = maxsat(hard, soft, AX)
    want = o_maxsat(hard, soft, AX)
    assert result is not None and want is not None
    assert result.cost == want[0]
    assert tuple(a.key for a in result.true_soft_atoms) == want[1]


def test_maxsat_handles_attribute_literals_in_soft_constraints():
    hard = [f_or(f_lit(COLOR0["red"]), f_lit(COLOR0["blue"]))]
    soft = [(Literal(COLOR0["red"], False), 5)]
    result = maxsat(hard, soft, AX)
    assert result is not None
    assert result.cost == 0
    assert result.model.value(0, "color") == "blue"


def test_maxsat_matches_brute_force_on_random_instances():
    rng = random.Random(2009)
    for trial in range(80):
        flags = [flag_atom(f"f{i}") for i in range(rng.randint(2, 7))]
        hard = []
        for _ in range(rng.randint(0, 4)):
            lits = [
                f_lit(rng.choice(flags), rng.random() < 0.5)
                for _ in range(rng.randint(1, 3))
            ]
            hard.append(f_or(*lits))
        if trial % 3 == 0:
            hard.append(rand_formula(rng, depth=2, pool=flags + [NEAR01]))
        soft = [
            (Literal(rng.choice(flags), rng.random() < 0.5), rng.randint(0, 5))
            for _ in range(rng.randint(0, 6))
        ]
        result = maxsat(hard, soft, AX)
        want = o_maxsat(hard, soft, AX)
        if want is None:
            assert result is None
            continue
        assert result is not None
        assert result.cost == want[0]
        assert tuple(a.key for a in result.true_soft_atoms) == want[1]
        assert all(holds(h, result.model.attrs, result.model.bools) for h in hard)
        recomputed = sum(
            w
            for lit, w in soft
            if result.model.truth(lit.atom) != lit.positive
        )
        assert recomputed == result.cost


def test_maxsat_is_deterministic():
    s = [flag_atom(f"s{i}") for i in range(4)]
    hard = [f_or(f_lit(s[0]), f_lit(s[1]), f_lit(s[2]))]
    soft = [(Literal(a, False), 1) for a in s]
    first = maxsat(hard, soft, AX)
    second = maxsat(hard, soft, AX)
    assert first == second
    assert first is not None
    assert first.true_soft_atoms == (s[0],)

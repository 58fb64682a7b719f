"""Finite-domain propositional logic with an attribute theory.

Ground vocabulary
-----------------
Formulas are built over four kinds of ground atoms:

* ``attr``  -- object ``subject`` has ``value`` for attribute ``name``.
  The theory enforces *exactly one* value per (subject, attribute) slot.
* ``rel``   -- a named binary relation holds between ``subject`` and
  ``other``.  Free boolean.
* ``out``   -- action ``name`` is emitted for object ``subject``.  Free
  boolean; used to describe program outcomes.
* ``flag``  -- an anonymous boolean used as a solver indicator variable.
  Never part of a task vocabulary.

Everything here is an immutable value; all operations are pure.  The
satisfiability core enumerates the finite model space of the *relevant*
columns of a formula as a bitmask (one bit per model), which is exact and
fast at the problem sizes this package targets.  No external solver is
required.
"""

from __future__ import annotations

import heapq
import itertools
import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

__all__ = [
    "Atom",
    "Literal",
    "Cube",
    "Formula",
    "TRUE",
    "FALSE",
    "Axioms",
    "Model",
    "MaxSatResult",
    "ResourceLimitError",
    "attr_atom",
    "rel_atom",
    "out_atom",
    "flag_atom",
    "f_lit",
    "f_and",
    "f_or",
    "f_not",
    "cube_formula",
    "is_sat",
    "entails",
    "equivalent_formulas",
    "to_dnf",
    "enumerate_models",
    "prime_implicants",
    "maxsat",
    "atom_to_json",
    "atom_from_json",
    "literal_to_json",
    "literal_from_json",
    "cube_to_json",
    "cube_from_json",
]

DNF_CUBE_CAP = 10_000
MODEL_SPACE_CAP = 1 << 26  # largest assignment count a bitmask may cover
_MASK_MEMO_CAP = 2048  # per-space formula-mask entries kept before a reset

_KIND_RANK = {"attr": 0, "rel": 1, "out": 2, "flag": 3}


class ResourceLimitError(RuntimeError):
    """An operation exceeded one of its documented resource caps."""


# ---------------------------------------------------------------------------
# atoms, literals, cubes
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Atom:
    """A ground atom.  Use the ``*_atom`` constructors rather than this."""

    kind: str
    subject: int
    name: str
    value: str = ""
    other: int = -1
    _hash: int = 0  # cached; atoms live in hot dict lookups

    def __post_init__(self) -> None:
        if self.kind not in _KIND_RANK:
            raise ValueError(f"unknown atom kind {self.kind!r}")
        if self.kind == "rel" and self.other == self.subject:
            raise ValueError("relation atom must connect two distinct objects")
        object.__setattr__(
            self,
            "_hash",
            hash((self.kind, self.subject, self.name, self.value, self.other)),
        )

    def __hash__(self) -> int:
        return self._hash

    def __reduce__(self) -> tuple:
        # the cached hash mixes per-process string hashing, so pickles must
        # rebuild through __init__ rather than restore a stale _hash
        return (Atom, (self.kind, self.subject, self.name, self.value, self.other))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Atom):
            return NotImplemented
        return (
            self._hash == other._hash
            and self.kind == other.kind
            and self.subject == other.subject
            and self.name == other.name
            and self.value == other.value
            and self.other == other.other
        )

    @property
    def key(self) -> tuple:
        """Canonical sort key; total order over all atoms."""
        return (_KIND_RANK[self.kind], self.subject, self.name, self.value, self.other)

    @property
    def slot(self) -> tuple[int, str] | None:
        """The (subject, attribute) slot for attr atoms, else None."""
        return (self.subject, self.name) if self.kind == "attr" else None

    def __repr__(self) -> str:  # compact, used in test failure output
        if self.kind == "attr":
            return f"{self.name}(x{self.subject})={self.value}"
        if self.kind == "rel":
            return f"{self.name}(x{self.subject},x{self.other})"
        if self.kind == "out":
            return f"do[{self.name}](x{self.subject})"
        return f"flag[{self.name}]"


def attr_atom(subject: int, name: str, value: str) -> Atom:
    return Atom("attr", subject, name, value)


def rel_atom(subject: int, name: str, other: int) -> Atom:
    return Atom("rel", subject, name, "", other)


def out_atom(subject: int, name: str) -> Atom:
    return Atom("out", subject, name)


def flag_atom(name: str) -> Atom:
    return Atom("flag", -1, name)


@dataclass(frozen=True, slots=True)
class Literal:
    """An atom or its negation.  Negation is involutive by construction."""

    atom: Atom
    positive: bool = True

    @property
    def key(self) -> tuple:
        # Canonical order puts a negation just before the same atom's
        # positive form; downstream tie-breaks depend on this being stable.
        return (*self.atom.key, 0 if not self.positive else 1)

    def negate(self) -> "Literal":
        return Literal(self.atom, not self.positive)

    def __repr__(self) -> str:
        return repr(self.atom) if self.positive else f"~{self.atom!r}"


@dataclass(frozen=True)
class Cube:
    """A conjunction of literals in canonical order.

    The constructor deduplicates literals, sorts them canonically and
    rejects complementary pairs.  A cube may still be unsatisfiable w.r.t.
    the attribute theory (e.g. two different positive values for one slot);
    that is a semantic question answered by ``is_sat``.
    """

    literals: tuple[Literal, ...] = ()

    def __init__(self, literals: Iterable[Literal] = ()):
        lits = sorted(set(literals), key=lambda l: l.key)
        by_atom: dict[Atom, bool] = {}
        for lit in lits:
            if by_atom.get(lit.atom, lit.positive) != lit.positive:
                raise ValueError(f"complementary pair on {lit.atom!r}")
            by_atom[lit.atom] = lit.positive
        object.__setattr__(self, "literals", tuple(lits))

    @property
    def size(self) -> int:
        """Complexity of the cube: its literal count."""
        return len(self.literals)

    @property
    def key(self) -> tuple:
        return tuple(l.key for l in self.literals)

    def atoms(self) -> frozenset[Atom]:
        return frozenset(l.atom for l in self.literals)

    def __iter__(self) -> Iterator[Literal]:
        return iter(self.literals)

    def __len__(self) -> int:
        return len(self.literals)

    def __le__(self, other: "Cube") -> bool:
        return set(self.literals) <= set(other.literals)

    def __repr__(self) -> str:
        return "Cube(" + " & ".join(repr(l) for l in self.literals) + ")" if self.literals else "Cube(T)"


# ---------------------------------------------------------------------------
# formulas (negation normal form)
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Formula:
    """An NNF formula tree: literal leaves, and/or nodes, constants."""

    op: str  # "lit" | "and" | "or" | "true" | "false"
    children: tuple["Formula", ...] = ()
    lit: Literal | None = None

    def evaluate(self, model: "Model") -> bool:
        if self.op == "true":
            return True
        if self.op == "false":
            return False
        if self.op == "lit":
            assert self.lit is not None
            return model.truth(self.lit.atom) == self.lit.positive
        if self.op == "and":
            return all(c.evaluate(model) for c in self.children)
        return any(c.evaluate(model) for c in self.children)

    def atoms(self) -> frozenset[Atom]:
        if self.op == "lit":
            assert self.lit is not None
            return frozenset((self.lit.atom,))
        out: set[Atom] = set()
        for c in self.children:
            out |= c.atoms()
        return frozenset(out)

    def __repr__(self) -> str:
        if self.op in ("true", "false"):
            return self.op.upper()
        if self.op == "lit":
            return repr(self.lit)
        sep = " & " if self.op == "and" else " | "
        return "(" + sep.join(repr(c) for c in self.children) + ")"


TRUE = Formula("true")
FALSE = Formula("false")


def f_lit(lit: Literal | Atom, positive: bool = True) -> Formula:
    if isinstance(lit, Atom):
        lit = Literal(lit, positive)
    return Formula("lit", lit=lit)


def _flatten(op: str, parts: Iterable[Formula]) -> list[Formula]:
    out: list[Formula] = []
    for p in parts:
        if p.op == op:
            out.extend(p.children)
        else:
            out.append(p)
    return out


def f_and(*parts: Formula) -> Formula:
    kids = _flatten("and", parts)
    if any(k.op == "false" for k in kids):
        return FALSE
    kids = [k for k in kids if k.op != "true"]
    seen: list[Formula] = []
    for k in kids:
        if k not in seen:
            seen.append(k)
    if not seen:
        return TRUE
    if len(seen) == 1:
        return seen[0]
    return Formula("and", tuple(seen))


def f_or(*parts: Formula) -> Formula:
    kids = _flatten("or", parts)
    if any(k.op == "true" for k in kids):
        return TRUE
    kids = [k for k in kids if k.op != "false"]
    seen: list[Formula] = []
    for k in kids:
        if k not in seen:
            seen.append(k)
    if not seen:
        return FALSE
    if len(seen) == 1:
        return seen[0]
    return Formula("or", tuple(seen))


def f_not(f: Formula) -> Formula:
    """NNF negation: De Morgan duals with negation pushed onto literals."""
    if f.op == "true":
        return FALSE
    if f.op == "false":
        return TRUE
    if f.op == "lit":
        assert f.lit is not None
        return f_lit(f.lit.negate())
    if f.op == "and":
        return f_or(*(f_not(c) for c in f.children))
    return f_and(*(f_not(c) for c in f.children))


def cube_formula(cube: Cube) -> Formula:
    return f_and(*(f_lit(l) for l in cube))


# ---------------------------------------------------------------------------
# theory axioms and models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Axioms:
    """Exactly-one-value-per-slot theory over named attribute domains.

    ``attr_domains`` maps each attribute name to its ordered value tuple.
    Relation, out-action and flag atoms are unconstrained booleans.
    """

    attr_domains: Mapping[str, tuple[str, ...]]

    def __init__(self, attr_domains: Mapping[str, Sequence[str]]):
        object.__setattr__(
            self,
            "attr_domains",
            {name: tuple(vals) for name, vals in attr_domains.items()},
        )

    def domain(self, name: str) -> tuple[str, ...]:
        try:
            return self.attr_domains[name]
        except KeyError:
            raise ValueError(f"attribute {name!r} has no declared domain") from None

    def check_atom(self, atom: Atom) -> None:
        if atom.kind == "attr" and atom.value not in self.domain(atom.name):
            raise ValueError(f"value {atom.value!r} not in domain of {atom.name!r}")

    def __hash__(self) -> int:
        return hash(tuple(sorted((k, v) for k, v in self.attr_domains.items())))


class Model:
    """A theory-consistent assignment over a finite set of columns.

    ``attrs`` assigns one value per (subject, attribute) slot; ``bools``
    assigns a truth value per non-attr atom.  A model is total relative to
    the columns it was built over; querying anything else raises.
    """

    __slots__ = ("_attrs", "_bools", "_key")

    def __init__(self, attrs: Mapping[tuple[int, str], str], bools: Mapping[Atom, bool]):
        self._attrs = dict(attrs)
        self._bools = dict(bools)
        self._key = (
            tuple(sorted(self._attrs.items())),
            tuple(sorted(self._bools.items(), key=lambda kv: kv[0].key)),
        )

    @property
    def attrs(self) -> Mapping[tuple[int, str], str]:
        return dict(self._attrs)

    @property
    def bools(self) -> Mapping[Atom, bool]:
        return dict(self._bools)

    def value(self, subject: int, attribute: str) -> str:
        return self._attrs[(subject, attribute)]

    def truth(self, atom: Atom) -> bool:
        if atom.kind == "attr":
            slot = (atom.subject, atom.name)
            if slot not in self._attrs:
                raise KeyError(f"model does not cover slot {slot}")
            return self._attrs[slot] == atom.value
        if atom not in self._bools:
            raise KeyError(f"model does not cover atom {atom!r}")
        return self._bools[atom]

    def satisfies(self, f: Formula) -> bool:
        return f.evaluate(self)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Model) and self._key == other._key

    def __hash__(self) -> int:
        return hash(self._key)

    def __repr__(self) -> str:
        parts = [f"x{s}.{a}={v}" for (s, a), v in sorted(self._attrs.items())]
        parts += [f"{atom!r}={'T' if t else 'F'}" for atom, t in sorted(self._bools.items(), key=lambda kv: kv[0].key)]
        return "Model(" + ", ".join(parts) + ")"


# ---------------------------------------------------------------------------
# model-space bitmasks
# ---------------------------------------------------------------------------


def _repunit(period: int, reps: int) -> int:
    # 1 + 2^period + 2^(2 period) + ... (reps terms)
    return ((1 << (period * reps)) - 1) // ((1 << period) - 1)


class _Column:
    __slots__ = ("kind", "slot", "atom", "size", "values")

    def __init__(self, kind: str, slot=None, atom=None, values=()):
        self.kind = kind  # "slot" | "bool"
        self.slot = slot
        self.atom = atom
        self.size = len(values) if kind == "slot" else 2
        self.values = tuple(values)

    @property
    def sort_key(self) -> tuple:
        if self.kind == "slot":
            return (0, self.slot[0], self.slot[1])
        return (1, *self.atom.key)


class _Space:
    """Bitmask semantics over the product space of a fixed column list."""

    def __init__(self, axioms: Axioms, slots: Iterable[tuple[int, str]], bool_atoms: Iterable[Atom]):
        cols: list[_Column] = []
        for slot in set(slots):
            cols.append(_Column("slot", slot=slot, values=axioms.domain(slot[1])))
        for atom in set(bool_atoms):
            cols.append(_Column("bool", atom=atom, values=(False, True)))
        cols.sort(key=lambda c: c.sort_key)
        self.axioms = axioms
        self.columns = cols
        self.suffix_total = [1] * (len(cols) + 1)
        for i in range(len(cols) - 1, -1, -1):
            self.suffix_total[i] = self.suffix_total[i + 1] * cols[i].size
        self.total = self.suffix_total[0]
        self._full: int | None = None
        self._col_index: dict = {}
        for i, c in enumerate(cols):
            self._col_index[c.slot if c.kind == "slot" else c.atom] = i
        self._atom_mask_cache: dict[Atom, int] = {}
        # formula masks keyed by object identity: instantiated guards are
        # themselves cached per program, so the same subformula objects
        # recur across many difference formulas; each entry pins its
        # formula so the id stays valid for the entry's lifetime
        self._mask_memo: dict[int, tuple[Formula, int]] = {}

    @property
    def full(self) -> int:
        # Masks are materialized lazily: branch-and-bound search uses only
        # the column list, so spaces far too large to bitmask stay usable
        # there while mask-based callers fail loudly.
        if self._full is None:
            if self.total > MODEL_SPACE_CAP:
                raise ResourceLimitError(
                    f"model space of {self.total} assignments exceeds the "
                    f"bitmask cap of {MODEL_SPACE_CAP}"
                )
            self._full = (1 << self.total) - 1
        return self._full

    def _digit_mask(self, col_idx: int, value_idx: int) -> int:
        _ = self.full  # capacity gate
        stride = self.suffix_total[col_idx + 1]
        size = self.columns[col_idx].size
        period = size * stride
        base = ((1 << stride) - 1) << (value_idx * stride)
        return base * _repunit(period, self.total // period)

    def atom_mask(self, atom: Atom) -> int:
        cached = self._atom_mask_cache.get(atom)
        if cached is not None:
            return cached
        if atom.kind == "attr":
            idx = self._col_index.get(atom.slot)
            if idx is None:
                raise KeyError(f"atom {atom!r} outside this space")
            col = self.columns[idx]
            self.axioms.check_atom(atom)
            mask = self._digit_mask(idx, col.values.index(atom.value))
        else:
            idx = self._col_index.get(atom)
            if idx is None:
                raise KeyError(f"atom {atom!r} outside this space")
            mask = self._digit_mask(idx, 1)
        self._atom_mask_cache[atom] = mask
        return mask

    def literal_mask(self, lit: Literal) -> int:
        m = self.atom_mask(lit.atom)
        return m if lit.positive else (self.full ^ m)

    def formula_mask(self, f: Formula) -> int:
        if f.op == "true":
            return self.full
        if f.op == "false":
            return 0
        if f.op == "lit":
            assert f.lit is not None
            return self.literal_mask(f.lit)
        hit = self._mask_memo.get(id(f))
        if hit is not None:
            return hit[1]
        if f.op == "and":
            m = self.full
            for c in f.children:
                m &= self.formula_mask(c)
                if not m:
                    break
        else:
            m = 0
            full = self.full
            for c in f.children:
                m |= self.formula_mask(c)
                if m == full:
                    break
        if len(self._mask_memo) >= _MASK_MEMO_CAP:
            self._mask_memo.clear()
        self._mask_memo[id(f)] = (f, m)
        return m

    def cube_mask(self, cube: Cube) -> int:
        m = self.full
        for lit in cube:
            m &= self.literal_mask(lit)
            if not m:
                return 0
        return m

    def model_at(self, index: int) -> Model:
        attrs: dict[tuple[int, str], str] = {}
        bools: dict[Atom, bool] = {}
        for i, col in enumerate(self.columns):
            digit = (index // self.suffix_total[i + 1]) % col.size
            if col.kind == "slot":
                attrs[col.slot] = col.values[digit]
            else:
                bools[col.atom] = bool(digit)
        return Model(attrs, bools)

    def iter_indices(self, mask: int) -> Iterator[int]:
        while mask:
            low = mask & -mask
            idx = low.bit_length() - 1
            yield idx
            mask ^= low


def _collect_columns(
    axioms: Axioms, formulas: Iterable[Formula], extra_atoms: Iterable[Atom] = ()
) -> tuple[set[tuple[int, str]], set[Atom]]:
    slots: set[tuple[int, str]] = set()
    bools: set[Atom] = set()
    for atom in itertools.chain(*(f.atoms() for f in formulas), extra_atoms):
        if atom.kind == "attr":
            axioms.check_atom(atom)
            slots.add((atom.subject, atom.name))
        else:
            bools.add(atom)
    return slots, bools


# Spaces are pure given (axioms, columns), and their lazily built literal
# masks are the expensive part, so identical requests share one instance.
_SPACE_CACHE: dict[tuple, _Space] = {}
_SPACE_CACHE_MAX = 64

# prime-implicant results remembered per scene space (the keyed masks can
# be large, so the cap keeps one space's cache tens of megabytes at most)
_IMPLICANT_CACHE_CAP = 1024


def _space_for(axioms: Axioms, *formulas: Formula, extra_atoms: Iterable[Atom] = ()) -> _Space:
    slots, bools = _collect_columns(axioms, formulas, extra_atoms)
    key = (
        axioms,
        tuple(sorted(slots)),
        tuple(sorted(a.key for a in bools)),
    )
    space = _SPACE_CACHE.get(key)
    if space is None:
        space = _Space(axioms, slots, bools)
        if len(_SPACE_CACHE) >= _SPACE_CACHE_MAX:
            _SPACE_CACHE.clear()
        _SPACE_CACHE[key] = space
    return space


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------


def is_sat(f: Formula, axioms: Axioms) -> bool:
    """True iff some theory-consistent model satisfies ``f``."""
    space = _space_for(axioms, f)
    return space.formula_mask(f) != 0


def entails(f: Formula, g: Formula, axioms: Axioms) -> bool:
    """True iff every theory-consistent model of ``f`` satisfies ``g``."""
    space = _space_for(axioms, f, g)
    return space.formula_mask(f) & ~space.formula_mask(g) & space.full == 0


def equivalent_formulas(f: Formula, g: Formula, axioms: Axioms) -> bool:
    space = _space_for(axioms, f, g)
    return space.formula_mask(f) == space.formula_mask(g)


def _merge_cube(lits: frozenset[Literal], extra: Iterable[Literal], axioms: Axioms) -> frozenset[Literal] | None:
    """Conjoin literal sets; None when syntactically or theory unsatisfiable."""
    merged = dict[Atom, bool]()
    for lit in itertools.chain(lits, extra):
        prev = merged.get(lit.atom)
        if prev is not None and prev != lit.positive:
            return None
        merged[lit.atom] = lit.positive
    # slot-level checks: at most one positive value, negatives must leave room
    by_slot: dict[tuple[int, str], list[tuple[Atom, bool]]] = {}
    for atom, pos in merged.items():
        if atom.kind == "attr":
            by_slot.setdefault(atom.slot, []).append((atom, pos))
    out: set[Literal] = set()
    for slot, entries in by_slot.items():
        domain = axioms.domain(slot[1])
        positives = [a for a, p in entries if p]
        negatives = [a for a, p in entries if not p]
        if len(positives) > 1:
            return None
        if positives:
            # positive value subsumes any negative literal on the same slot
            out.add(Literal(positives[0], True))
        else:
            if {n.value for n in negatives} >= set(domain):
                return None
            out.update(Literal(n, False) for n in negatives)
    for atom, pos in merged.items():
        if atom.kind != "attr":
            out.add(Literal(atom, pos))
    return frozenset(out)


def to_dnf(f: Formula, axioms: Axioms, max_cubes: int = DNF_CUBE_CAP) -> tuple[Cube, ...]:
    """An equivalent disjunction of theory-satisfiable cubes.

    Contradictory cubes are dropped and same-slot redundancies removed; the
    result is deterministic.  Raises ResourceLimitError past ``max_cubes``.
    """

    def rec(node: Formula) -> list[frozenset[Literal]]:
        if node.op == "true":
            return [frozenset()]
        if node.op == "false":
            return []
        if node.op == "lit":
            assert node.lit is not None
            m = _merge_cube(frozenset((node.lit,)), (), axioms)
            return [m] if m is not None else []
        if node.op == "or":
            out: list[frozenset[Literal]] = []
            seen: set[frozenset[Literal]] = set()
            for c in node.children:
                for cube in rec(c):
                    if cube not in seen:
                        seen.add(cube)
                        out.append(cube)
                if len(out) > max_cubes:
                    raise ResourceLimitError(f"DNF exceeds {max_cubes} cubes")
            return out
        # and: distribute
        acc: list[frozenset[Literal]] = [frozenset()]
        for c in node.children:
            branch = rec(c)
            nxt: list[frozenset[Literal]] = []
            seen2: set[frozenset[Literal]] = set()
            for left in acc:
                for right in branch:
                    merged = _merge_cube(left, right, axioms)
                    if merged is not None and merged not in seen2:
                        seen2.add(merged)
                        nxt.append(merged)
                if len(nxt) > max_cubes:
                    raise ResourceLimitError(f"DNF exceeds {max_cubes} cubes")
            acc = nxt
            if not acc:
                return []
        return acc

    raw = rec(f)
    # absorption keeps the result tidy without affecting equivalence
    raw.sort(key=len)
    kept: list[frozenset[Literal]] = []
    if len(raw) <= 2000:
        for cand in raw:
            if not any(k <= cand for k in kept):
                kept.append(cand)
    else:
        kept = raw
    cubes = [Cube(c) for c in kept]
    cubes.sort(key=lambda c: (c.size, c.key))
    return tuple(cubes)


def enumerate_models(f: Formula, variables: Iterable[Atom], axioms: Axioms) -> Iterator[Model]:
    """Every satisfying assignment of ``f`` over ``variables``, exactly once.

    The assignment space is the product of the slots touched by attr atoms
    in ``variables`` (whole slots, per the exactly-one theory) with the
    boolean atoms listed.  ``f`` must not mention anything outside that
    space.
    """
    vars_list = list(variables)
    slots, bools = _collect_columns(axioms, [], vars_list)
    f_slots, f_bools = _collect_columns(axioms, [f])
    if not f_slots <= slots or not f_bools <= bools:
        raise ValueError("formula mentions atoms outside the enumeration variables")
    space = _Space(axioms, slots, bools)
    mask = space.formula_mask(f)
    for idx in space.iter_indices(mask):
        yield space.model_at(idx)


# -- prime implicants -------------------------------------------------------


def _slot_options(
    col: _Column, universe: Sequence[Literal]
) -> list[tuple[tuple[int, ...], list[frozenset[Literal]]]]:
    """All minimal-form literal constraints available on one column.

    Returns (allowed value-index tuple, literal-set encodings) pairs.  For a
    slot column the encodings are a single positive literal or a set of
    negative literals; for a boolean column a single literal of either sign.
    """
    by_allowed: dict[tuple[int, ...], list[frozenset[Literal]]] = {}
    all_idx = tuple(range(col.size))
    by_allowed[all_idx] = [frozenset()]
    if col.kind == "bool":
        for lit in universe:
            if lit.atom == col.atom:
                allowed = (1,) if lit.positive else (0,)
                by_allowed.setdefault(allowed, []).append(frozenset((lit,)))
        return list(by_allowed.items())
    pos = {}
    neg = {}
    for lit in universe:
        if lit.atom.kind == "attr" and lit.atom.slot == col.slot:
            iv = col.values.index(lit.atom.value)
            (pos if lit.positive else neg)[iv] = lit
    for iv, lit in pos.items():
        by_allowed.setdefault((iv,), []).append(frozenset((lit,)))
    neg_indices = sorted(neg)
    for r in range(1, len(neg_indices) + 1):
        for combo in itertools.combinations(neg_indices, r):
            allowed = tuple(i for i in all_idx if i not in combo)
            if not allowed:
                continue
            by_allowed.setdefault(allowed, []).append(frozenset(neg[i] for i in combo))
    return list(by_allowed.items())


_BULK_BUDGET = 4  # cube size the bulk sweep covers before the search goes lazy
_DEAD = object()  # option group that admits no completion
_FULL = object()  # option group whose child region is the whole suffix space


def _lex_key(lm: int) -> tuple[int, ...]:
    """Set bit indices of ``lm``, ascending."""
    idxs = []
    while lm:
        low = lm & -lm
        idxs.append(low.bit_length() - 1)
        lm ^= low
    return tuple(idxs)


class _ImplicantSearch:
    """Minimal-cube enumeration over one scene space and literal universe.

    The search graph has one state per (column index, suffix scene mask):
    a cube claiming scene set ``m`` from column ``i`` on either skips the
    column or constrains it through one consistent literal set — an
    *option group* — whose allowed values slice ``m`` into the child state
    at column ``i + 1``.  Completions are (size, negated reversal, literal
    mask) triples: negating the bit-reversed mask makes plain tuple order
    equal the public output order (fewest literals first, then canonical
    literal order), and because columns own disjoint index ranges a child
    completion composes with a parent encoding by plain subtraction.

    Two engines share these tables.  :meth:`run` answers a capped query by
    sweeping every cube of at most ``_BULK_BUDGET`` literals in one
    memoized pass — cheapest when small cubes abound — and falls back to
    best-first enumeration that materializes per-state sorted streams
    through candidate heaps, which touches only what the cap demands when
    cubes are scarce.  Both emit identical entries in identical order.
    """

    def __init__(self, space: _Space, uni: Sequence[Literal]) -> None:
        cols = space.columns
        self.col_sizes = [col.size for col in cols]
        self.suffix_total = space.suffix_total
        self.suffix_full = [
            (1 << space.suffix_total[i]) - 1 for i in range(len(cols) + 1)
        ]

        lit_index = {lit: t for t, lit in enumerate(uni)}
        n_bits = len(uni)
        rev_single = [1 << (n_bits - 1 - t) for t in range(n_bits)]

        def rev_of(lm: int) -> int:
            r = 0
            while lm:
                low = lm & -lm
                r |= rev_single[low.bit_length() - 1]
                lm ^= low
            return r

        # per column: option groups (allowed value indices, [(literal-index
        # mask, cost)...] cheapest-first, matching reversals) sorted by
        # their cheapest encoding, plus prefix counts so a bulk scan with
        # remaining budget r touches only groups owning an encoding within r
        self.options: list[
            list[tuple[tuple[int, ...], list[tuple[int, int]], list[int]]]
        ] = []
        self.affordable: list[list[int]] = []
        for col in cols:
            opts = []
            for allowed, litsets in _slot_options(col, uni):
                encs = []
                for litset in litsets:
                    lm = 0
                    for lit in litset:
                        lm |= 1 << lit_index[lit]
                    encs.append((lm, len(litset)))
                encs.sort(key=lambda e: (e[1], e[0]))
                opts.append((allowed, encs, [rev_of(lm) for lm, _ in encs]))
            opts.sort(key=lambda o: o[1][0][1])
            max_min_cost = opts[-1][1][0][1] if opts else 0
            counts = [0] * (max_min_cost + 1)
            for _, encs, _ in opts:
                counts[encs[0][1]] += 1
            upto = []
            running = 0
            for n in counts:
                running += n
                upto.append(running)
            self.options.append(opts)
            self.affordable.append(upto)

        # neg_rev_suffix[i]: negated reversal of every literal on columns
        # >= i — no completion over those columns sorts below it, so it is
        # a sound heap key for entries that are not materialized yet
        self.neg_rev_suffix = [0] * (len(cols) + 1)
        for i in range(len(cols) - 1, -1, -1):
            acc = -self.neg_rev_suffix[i + 1]
            for _, _, revs in self.options[i]:
                for rv in revs:
                    acc |= rv
            self.neg_rev_suffix[i] = -acc

    def run(
        self, mask: int, max_cubes: int | None
    ) -> list[tuple[int, int, int]]:
        """Entries completing ``mask``, cut to ``max_cubes`` when set."""
        if mask == self.suffix_full[0]:
            return [(0, 0, 0)]  # the empty cube already entails the formula
        if max_cubes is not None:
            # entries sort fewest-literals-first, so once one budget's
            # complete sweep already holds ``max_cubes`` entries, larger
            # cubes cannot enter the prefix; the full-budget sweep costs
            # an order of magnitude more than the one below it, so try
            # that cheaper sweep first
            for budget in (_BULK_BUDGET - 1, _BULK_BUDGET):
                found = self._bulk(mask, budget)
                if len(found) >= max_cubes:
                    return found[:max_cubes]
        return self._lazy(mask, max_cubes)

    def _bulk(self, mask: int, budget: int) -> list[tuple[int, int, int]]:
        """Every minimal completion of ``mask`` within ``budget`` literals.

        One exhaustive memoized sweep, complete and sorted — callers that
        find enough entries here need nothing else.
        """
        options = self.options
        affordable = self.affordable
        col_sizes = self.col_sizes
        suffix_total = self.suffix_total
        suffix_full = self.suffix_full
        memo: dict[tuple[int, int], list] = {}
        memo_get = memo.get
        full_entry = [(0, 0, 0)]

        def rec(i: int, m: int, budget: int) -> list[tuple[int, int, int]]:
            # returns (size, negated reversal, mask) sorted; entries may
            # exceed the budget on memo hits — consumers cut by size
            key = (i, m)
            hit = memo_get(key)
            if hit is not None and hit[0] >= budget:
                return hit[1]
            stride = suffix_total[i + 1]
            sub_full = suffix_full[i + 1]
            slices = [(m >> (v * stride)) & sub_full for v in range(col_sizes[i])]
            raw: set[tuple[int, int, int]] = set()
            add = raw.add
            upto = affordable[i]
            prefix = upto[budget] if budget < len(upto) else upto[-1]
            for allowed, encs, revs in options[i][:prefix]:
                sub = sub_full
                for v in allowed:
                    sub &= slices[v]
                    if not sub:
                        break
                if not sub:
                    continue
                for e_idx, (lm, cost) in enumerate(encs):
                    if cost > budget:
                        break
                    rest = budget - cost
                    rv = revs[e_idx]
                    if sub == sub_full:
                        child = full_entry
                    else:
                        c_key = (i + 1, sub)
                        c_hit = memo_get(c_key)
                        if c_hit is not None and c_hit[0] >= rest:
                            child = c_hit[1]
                        elif rest > 0:
                            child = rec(i + 1, sub, rest)
                        else:
                            continue
                    for t_size, t_negrev, t_mask in child:
                        if t_size > rest:
                            break
                        add((cost + t_size, t_negrev - rv, lm | t_mask))
            cands = sorted(raw)
            kept: list[tuple[int, int, int]] = []
            kept_smaller = 0  # entries strictly below the current size class
            cur_size = -1
            for entry in cands:
                size, cand = entry[0], entry[2]
                if size != cur_size:
                    kept_smaller, cur_size = len(kept), size
                # equal-size entries are distinct, so only smaller ones subsume
                for k in kept[:kept_smaller]:
                    km = k[2]
                    if km & cand == km:
                        break
                else:
                    kept.append(entry)
            memo[key] = [budget, kept]
            return kept

        found = rec(0, mask, budget)
        for n, e in enumerate(found):
            if e[0] > budget:
                return found[:n]
        return found

    def _lazy(
        self, mask: int, max_cubes: int | None
    ) -> list[tuple[int, int, int]]:
        """Completions of ``mask`` streamed best-first, cut to ``max_cubes``.

        States materialize sorted entry streams on demand: each state's
        heap mixes materialized entries with pending per-group items keyed
        by an admissible lower bound, so work scales with the entries
        actually delivered rather than with every candidate of equal size.
        """
        options = self.options
        col_sizes = self.col_sizes
        suffix_total = self.suffix_total
        suffix_full = self.suffix_full
        neg_rev_suffix = self.neg_rev_suffix
        seq = itertools.count()  # unique tie-break, nothing compares past it
        heappush = heapq.heappush
        heappop = heapq.heappop

        class _Node:
            __slots__ = ("i", "m", "heap", "out", "groups", "slices")

            def __init__(self, i: int, m: int) -> None:
                self.i = i
                self.m = m
                self.out: list[tuple[int, int, int]] = []
                self.groups: list = [None] * len(options[i])
                self.slices: list[int] | None = None
                nrs = neg_rev_suffix[i]
                self.heap = [
                    (encs[0][1], nrs, next(seq), 0, g, 0)
                    for g, (_, encs, _) in enumerate(options[i])
                ]
                heapq.heapify(self.heap)

        nodes: dict[tuple[int, int], _Node] = {}

        def get_node(i: int, m: int) -> _Node:
            key = (i, m)
            node = nodes.get(key)
            if node is None:
                node = nodes[key] = _Node(i, m)
            return node

        def node_get(node: _Node, r: int) -> tuple[int, int, int] | None:
            # entry of rank r in the node's stream, or None once exhausted
            out = node.out
            heap = node.heap
            while r >= len(out):
                if not heap:
                    return None
                top = heappop(heap)
                g_idx = top[4]
                grp = node.groups[g_idx]
                allowed, encs, revs = options[node.i][g_idx]
                if top[3] == 0:  # pending encoding: materialize its rank 0
                    e_idx = top[5]
                    if grp is None:  # first touch: resolve the child state
                        slices = node.slices
                        if slices is None:
                            stride = suffix_total[node.i + 1]
                            sub_full = suffix_full[node.i + 1]
                            slices = node.slices = [
                                (node.m >> (v * stride)) & sub_full
                                for v in range(col_sizes[node.i])
                            ]
                        sub = suffix_full[node.i + 1]
                        for v in allowed:
                            sub &= slices[v]
                            if not sub:
                                break
                        if not sub:
                            grp = _DEAD
                        elif sub == suffix_full[node.i + 1]:
                            grp = _FULL
                        else:
                            grp = get_node(node.i + 1, sub)
                        node.groups[g_idx] = grp
                    if grp is _DEAD:
                        continue  # no encoding of this group can complete
                    if grp is _FULL:
                        centry = (0, 0, 0)
                    else:
                        centry = node_get(grp, 0)
                        if centry is None:  # live child, empty stream
                            node.groups[g_idx] = _DEAD
                            continue
                    lm, cost = encs[e_idx]
                    heappush(heap, (
                        cost + centry[0], centry[1] - revs[e_idx],
                        next(seq), 1, g_idx, e_idx, 0, lm | centry[2],
                    ))
                    if e_idx + 1 < len(encs):
                        heappush(heap, (
                            encs[e_idx + 1][1], neg_rev_suffix[node.i],
                            next(seq), 0, g_idx, e_idx + 1,
                        ))
                else:  # materialized entry: pops in true stream order
                    size, negrev = top[0], top[1]
                    e_idx, rank, lm = top[5], top[6], top[7]
                    # equal-size entries are distinct, so only smaller ones
                    # can subsume — and all of those emitted already
                    subsumed = False
                    for k_size, _, k_lm in out:
                        if k_size >= size:
                            break
                        if k_lm & lm == k_lm:
                            subsumed = True
                            break
                    if not subsumed:
                        out.append((size, negrev, lm))
                    if grp is _FULL:
                        continue  # the empty completion was its only entry
                    centry = node_get(grp, rank + 1)
                    if centry is not None:
                        enc_lm, cost = encs[e_idx]
                        heappush(heap, (
                            cost + centry[0], centry[1] - revs[e_idx],
                            next(seq), 1, g_idx, e_idx, rank + 1,
                            enc_lm | centry[2],
                        ))
            return out[r]

        root = get_node(0, mask)
        rank = 0
        while max_cubes is None or rank < max_cubes:
            if node_get(root, rank) is None:
                break
            rank += 1
        return root.out[:rank]


def prime_implicants(
    f: Formula,
    universe: Iterable[Literal],
    axioms: Axioms,
    *,
    max_cubes: int | None = None,
) -> tuple[Cube, ...]:
    """Prime implicants of ``f`` over literals drawn from ``universe``.

    Every returned cube is satisfiable, entails ``f`` modulo the theory and
    is minimal (dropping any literal breaks entailment).  Ordered fewest
    literals first, then canonical literal order.  Empty when no universe
    cube entails ``f``.

    With ``max_cubes`` unset the set is complete — and therefore
    coverage-complete: any satisfiable cube over the universe entailing
    ``f`` is a superset of some returned cube.  With ``max_cubes`` set,
    only the first ``max_cubes`` cubes of the full ordering are returned:
    a bulk sweep over small cube sizes serves formulas rich in short
    cubes, and a best-first enumeration takes over when they are scarce,
    so the work tracks what the cap actually delivers.
    """
    uni = sorted(set(universe), key=lambda l: l.key)
    for lit in uni:
        if lit.atom.kind == "attr":
            axioms.check_atom(lit.atom)
    space = _space_for(axioms, f)
    mask = space.formula_mask(f)
    if mask == 0:
        return ()

    # the answer depends only on the universe, the formula's scene region
    # and the cap, so repeats — hypothesis pairs sharing one difference
    # region, rounds revisiting surviving pairs — are served from a cache
    # that lives and dies with the scene space
    cache = getattr(space, "implicant_cache", None)
    if cache is None:
        cache = space.implicant_cache = {}
    cache_key = (tuple(l.key for l in uni), mask, max_cubes)
    hit = cache.get(cache_key)
    if hit is not None:
        return hit

    found = _ImplicantSearch(space, uni).run(mask, max_cubes)
    result = tuple(
        Cube(uni[t] for t in _lex_key(lm)) for _, _, lm in found
    )
    if len(cache) >= _IMPLICANT_CACHE_CAP:
        cache.clear()
    cache[cache_key] = result
    return result


# -- weighted MaxSAT --------------------------------------------------------


@dataclass(frozen=True)
class MaxSatResult:
    """Optimal model of a weighted soft-constraint problem."""

    model: Model
    cost: int
    true_soft_atoms: tuple[Atom, ...]


def _as_clause(f: Formula) -> list[Literal] | None:
    """Literal list when ``f`` is a clause (disjunction of literals)."""
    if f.op == "lit":
        assert f.lit is not None
        return [f.lit]
    if f.op == "or" and all(c.op == "lit" for c in f.children):
        return [c.lit for c in f.children]  # type: ignore[misc]
    return None


def maxsat(
    hard: Sequence[Formula],
    soft: Sequence[tuple[Literal, int]],
    axioms: Axioms,
) -> MaxSatResult | None:
    """Minimize total violated soft cost subject to the hard formulas.

    Each soft entry ``(literal, cost)`` incurs ``cost`` when the literal is
    false in the model.  Returns None when the hard part is unsatisfiable.
    Among equal-cost optima the model whose set of true soft atoms is
    lexicographically smallest wins, sets compared as their sorted tuples of
    canonical atom keys (so the empty set precedes every other set, and a
    set beginning with an earlier atom precedes one beginning with a later
    atom).
    """
    soft = [(lit, int(c)) for lit, c in soft]
    soft_atoms = sorted({lit.atom for lit, _ in soft}, key=lambda a: a.key)
    space = _space_for(axioms, *hard, extra_atoms=[l.atom for l, _ in soft])
    clauses: list[list[Literal]] = []
    generals: list[Formula] = []
    for h in hard:
        cl = _as_clause(h)
        if cl is not None:
            clauses.append(cl)
        elif h.op == "true":
            continue
        elif h.op == "false":
            return None
        else:
            generals.append(h)

    # ---- compiled integer kernel ------------------------------------------
    # Column i holds a bitmask of its still-allowed value indices (booleans
    # are two-valued: bit 0 = false, bit 1 = true); a literal compiles to a
    # (column, value-bit, polarity) triple.  All search-time work runs on a
    # flat list of small ints, snapshots are plain list copies, and unit
    # propagation is queue-driven over per-column watch lists.  Decision
    # order, dominance rule, pruning, and the leaf tie-break mirror the
    # documented semantics exactly.
    cols = space.columns
    ncols = len(cols)
    col_is_slot = [c.kind == "slot" for c in cols]
    col_size = [c.size for c in cols]
    state: list[int] = [(1 << c.size) - 1 for c in cols]

    def compile_lit(lit: Literal) -> tuple[int, int, bool]:
        atom = lit.atom
        if atom.kind == "attr":
            ci = space._col_index[atom.slot]
            bit = 1 << cols[ci].values.index(atom.value)
        else:
            ci = space._col_index[atom]
            bit = 2  # boolean true
        return (ci, bit, lit.positive)

    cclauses: list[tuple[tuple[int, int, bool], ...]] = [
        tuple(compile_lit(l) for l in cl) for cl in clauses
    ]
    cls_of: list[list[int]] = [[] for _ in range(ncols)]
    for idx, ccl in enumerate(cclauses):
        for ci in {l[0] for l in ccl}:
            cls_of[ci].append(idx)

    def compile_formula(f: Formula):
        if f.op == "true":
            return (0, None)
        if f.op == "false":
            return (1, None)
        if f.op == "lit":
            assert f.lit is not None
            return (2, compile_lit(f.lit))
        kids = tuple(compile_formula(c) for c in f.children)
        return (3 if f.op == "and" else 4, kids)

    def eval_gen(cf) -> int:
        tag, payload = cf
        if tag == 2:
            ci, bit, pos = payload
            m = state[ci]
            if m & bit == 0:
                return 0 if pos else 1
            if m == bit:
                return 1 if pos else 0
            return -1
        if tag == 0:
            return 1
        if tag == 1:
            return 0
        if tag == 3:
            out = 1
            for c in payload:
                v = eval_gen(c)
                if v == 0:
                    return 0
                if v == -1:
                    out = -1
            return out
        out = 0
        for c in payload:
            v = eval_gen(c)
            if v == 1:
                return 1
            if v == -1:
                out = -1
        return out

    gcomp = [compile_formula(g) for g in generals]
    gens_of: list[list[int]] = [[] for _ in range(ncols)]
    atoms_in_generals: set[Atom] = set()
    for gi, g in enumerate(generals):
        g_atoms = g.atoms()
        atoms_in_generals |= g_atoms
        for ci in {space._col_index[a.slot if a.kind == "attr" else a] for a in g_atoms}:
            gens_of[ci].append(gi)

    # soft structure: per-entry cost rows and the canonical soft-atom order
    # used by the tie-break (positive-literal encodings, sorted by key)
    soft_c = [(*compile_lit(lit), w) for lit, w in soft]
    soft_atom_c = [(a, *compile_lit(Literal(a, True))[:2]) for a in soft_atoms]

    # decision order: soft atoms first, heaviest first (a standard weighted
    # branch-and-bound heuristic — expensive choices near the root make the
    # cost bound bite early), canonical order among equal weights, then the
    # remaining columns.  Order affects speed only: equal-cost leaves are
    # never pruned, so the documented tie-break is unaffected.
    weight_on: dict[Atom, int] = {a: 0 for a in soft_atoms}
    sat_cost: dict[tuple[int, int], int] = {}  # (bool col, value) -> cost
    for lit, w in soft:
        weight_on[lit.atom] += w
        if lit.atom.kind != "attr":
            ci = space._col_index[lit.atom]
            sat_key = (ci, 1 if lit.positive else 0)
            sat_cost[sat_key] = sat_cost.get(sat_key, 0)
            other = (ci, 0 if lit.positive else 1)
            sat_cost[other] = sat_cost.get(other, 0) + w
    decision_cis: list[int] = []
    seen_cis: set[int] = set()
    for a in sorted(soft_atoms, key=lambda a: (-weight_on[a], a.key)):
        ci = space._col_index[a.slot if a.kind == "attr" else a]
        if ci not in seen_cis:
            seen_cis.add(ci)
            decision_cis.append(ci)
    soft_cis = set(seen_cis)
    for ci in range(ncols):
        if ci not in seen_cis:
            seen_cis.add(ci)
            decision_cis.append(ci)

    # dominance fixing: a boolean soft atom not mentioned by any general
    # formula and with a strictly cheaper value (equal costs are excluded —
    # the pricier-looking branch can still win the true-set tie-break)
    fixable_c: list[tuple[int, int, list[int]]] = []  # (col, want bit, clauses)
    for atom in soft_atoms:
        if atom.kind == "attr" or atom in atoms_in_generals:
            continue
        ci = space._col_index[atom]
        c_false = sat_cost.get((ci, 0), 0)
        c_true = sat_cost.get((ci, 1), 0)
        if c_false == c_true:
            continue
        want_bit = 1 if c_false < c_true else 2
        fixable_c.append((ci, want_bit, cls_of[ci]))

    best_cost: int | None = None
    best_keys: tuple = ()
    best_true: tuple[Atom, ...] = ()
    best_state: list[int] | None = None

    def propagate(dirty: list[int]) -> bool:
        todo: list[int] = []
        for ci in dirty:
            todo.extend(cls_of[ci])
            for gi in gens_of[ci]:
                if eval_gen(gcomp[gi]) == 0:
                    return False
        while todo:
            ccl = cclauses[todo.pop()]
            und = None
            n_und = 0
            sat = False
            for lit in ccl:
                ci, bit, pos = lit
                m = state[ci]
                if m & bit == 0:
                    if not pos:
                        sat = True
                        break
                elif m == bit:
                    if pos:
                        sat = True
                        break
                else:
                    n_und += 1
                    und = lit
            if sat:
                continue
            if n_und == 0:
                return False
            if n_und == 1:
                ci, bit, pos = und
                m = state[ci]
                state[ci] = (m & bit) if pos else (m & ~bit)
                todo.extend(cls_of[ci])
                for gi in gens_of[ci]:
                    if eval_gen(gcomp[gi]) == 0:
                        return False
        return True

    def fix_dominated(fixed: list[int]) -> None:
        # A boolean soft atom may take its strictly cheaper value outright
        # when that leaves every clause satisfied: any model using the other
        # value costs strictly more, so no branch on it is ever needed.  A
        # clause poses no obstacle when the atom's own literal is true under
        # the fixed value or another literal already satisfies it.
        changed = True
        while changed:
            changed = False
            for a_ci, want_bit, cids in fixable_c:
                if state[a_ci] != 3:
                    continue
                ok = True
                for idx in cids:
                    satisfied = False
                    for ci, bit, pos in cclauses[idx]:
                        if ci == a_ci:
                            if (want_bit == 2) == pos:
                                satisfied = True
                                break
                        else:
                            m = state[ci]
                            if m & bit == 0:
                                if not pos:
                                    satisfied = True
                                    break
                            elif m == bit and pos:
                                satisfied = True
                                break
                    if not satisfied:
                        ok = False
                        break
                if ok:
                    state[a_ci] = want_bit
                    fixed.append(a_ci)
                    changed = True

    def current_cost() -> int:
        c = 0
        for ci, bit, pos, w in soft_c:
            m = state[ci]
            if pos:
                if m & bit == 0:
                    c += w
            elif m == bit:
                c += w
        return c

    def all_soft_decided() -> bool:
        for _, ci, bit in soft_atom_c:
            m = state[ci]
            if m != bit and m & bit:
                return False
        return True

    def hard_all_sat() -> bool:
        for ccl in cclauses:
            ok = False
            for ci, bit, pos in ccl:
                m = state[ci]
                if (m == bit) if pos else (m & bit == 0):
                    ok = True
                    break
            if not ok:
                return False
        return all(eval_gen(g) == 1 for g in gcomp)

    def complete_leaf() -> None:
        # Reached only when the hard part is satisfied and every soft atom
        # is decided, so filling the remaining free columns deterministically
        # changes neither the cost nor the tie-break tuple.
        nonlocal best_cost, best_keys, best_true, best_state
        cost = current_cost()
        true_atoms = tuple(a for a, ci, bit in soft_atom_c if state[ci] == bit)
        keys = tuple(a.key for a in true_atoms)
        if best_cost is not None:
            if cost > best_cost:
                return
            if cost == best_cost and keys >= best_keys:
                return
        best_cost = cost
        best_keys = keys
        best_true = true_atoms
        best_state = state.copy()

    def pick_from_unsat_clause() -> tuple[int, int, bool] | None:
        # Branch like a CNF solver: take an undecided literal from the
        # shortest still-unsatisfied clause, so the decision immediately
        # drives propagation instead of wandering the soft atoms.
        best_lit = None
        best_n = None
        for ccl in cclauses:
            first = None
            n = 0
            sat = False
            for lit in ccl:
                ci, bit, pos = lit
                m = state[ci]
                if m & bit == 0:
                    if not pos:
                        sat = True
                        break
                elif m == bit:
                    if pos:
                        sat = True
                        break
                else:
                    n += 1
                    if first is None:
                        first = lit
            if sat or first is None:
                continue
            if best_n is None or n < best_n:
                best_lit, best_n = first, n
                if n <= 2:
                    break
        return best_lit

    def enter_node(dirty: list[int]):
        # Process a node: propagate, fix, prune, record leaves.  Returns a
        # branching frame [snapshot, column, value order, next index, saved
        # column mask, fixed columns] or None when the node closed (in which
        # case the entry state has been restored).
        snap0 = state.copy()
        if not propagate(dirty):
            state[:] = snap0
            return None
        fixed: list[int] = []
        fix_dominated(fixed)
        lb = current_cost()
        # Strictly-greater pruning only: equal-cost branches may still hold
        # the tie-break winner.
        if best_cost is not None and lb > best_cost:
            state[:] = snap0
            return None
        if all_soft_decided() and hard_all_sat():
            complete_leaf()
            state[:] = snap0
            return None
        clause_lit = pick_from_unsat_clause()
        if clause_lit is not None:
            ci, bit, pos = clause_lit
            if col_is_slot[ci]:
                m = state[ci]
                bits = [1 << v for v in range(col_size[ci]) if m & (1 << v)]
                if pos:  # satisfying value first
                    order = [bit] + [b for b in bits if b != bit]
                else:
                    order = [b for b in bits if b != bit] + [bit]
            else:
                first = bit if pos else 3 - bit
                order = [first, 3 - first]  # satisfy the stuck clause first
            return [snap0, ci, order, 0, fixed]
        dec = None
        for ci in decision_cis:
            m = state[ci]
            if m & (m - 1):
                dec = ci
                break
        if dec is None:
            # everything decided but some general formula still undecided:
            # impossible, because a fully decided state evaluates crisply
            state[:] = snap0
            return None
        if col_is_slot[dec]:
            m = state[dec]
            order = [1 << v for v in range(col_size[dec]) if m & (1 << v)]
        else:
            # try the locally cost-free value first so cheap completions set
            # a tight bound early; plain false-first for non-soft booleans
            c0 = sat_cost.get((dec, 0), 0)
            c1 = sat_cost.get((dec, 1), 0)
            order = [1, 2] if c0 <= c1 else [2, 1]
        return [snap0, dec, order, 0, fixed]

    def search() -> None:
        # Depth-first over an explicit frame stack: instance size bounds the
        # decision-path length, which would overflow Python's call stack.
        stack = []
        frame = enter_node(list(range(ncols)))
        if frame is not None:
            stack.append(frame)
        while stack:
            frame = stack[-1]
            snap0, ci, order, idx, fixed = frame
            if idx == len(order):
                state[:] = snap0
                stack.pop()
                continue
            frame[3] = idx + 1
            # a closed child leaves every column except ci at this node's
            # post-propagation values, so only the decision column moves
            state[ci] = order[idx]
            child = enter_node([ci] + fixed)
            if child is not None:
                stack.append(child)

    # constant general formulas have no columns to hook, so check them once
    for g in gcomp:
        if eval_gen(g) == 0:
            return None
    search()
    if best_cost is None or best_state is None:
        return None
    attrs: dict[tuple[int, str], str] = {}
    bools: dict[Atom, bool] = {}
    for i, col in enumerate(cols):
        m = best_state[i]
        idx = (m & -m).bit_length() - 1  # lowest still-allowed value
        if col.kind == "slot":
            attrs[col.slot] = col.values[idx]
        else:
            bools[col.atom] = idx == 1
    return MaxSatResult(Model(attrs, bools), best_cost, best_true)


# ---------------------------------------------------------------------------
# JSON codecs
# ---------------------------------------------------------------------------


def atom_to_json(atom: Atom) -> dict:
    data: dict = {"kind": atom.kind, "subject": atom.subject, "name": atom.name}
    if atom.kind == "attr":
        data["value"] = atom.value
    if atom.kind == "rel":
        data["other"] = atom.other
    return data


def atom_from_json(data: Mapping) -> Atom:
    kind = data["kind"]
    if kind == "attr":
        return attr_atom(data["subject"], data["name"], data["value"])
    if kind == "rel":
        return rel_atom(data["subject"], data["name"], data["other"])
    if kind == "out":
        return out_atom(data["subject"], data["name"])
    if kind == "flag":
        return flag_atom(data["name"])
    raise ValueError(f"unknown atom kind {kind!r}")


def literal_to_json(lit: Literal) -> dict:
    return {"atom": atom_to_json(lit.atom), "positive": lit.positive}


def literal_from_json(data: Mapping) -> Literal:
    return Literal(atom_from_json(data["atom"]), bool(data["positive"]))


def cube_to_json(cube: Cube) -> dict:
    return {"literals": [literal_to_json(l) for l in cube]}


def cube_from_json(data: Mapping) -> Cube:
    return Cube(literal_from_json(l) for l in data["literals"])


def dumps_canonical(data) -> str:
    """Canonical JSON used wherever byte-stable output is required."""
    return json.dumps(data, sort_keys=True, separators=(",", ":"))

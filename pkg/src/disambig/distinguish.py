"""Distinguishing predicates for hypothesis pairs.

For two candidate programs, a *distinguishing cube* is a satisfiable
conjunction of input literals guaranteeing the programs disagree: every
scene satisfying the cube maps to different outputs under the two programs.
This module computes, per hypothesis pair, the complete minimal set of such
cubes over a literal universe, and grows the universe when it proves too
coarse to distinguish anything.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from .logic import Atom, Cube, Literal, prime_implicants
from .rulelang import Program, Schema, diff_wp

__all__ = [
    "DistinguishingSet",
    "precondition_universe",
    "get_distinguishing",
    "build_distinguishing_set",
    "refine_predicates",
]

MAX_CUBES_PER_PAIR = 32


def precondition_universe(schema: Schema) -> tuple[Literal, ...]:
    """Both polarities of every scene atom, in canonical order."""
    lits = [
        Literal(atom, positive)
        for atom in schema.scene_atoms()
        for positive in (False, True)
    ]
    return tuple(sorted(lits, key=lambda l: l.key))


def get_distinguishing(
    p1: Program,
    p2: Program,
    upre: Iterable[Literal],
    *,
    max_cubes: int = MAX_CUBES_PER_PAIR,
) -> tuple[Cube, ...]:
    """All minimal cubes over ``upre`` forcing ``p1`` and ``p2`` apart.

    Each returned cube is satisfiable and entails the programs' disagreement
    precondition; dropping any literal breaks that guarantee.  The list is
    deterministic — fewest literals first, then canonical literal order —
    and truncated to ``max_cubes`` entries.  Empty exactly when no universe
    cube can force disagreement (in particular for equivalent programs).
    """
    axioms = p1.schema.axioms()
    cubes = prime_implicants(
        diff_wp(p1, p2), upre, axioms, max_cubes=max_cubes
    )
    ranked = sorted(cubes, key=lambda c: (len(c), c.key))
    return tuple(ranked[:max_cubes])


@dataclass(frozen=True)
class DistinguishingSet:
    """Per unordered hypothesis pair, its ordered distinguishing cubes.

    ``entries`` holds every pair (i, j) with i < j over the hypothesis list
    it was built from, each with a possibly empty cube tuple.
    """

    schema: Schema
    n_hypotheses: int
    entries: tuple[tuple[tuple[int, int], tuple[Cube, ...]], ...]

    def cubes(self, i: int, j: int) -> tuple[Cube, ...]:
        i, j = min(i, j), max(i, j)
        for pair, cubes in self.entries:
            if pair == (i, j):
                return cubes
        raise KeyError(f"pair {(i, j)} outside this set")

    def covered_pairs(self) -> tuple[tuple[int, int], ...]:
        """Pairs with at least one distinguishing cube."""
        return tuple(pair for pair, cubes in self.entries if cubes)

    def all_literals(self) -> tuple[Literal, ...]:
        lits = {lit for _, cubes in self.entries for c in cubes for lit in c}
        return tuple(sorted(lits, key=lambda l: l.key))


def build_distinguishing_set(
    hypotheses: Sequence[Program],
    upre: Iterable[Literal],
    *,
    max_cubes: int = MAX_CUBES_PER_PAIR,
) -> DistinguishingSet:
    """``get_distinguishing`` over every hypothesis pair, merged by index."""
    if not hypotheses:
        raise ValueError("need at least one hypothesis")
    schema = hypotheses[0].schema
    universe = tuple(upre)
    entries = []
    for i in range(len(hypotheses)):
        for j in range(i + 1, len(hypotheses)):
            cubes = get_distinguishing(
                hypotheses[i], hypotheses[j], universe, max_cubes=max_cubes
            )
            entries.append(((i, j), cubes))
    return DistinguishingSet(schema, len(hypotheses), tuple(entries))


def _schema_admissible(schema: Schema) -> Callable[[Atom], bool]:
    allowed = set(schema.scene_atoms())
    return lambda atom: atom in allowed


def refine_predicates(
    hypotheses: Sequence[Program],
    upre: Iterable[Literal],
    *,
    admissible: Callable[[Atom], bool] | None = None,
) -> tuple[Literal, ...]:
    """Grow the literal universe with admissible atoms the pairs disagree on.

    Scans every pair's disagreement precondition and adds both polarities of
    each admissible atom found there.  By default every scene atom of the
    schema is admissible.  The result always contains ``upre``; a universe
    already covering all disagreement atoms is returned unchanged, so the
    operation is monotone and reaches a fixed point in one step here (all
    guard atoms are scene atoms already).
    """
    out = set(upre)
    if hypotheses:
        ok = admissible or _schema_admissible(hypotheses[0].schema)
        for i in range(len(hypotheses)):
            for j in range(i + 1, len(hypotheses)):
                for atom in diff_wp(hypotheses[i], hypotheses[j]).atoms():
                    if ok(atom):
                        out.add(Literal(atom, True))
                        out.add(Literal(atom, False))
    return tuple(sorted(out, key=lambda l: l.key))

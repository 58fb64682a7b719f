"""Multiple-choice option construction for a fixed input precondition.

Given a working set of candidate programs and a precondition cube, this
module groups the candidates by their guaranteed outcome (strongest
postcondition), merges the groups into a small number of load-balanced
bins, and synthesizes for every bin a minimum-size outcome cube that holds
for exactly that bin's programs.  The result is a query plan whose options
are mutually exclusive and jointly cover the working set, scored by how
much of the set the worst answer eliminates minus a readability penalty on
option length.

Outcome formulas range over out-action atoms only, which the attribute
theory leaves unconstrained, so every satisfiability question this module
asks is decided over an empty attribute theory.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

from disambig.logic import (
    Axioms,
    Cube,
    Formula,
    Literal,
    ResourceLimitError,
    entails,
    enumerate_models,
    f_lit,
    f_or,
    flag_atom,
    maxsat,
)
from disambig.rulelang import Program, Schema, image_patterns, strongest_post

__all__ = [
    "Cluster",
    "PartitionMapping",
    "QueryPlan",
    "SingleOutcomeError",
    "group_by_sp",
    "construct_separator",
    "min_max_partition",
    "lb_partition",
    "evaluate_objective",
    "compute_branch_ub",
    "branch_and_bound",
    "refine_post_predicates",
    "postcondition_universe",
    "generate_query",
    "DEFAULT_K",
    "DEFAULT_LAMBDA_POST",
    "DEFAULT_BIN_LAMBDA",
]

# Out-action atoms are free booleans under the attribute theory, so the
# empty theory decides every query over outcome formulas.
_POST_AXIOMS = Axioms({})


class SingleOutcomeError(ValueError):
    """Every candidate guarantees the same outcome under the precondition.

    Candidates that disagree pointwise on every input of a region can
    still share one reachable-outcome set there (their outputs swap
    between inputs), leaving nothing to ask about the region as a whole;
    pinning a single concrete input always re-separates such a pair.
    """

DEFAULT_K = 4
DEFAULT_LAMBDA_POST = 0.02
DEFAULT_BIN_LAMBDA = 1.0

# Exact bin packing is affordable up to this many clusters; beyond it the
# longest-processing-time greedy with a pairwise-swap polish takes over.
EXACT_PACK_LIMIT = 12

# Merge refinement is worth a full branch-and-bound search only when the
# cheap seed partition looks poor: an option longer than this many atoms,
# or a worst answer that eliminates less than this fraction of the set.
SEED_SEPARATOR_SIZE_TRIGGER = 4
SEED_DPOWER_TRIGGER = 0.25

# Exhaustive merge refinement explores one representative per bin
# relabeling, so its leaf count grows like k^N/k!; past this many clusters
# the balance-first coarse merge stands in for the exact search.  Ten
# clusters keep the worst search under ~50k leaves (a few hundred ms);
# every extra cluster multiplies that by ~k.
MERGE_SEARCH_LIMIT = 10

# The rescue's merge search gives up after this many candidate pair merges;
# each candidate costs only bit comparisons over the outcome rows.
_RESCUE_MERGE_BUDGET = 20_000

# Hard ceiling on branch-and-bound nodes; hitting it raises instead of
# silently returning a possibly sub-optimal merge.
DEFAULT_NODE_CAP = 2_000_000

_SEPARATOR_ITERATION_CAP = 10_000

_NEG_INF = float("-inf")


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Cluster:
    """A nonempty set of hypothesis indices sharing one outcome formula.

    ``sp`` is the canonical strongest-postcondition formula every member
    guarantees under the active precondition.
    """

    programs: tuple[int, ...]
    sp: Formula

    def __init__(self, programs: Iterable[int], sp: Formula):
        members = tuple(sorted(set(programs)))
        if not members:
            raise ValueError("a cluster must contain at least one program")
        object.__setattr__(self, "programs", members)
        object.__setattr__(self, "sp", sp)

    @property
    def size(self) -> int:
        return len(self.programs)


@dataclass(frozen=True)
class PartitionMapping:
    """An assignment of cluster indices to bin indices in ``1..k``.

    The mapping may be partial while a merge search is in progress; a
    complete mapping covers every cluster index of the working list.
    """

    items: tuple[tuple[int, int], ...] = ()

    def __init__(self, items: Iterable[tuple[int, int]] | Mapping[int, int] = ()):
        if isinstance(items, Mapping):
            pairs = sorted(items.items())
        else:
            pairs = sorted(items)
        seen: dict[int, int] = {}
        for cluster, bin_index in pairs:
            if bin_index < 1:
                raise ValueError("bin indices are 1-based")
            if cluster in seen:
                raise ValueError(f"cluster {cluster} assigned twice")
            seen[cluster] = bin_index
        object.__setattr__(self, "items", tuple(sorted(seen.items())))

    def assignment(self) -> dict[int, int]:
        return dict(self.items)

    def bin_of(self, cluster: int) -> Optional[int]:
        return dict(self.items).get(cluster)

    def is_complete(self, n_clusters: int) -> bool:
        return {c for c, _ in self.items} == set(range(n_clusters))

    def bins(self) -> dict[int, tuple[int, ...]]:
        """Cluster indices per bin, keyed by bin index, ascending members."""
        grouped: dict[int, list[int]] = {}
        for cluster, bin_index in self.items:
            grouped.setdefault(bin_index, []).append(cluster)
        return {b: tuple(sorted(cs)) for b, cs in sorted(grouped.items())}


@dataclass(frozen=True)
class QueryPlan:
    """A complete multiple-choice question over the working set.

    ``bins`` partitions the working hypothesis indices into the answer
    options; ``separators[i]`` is an outcome cube that holds for exactly
    the programs of ``bins[i]``.  The objective is the guaranteed
    eliminated fraction under the worst answer minus ``lambda_post`` times
    the total separator length.
    """

    precondition: Cube
    bins: tuple[tuple[int, ...], ...]
    separators: tuple[Cube, ...]
    objective: float

    def __init__(
        self,
        precondition: Cube,
        bins: Iterable[Iterable[int]],
        separators: Iterable[Cube],
        objective: float,
    ):
        bin_tuple = tuple(tuple(sorted(b)) for b in bins)
        sep_tuple = tuple(separators)
        if len(bin_tuple) != len(sep_tuple):
            raise ValueError("one separator per bin required")
        if any(not b for b in bin_tuple):
            raise ValueError("plan bins must be nonempty")
        flat = [p for b in bin_tuple for p in b]
        if len(flat) != len(set(flat)):
            raise ValueError("plan bins must be disjoint")
        object.__setattr__(self, "precondition", precondition)
        object.__setattr__(self, "bins", bin_tuple)
        object.__setattr__(self, "separators", sep_tuple)
        object.__setattr__(self, "objective", float(objective))

    @property
    def total(self) -> int:
        """Number of hypothesis indices the plan covers."""
        return sum(len(b) for b in self.bins)

    @property
    def dpower(self) -> float:
        """Fraction of the set the worst answer is guaranteed to remove."""
        return 1.0 - max(len(b) for b in self.bins) / self.total


# ---------------------------------------------------------------------------
# outcome clustering
# ---------------------------------------------------------------------------


def group_by_sp(hypotheses: Sequence[Program], phi: Cube) -> tuple[Cluster, ...]:
    """Partition ``hypotheses`` by logical equality of their outcomes.

    Two programs land in the same cluster exactly when their strongest
    postconditions under ``phi`` are logically equal, which for canonical
    outcome formulas is equality of their reachable output-pattern sets.
    Clusters are ordered by their smallest member index; ``phi`` must be
    satisfiable.
    """
    groups: dict[tuple, list[int]] = {}
    for index, program in enumerate(hypotheses):
        groups.setdefault(image_patterns(program, phi), []).append(index)
    ordered = sorted(groups.values(), key=lambda members: members[0])
    return tuple(
        Cluster(members, strongest_post(hypotheses[members[0]], phi))
        for members in ordered
    )


# ---------------------------------------------------------------------------
# separator synthesis
# ---------------------------------------------------------------------------


def _check_literal_closed(upost: Sequence[Literal]) -> tuple[Literal, ...]:
    lits = tuple(sorted(set(upost), key=lambda l: l.key))
    have = set(lits)
    for lit in lits:
        if lit.negate() not in have:
            raise ValueError(f"outcome vocabulary must be literal-closed; missing {lit.negate()!r}")
    return lits


def _implied_literals(positive: Formula, upost: Sequence[Literal]) -> list[Literal]:
    """The sub-vocabulary every model of ``positive`` satisfies."""
    return [lit for lit in upost if entails(positive, f_lit(lit), _POST_AXIOMS)]


def _row_space(
    clusters: Sequence[Cluster], upost: Sequence[Literal]
) -> tuple[tuple, list[frozenset[tuple[bool, ...]]]]:
    """Kept atoms and each cluster's outcome rows over them.

    Outcome formulas are disjunctions of complete outcome rows, so their
    models over the mentioned atoms enumerate those rows exactly.  Atoms
    outside the vocabulary are dropped because no separator may test them;
    atoms in the vocabulary but mentioned by no outcome are never implied,
    so omitting them loses nothing.  Kept atoms come back in canonical
    order, which is also the vocabulary's literal order per atom.
    """
    mentioned = sorted(
        {atom for cluster in clusters for atom in cluster.sp.atoms()},
        key=lambda a: a.key,
    )
    allowed = {lit.atom for lit in upost}
    kept = tuple(atom for atom in mentioned if atom in allowed)
    rows = [
        frozenset(
            tuple(model.truth(atom) for atom in kept)
            for model in enumerate_models(cluster.sp, mentioned, _POST_AXIOMS)
        )
        for cluster in clusters
    ]
    return kept, rows


def _row_consensus(rows: Iterable[tuple[bool, ...]]) -> list[tuple[int, bool]]:
    """The (position, value) pairs every row of a group agrees on.

    Fixing exactly these positions is the strongest cube over the allowed
    atoms that covers the whole group, so a separating cube exists iff
    this consensus already excludes every foreign row.
    """
    rows = list(rows)
    first = rows[0]
    return [
        (i, first[i])
        for i in range(len(first))
        if all(row[i] == first[i] for row in rows)
    ]


def _separator_from_rows(
    member_rows: frozenset[tuple[bool, ...]],
    foreign_rows: Sequence[tuple[bool, ...]],
    atoms: Sequence,
) -> Optional[Cube]:
    """Core separator search, run entirely in outcome-row space.

    The candidate alphabet is the member consensus — exactly the implied
    sub-vocabulary — ordered by atom position, and candidates are chosen
    by the weighted-MaxSAT core so the first verified cube is the
    size-minimal separator under the canonical tie-break.  Returns ``None``
    when no cube can both cover the members and exclude every foreign row:
    either a foreign row is itself a member row, or it satisfies the whole
    consensus.  Every blocking clause is a positive disjunction of
    selection flags, so the clause set only becomes unsatisfiable through
    an empty clause — which is exactly that failure case.
    """
    alphabet = _row_consensus(member_rows)
    flags = [flag_atom(f"s{i:03d}") for i in range(len(alphabet))]
    soft = [(Literal(flag, False), 1) for flag in flags]
    hard: list[Formula] = []

    for _ in range(_SEPARATOR_ITERATION_CAP):
        best = maxsat(hard, soft, _POST_AXIOMS)
        assert best is not None  # positive clauses: all-true always satisfies
        chosen = [
            (position, value)
            for flag, (position, value) in zip(flags, alphabet)
            if best.model.truth(flag)
        ]
        counterexample = None
        for row in foreign_rows:
            if all(row[position] == value for position, value in chosen):
                counterexample = row
                break
        if counterexample is None:
            return Cube(
                Literal(atoms[position], value) for position, value in chosen
            )
        clause = [
            f_lit(flag)
            for flag, (position, value) in zip(flags, alphabet)
            if counterexample[position] != value
        ]
        if not clause:
            return None
        hard.append(f_or(*clause))
    raise ResourceLimitError("separator synthesis exceeded its refinement budget")


def construct_separator(
    b: Sequence[Cluster],
    negatives: Sequence[Sequence[Cluster]],
    upost: Sequence[Literal],
) -> Optional[Cube]:
    """Minimum-size outcome cube holding for ``b`` but no negative group.

    Returns the smallest cube ``psi`` over ``upost`` with Phi+ => psi and
    psi unsatisfiable with every negative group's outcome disjunction,
    where Phi+ is the disjunction of ``b``'s outcome formulas.  Returns
    ``None`` when some negative group's outcomes overlap Phi+ or when no
    cube over the implied sub-vocabulary excludes every negative group.

    The search selects candidate literals with a weighted-MaxSAT core and
    blocks each counterexample row by requiring some literal it violates,
    so the first verified candidate is the size-minimal separator.
    """
    upost = _check_literal_closed(upost)
    members = list(b)
    flat = members + [cluster for group in negatives for cluster in group]
    atoms, rows = _row_space(flat, upost)
    member_rows = frozenset().union(frozenset(), *rows[: len(members)])
    if not member_rows:
        raise ValueError("the target bin's outcome formula is unsatisfiable")
    foreign_rows = sorted(set().union(set(), *rows[len(members) :]))
    return _separator_from_rows(member_rows, foreign_rows, atoms)


def _cached_separator(
    b: Sequence[Cluster],
    negatives: Sequence[Sequence[Cluster]],
    upost: Sequence[Literal],
    cache: Optional[dict],
) -> Optional[Cube]:
    """Separator lookup keyed by the target bin's program set.

    A bin's separator depends only on the bin and the union of everything
    outside it: excluding every negative group separately is the same
    condition as excluding their union, and the synthesis returns the
    size-minimal verified cube regardless of which counterexamples steered
    it.  Within one working set and outcome vocabulary the complement is
    determined by the bin, so the program set alone is a sound cache key.
    """
    if cache is None:
        return construct_separator(b, negatives, upost)
    key = frozenset(p for cluster in b for p in cluster.programs)
    if key not in cache:
        cache[key] = construct_separator(b, negatives, upost)
    return cache[key]


# ---------------------------------------------------------------------------
# load-balanced merging
# ---------------------------------------------------------------------------


def min_max_partition(weights: Sequence[float], k: int) -> tuple[int, ...]:
    """Assign weighted items to ``k`` bins minimizing the maximum load.

    Returns a 1-based bin index per item, bins renumbered in first-use
    order by item index.  Exact (branch-and-bound over assignments with
    bin-symmetry breaking) up to ``EXACT_PACK_LIMIT`` items; beyond that a
    longest-processing-time greedy followed by a pairwise-swap local
    search.
    """
    n = len(weights)
    if n == 0:
        raise ValueError("nothing to partition")
    if k < 1:
        raise ValueError("need at least one bin")
    order = sorted(range(n), key=lambda i: (-weights[i], i))

    def lpt() -> list[int]:
        loads = [0.0] * k
        assign = [0] * n
        for i in order:
            target = min(range(k), key=lambda b: (loads[b], b))
            assign[i] = target
            loads[target] += weights[i]
        return assign

    assign = lpt()

    if n <= EXACT_PACK_LIMIT:
        best_assign = list(assign)
        best_max = max(
            sum(weights[i] for i in range(n) if best_assign[i] == b) for b in range(k)
        )
        loads = [0.0] * k
        current = [0] * n

        def descend(pos: int, used: int, worst: float) -> None:
            nonlocal best_assign, best_max
            if worst >= best_max:
                return
            if pos == n:
                best_assign = list(current)
                best_max = worst
                return
            item = order[pos]
            for b in range(min(used + 1, k)):
                loads[b] += weights[item]
                current[item] = b
                descend(pos + 1, max(used, b + 1), max(worst, loads[b]))
                loads[b] -= weights[item]

        descend(0, 0, 0.0)
        assign = best_assign
    else:
        loads = [0.0] * k
        for i in range(n):
            loads[assign[i]] += weights[i]
        improved = True
        passes = 0
        while improved and passes < n * n:
            improved = False
            passes += 1
            for i in range(n):
                for j in range(i + 1, n):
                    bi, bj = assign[i], assign[j]
                    if bi == bj:
                        continue
                    delta = weights[j] - weights[i]
                    new_i, new_j = loads[bi] + delta, loads[bj] - delta
                    if max(new_i, new_j) < max(loads[bi], loads[bj]):
                        assign[i], assign[j] = bj, bi
                        loads[bi], loads[bj] = new_i, new_j
                        improved = True

    relabel: dict[int, int] = {}
    for i in range(n):
        relabel.setdefault(assign[i], len(relabel) + 1)
    return tuple(relabel[assign[i]] for i in range(n))


def lb_partition(
    clusters: Sequence[Cluster],
    k: int,
    upost: Sequence[Literal],
    lam: float = DEFAULT_BIN_LAMBDA,
    *,
    cache: Optional[dict] = None,
) -> PartitionMapping:
    """Load-balanced complete mapping of clusters to at most ``k`` bins.

    Each cluster weighs its program count plus ``lam`` times the length of
    its one-vs-all separator; when that separator does not exist the
    length is replaced by one more than the cluster's implied-literal
    count, an unreachable length that steers hard-to-separate clusters
    toward early merging.  The weights then go through
    :func:`min_max_partition`.
    """
    if not clusters:
        raise ValueError("no clusters to merge")
    weights: list[float] = []
    for index, cluster in enumerate(clusters):
        others = [c for j, c in enumerate(clusters) if j != index]
        separator = _cached_separator(
            [cluster], [others] if others else [], upost, cache
        )
        if separator is None:
            ceiling = len(_implied_literals(cluster.sp, _check_literal_closed(upost)))
            weights.append(cluster.size + lam * (ceiling + 1))
        else:
            weights.append(cluster.size + lam * len(separator))
    bins = min_max_partition(weights, k)
    return PartitionMapping({i: b for i, b in enumerate(bins)})


# ---------------------------------------------------------------------------
# objective evaluation and merge search
# ---------------------------------------------------------------------------


def evaluate_objective(
    mapping: PartitionMapping,
    phi: Cube,
    clusters: Sequence[Cluster],
    upost: Sequence[Literal],
    lambda_post: float = DEFAULT_LAMBDA_POST,
    *,
    cache: Optional[dict] = None,
) -> tuple[Optional[QueryPlan], float]:
    """Induced plan and objective of a complete cluster-to-bin mapping.

    Every nonempty bin receives a separator built against all other
    nonempty bins as negative groups.  The objective is the guaranteed
    eliminated fraction under the worst answer minus ``lambda_post`` times
    total separator length; if any bin admits no separator the result is
    ``(None, -inf)``.
    """
    if not mapping.is_complete(len(clusters)):
        raise ValueError("the mapping must assign every cluster")
    grouped = mapping.bins()
    member_lists = [grouped[b] for b in sorted(grouped)]
    separators: list[Cube] = []
    for i, members in enumerate(member_lists):
        target = [clusters[c] for c in members]
        negatives = [
            [clusters[c] for c in other]
            for j, other in enumerate(member_lists)
            if j != i
        ]
        separator = _cached_separator(target, negatives, upost, cache)
        if separator is None:
            return None, _NEG_INF
        separators.append(separator)
    bins = tuple(
        tuple(sorted(p for c in members for p in clusters[c].programs))
        for members in member_lists
    )
    total = sum(len(b) for b in bins)
    dpower = 1.0 - max(len(b) for b in bins) / total
    objective = dpower - lambda_post * sum(len(s) for s in separators)
    return QueryPlan(phi, bins, separators, objective), objective


def compute_branch_ub(
    partial: PartitionMapping, clusters: Sequence[Cluster]
) -> float:
    """Upper bound on the objective of any completion of ``partial``.

    Bin loads only grow as the remaining clusters are placed and the
    separator penalty is nonnegative, so one minus the heaviest already
    assigned bin's fraction bounds every completion from above.  An empty
    partial mapping yields 1.
    """
    total = sum(c.size for c in clusters)
    loads: dict[int, int] = {}
    for cluster, bin_index in partial.items:
        loads[bin_index] = loads.get(bin_index, 0) + clusters[cluster].size
    heaviest = max(loads.values(), default=0)
    return 1.0 - heaviest / total


def branch_and_bound(
    clusters: Sequence[Cluster],
    seed: PartitionMapping,
    seed_objective: float,
    phi: Cube,
    k: int,
    lambda_post: float = DEFAULT_LAMBDA_POST,
    *,
    upost: Sequence[Literal],
    cache: Optional[dict] = None,
    node_cap: int = DEFAULT_NODE_CAP,
) -> tuple[PartitionMapping, float]:
    """Exhaustive merge refinement seeded with an incumbent mapping.

    Explores complete cluster-to-bin mappings (one representative per bin
    relabeling) in a fixed order — clusters by descending program count,
    bins by index — pruning any branch whose :func:`compute_branch_ub`
    cannot beat the incumbent, and returns the mapping maximizing
    :func:`evaluate_objective`.  Mappings with fewer than two nonempty
    bins cannot form a multi-option question and are never candidates.
    Raises :class:`ResourceLimitError` past ``node_cap`` search nodes
    rather than returning a possibly sub-optimal merge.

    Leaves are scored in outcome-row space — the guaranteed-elimination
    term from the maintained bin loads, separator lengths from the exact
    synthesis memoized per bin membership — which equals
    :func:`evaluate_objective` on every complete mapping while doing
    solver work only once per distinct bin.
    """
    n = len(clusters)
    total = sum(c.size for c in clusters)
    checked = _check_literal_closed(upost)
    atoms, rows = _row_space(clusters, checked)
    best_mapping, best_objective = seed, seed_objective
    order = sorted(range(n), key=lambda i: (-clusters[i].size, i))
    weights = [c.size for c in clusters]
    assignment: dict[int, int] = {}
    loads = [0] * (k + 1)
    masks = [0] * (k + 1)
    size_cache: dict[int, Optional[int]] = {}
    nodes = 0

    def separator_size(mask: int) -> Optional[int]:
        try:
            return size_cache[mask]
        except KeyError:
            pass
        member_rows = frozenset().union(
            *(rows[c] for c in range(n) if mask >> c & 1)
        )
        foreign_rows = sorted(
            set().union(set(), *(rows[c] for c in range(n) if not mask >> c & 1))
        )
        cube = _separator_from_rows(member_rows, foreign_rows, atoms)
        size = None if cube is None else len(cube)
        size_cache[mask] = size
        return size

    # every completion spreads the full working set over at most k bins,
    # so its heaviest bin carries at least ceil(total/k) programs; folding
    # that floor into the assigned-load bound prunes more while remaining
    # admissible, as is charging the separator penalty for the bins every
    # completion must keep nonempty (at least the opened ones, at least
    # two) at the unreachable floor of one literal each
    load_floor = -(-total // k)

    def descend(pos: int, used: int) -> None:
        nonlocal best_mapping, best_objective, nodes
        nodes += 1
        if nodes > node_cap:
            raise ResourceLimitError("merge search exceeded its node budget")
        bound = (
            1.0
            - max(max(loads), load_floor) / total
            - lambda_post * max(used, 2)
        )
        if bound <= best_objective:
            return
        if pos == n:
            if used < 2:
                return
            penalty = 0
            for b in range(1, used + 1):
                size = separator_size(masks[b])
                if size is None:
                    return
                penalty += size
            objective = (
                1.0 - max(loads[1 : used + 1]) / total - lambda_post * penalty
            )
            if objective > best_objective:
                best_mapping = PartitionMapping(dict(assignment))
                best_objective = objective
            return
        cluster = order[pos]
        weight = weights[cluster]
        bit = 1 << cluster
        for b in range(1, min(used + 1, k) + 1):
            assignment[cluster] = b
            loads[b] += weight
            masks[b] |= bit
            descend(pos + 1, max(used, b))
            loads[b] -= weight
            masks[b] &= ~bit
        del assignment[cluster]

    descend(0, 0)
    return best_mapping, best_objective


def _projected_rows(
    clusters: Sequence[Cluster], upost: Sequence[Literal]
) -> list[frozenset[tuple[bool, ...]]]:
    """Each cluster's outcome rows, restricted to the allowed atoms."""
    return _row_space(clusters, upost)[1]


def _consensus_separable(
    member_rows: frozenset[tuple[bool, ...]],
    foreign_rows: Iterable[tuple[bool, ...]],
) -> bool:
    """Whether some allowed cube covers the members and excludes the rest."""
    consensus = _row_consensus(member_rows)
    return not any(
        all(row[i] == value for i, value in consensus) for row in foreign_rows
    )


def _forced_blocks(
    blocks: Iterable[tuple[int, ...]],
    rows: Sequence[frozenset[tuple[bool, ...]]],
) -> list[tuple[int, ...]]:
    """Close a grouping of clusters under forced captures.

    If a block's consensus still covers a row of another block, every
    coarsening that keeps the first block together also covers that row —
    growing a block only weakens its consensus — so no feasible plan can
    separate the two and they must merge.  Merging weakens consensuses
    further, so captures are re-checked until stable.  Blocks come back
    sorted by smallest member.
    """
    merged = sorted((tuple(sorted(block)) for block in blocks), key=lambda b: b[0])
    while len(merged) > 1:
        block_rows = [
            frozenset().union(*(rows[c] for c in block)) for block in merged
        ]
        consensus = [_row_consensus(brs) for brs in block_rows]
        parent = list(range(len(merged)))

        def find(x: int) -> int:
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        captured = False
        for i in range(len(merged)):
            for j in range(len(merged)):
                if i == j or find(i) == find(j):
                    continue
                if any(
                    all(row[p] == v for p, v in consensus[i])
                    for row in block_rows[j]
                ):
                    parent[find(j)] = find(i)
                    captured = True
        if not captured:
            break
        groups: dict[int, list[int]] = {}
        for i, block in enumerate(merged):
            groups.setdefault(find(i), []).extend(block)
        merged = sorted(
            (tuple(sorted(m)) for m in groups.values()), key=lambda b: b[0]
        )
    return merged


def _coarse_rescue(
    clusters: Sequence[Cluster],
    k: int,
    phi: Cube,
    upost: Sequence[Literal],
    lambda_post: float,
    cache: Optional[dict],
) -> tuple[Optional[QueryPlan], float]:
    """Feasibility-first grouping for working sets too large to search.

    Works in the finite outcome-row space, where a group admits a
    separating cube iff the positions its rows agree on already exclude
    every foreign row — the same condition the exact synthesis decides,
    checked by bit comparison instead of solver calls.  Clusters first
    merge to a fixpoint under forced captures; while more groups remain
    than bins, a depth-first search tries pair merges most balanced first,
    closing each under captures again, until at most ``k`` groups survive.
    The chosen grouping is then scored and its minimum separators built by
    the exact synthesis.  Deterministic; not necessarily the objective
    optimum.
    """
    rows = _projected_rows(clusters, upost)
    blocks = _forced_blocks(((i,) for i in range(len(clusters))), rows)

    def balance(state: Sequence[tuple[int, ...]]) -> tuple[int, int]:
        loads = [sum(clusters[c].size for c in block) for block in state]
        return max(loads), sum(load * load for load in loads)

    goal: Optional[list[tuple[int, ...]]] = None
    if 2 <= len(blocks) <= k:
        goal = blocks
    elif len(blocks) > k:
        seen: set[tuple[tuple[int, ...], ...]] = set()
        budget = _RESCUE_MERGE_BUDGET

        def search(state: list[tuple[int, ...]]) -> Optional[list[tuple[int, ...]]]:
            nonlocal budget
            scored = []
            for i in range(len(state)):
                for j in range(i + 1, len(state)):
                    if budget <= 0:
                        return None
                    budget -= 1
                    trial = [b for p, b in enumerate(state) if p != i and p != j]
                    trial.append(tuple(sorted(state[i] + state[j])))
                    merged = _forced_blocks(trial, rows)
                    if len(merged) < 2:
                        continue
                    key = tuple(merged)
                    if key in seen:
                        continue
                    seen.add(key)
                    scored.append((balance(merged), key, merged))
            scored.sort(key=lambda entry: (entry[0], entry[1]))
            # strictly in balance order: a goal is taken only once every
            # better-balanced state has been searched, so an early merge
            # that collapses most of the set cannot shadow a balanced plan
            for _, _, merged in scored:
                if len(merged) <= k:
                    return merged
                deeper = search(merged)
                if deeper is not None:
                    return deeper
                if budget <= 0:
                    return None
            return None

        goal = search(blocks)
    if goal is None:
        return None, _NEG_INF
    assignment = {
        c: bin_index + 1 for bin_index, block in enumerate(goal) for c in block
    }
    plan, objective = evaluate_objective(
        PartitionMapping(assignment), phi, clusters, upost, lambda_post, cache=cache
    )
    # Row-space feasibility is exactly separator existence, so the exact
    # synthesis must agree with the search that chose this grouping.
    assert plan is not None
    return plan, objective


# ---------------------------------------------------------------------------
# vocabulary management
# ---------------------------------------------------------------------------


def postcondition_universe(schema: Schema) -> tuple[Literal, ...]:
    """Both polarities of every out-action atom of ``schema``."""
    literals = [
        Literal(atom, polarity)
        for atom in schema.out_atoms()
        for polarity in (True, False)
    ]
    return tuple(sorted(literals, key=lambda l: l.key))


def refine_post_predicates(
    hypotheses: Sequence[Program],
    phi: Cube,
    upost: Sequence[Literal] = (),
) -> tuple[Literal, ...]:
    """Outcome literals mentioned by some hypothesis's strongest
    postcondition under ``phi`` that are not yet in ``upost``.

    The result is literal-closed; an empty result means the vocabulary
    already covers everything the working set's outcomes can mention.
    """
    known = set(upost)
    fresh: set[Literal] = set()
    for program in hypotheses:
        for atom in strongest_post(program, phi).atoms():
            for polarity in (True, False):
                literal = Literal(atom, polarity)
                if literal not in known:
                    fresh.add(literal)
    return tuple(sorted(fresh, key=lambda l: l.key))


# ---------------------------------------------------------------------------
# query generation
# ---------------------------------------------------------------------------


def generate_query(
    phi: Cube,
    hypotheses: Sequence[Program],
    upost: Optional[Sequence[Literal]] = None,
    k: int = DEFAULT_K,
    lambda_post: float = DEFAULT_LAMBDA_POST,
    *,
    bin_lambda: float = DEFAULT_BIN_LAMBDA,
    node_cap: int = DEFAULT_NODE_CAP,
) -> QueryPlan:
    """Best multiple-choice plan for the working set under ``phi``.

    Groups the hypotheses by outcome, merges the groups into at most ``k``
    load-balanced bins, and attaches a minimum-size separator to every
    bin.  The full merge search runs only when the cheap seed partition
    looks poor (an over-long option or a weak worst-case elimination).
    Whenever some bin admits no separator, the outcome vocabulary is
    extended with every literal the working set's outcomes mention and the
    merge is retried; if the vocabulary is already saturated and no
    mapping with at least two nonempty bins admits separators, a
    :class:`ResourceLimitError` is raised.

    Raises :class:`ValueError` when every hypothesis shares one outcome —
    there is nothing to ask — or when ``k < 2``.
    """
    if k < 2:
        raise ValueError("a multiple-choice question needs at least two bins")
    if not hypotheses:
        raise ValueError("empty working set")
    if upost is None:
        upost = postcondition_universe(hypotheses[0].schema)
    vocabulary = _check_literal_closed(upost)

    clusters = group_by_sp(hypotheses, phi)
    if len(clusters) == 1:
        raise SingleOutcomeError(
            "every hypothesis guarantees the same outcome under this "
            "precondition; nothing distinguishes them here"
        )
    total = sum(c.size for c in clusters)

    while True:
        cache: dict = {}
        seed = lb_partition(clusters, k, vocabulary, bin_lambda, cache=cache)
        plan, objective = evaluate_objective(
            seed, phi, clusters, vocabulary, lambda_post, cache=cache
        )
        seed_loads = [
            sum(clusters[c].size for c in members)
            for members in seed.bins().values()
        ]
        seed_dpower = 1.0 - max(seed_loads) / total
        needs_search = (
            plan is None
            or seed_dpower < SEED_DPOWER_TRIGGER
            or any(len(s) > SEED_SEPARATOR_SIZE_TRIGGER for s in plan.separators)
        )
        rescue_ran = False
        if needs_search and len(clusters) <= MERGE_SEARCH_LIMIT:
            try:
                mapping, refined = branch_and_bound(
                    clusters,
                    seed,
                    objective,
                    phi,
                    k,
                    lambda_post,
                    upost=vocabulary,
                    cache=cache,
                    node_cap=node_cap,
                )
            except ResourceLimitError:
                # refinement is an improvement step; an exhausted search
                # budget keeps whatever the seed produced
                refined = objective
            if refined > _NEG_INF and refined > objective:
                plan, objective = evaluate_objective(
                    mapping, phi, clusters, vocabulary, lambda_post, cache=cache
                )
        elif needs_search:
            # too many groups for the exact search: the balance-first
            # coarse merge usually beats a weak or infeasible seed
            rescued, rescued_objective = _coarse_rescue(
                clusters, k, phi, vocabulary, lambda_post, cache
            )
            rescue_ran = True
            if rescued is not None and rescued_objective > objective:
                plan, objective = rescued, rescued_objective
        if plan is None and not rescue_ran:
            # the searched mappings all lack separators (or the search hit
            # its node cap): merge groups along witnessed blockers instead
            plan, objective = _coarse_rescue(
                clusters, k, phi, vocabulary, lambda_post, cache
            )
        if plan is not None:
            assert len(plan.bins) >= 2
            return plan
        fresh = refine_post_predicates(hypotheses, phi, vocabulary)
        if not fresh:
            raise ResourceLimitError(
                "no bin assignment admits separating outcome cubes over the "
                "full out-action vocabulary"
            )
        vocabulary = tuple(sorted({*vocabulary, *fresh}, key=lambda l: l.key))

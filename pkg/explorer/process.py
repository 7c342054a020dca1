import config.env  # noqa: F401  # load_dotenv side effect
import os
import logging
from collections import Counter
from dataclasses import dataclass, field
from enum import auto, StrEnum
from math import comb
from typing import Any, Iterator, Sequence

from core.combinat import (CombinatorialOverflowError, SetRank, VertexSet, binom_table, colex_combinations, rank_of,
                           superset_matrix, superset_tuples, unrank_of)
from core.randsrc import EdgeOracle
from explorer.params import StopMode, StopParams, StopReason

# Per-j-set superset blocks larger than this are enumerated lazily instead of as a numpy matrix
SUPERSET_MATRIX_LIMIT: int = int(os.getenv("SUPERSET_MATRIX_LIMIT", 2_000_000))

logger = logging.getLogger("hypergiant.explorer")


class EventKind(StrEnum):
    JUMP = auto()
    PIVOT = auto()


@dataclass
class Generation:
    """
    The i-th generation G_i, members in colex order. ``degree_index[l]`` maps each l-set rank
    to ``d_L(G_i)``; level 0 holds the empty set (rank 0) with degree ``|G_i|``.
    """
    index: int
    members: tuple[int, ...]
    degree_index: dict[int, Counter] = field(default_factory=dict, repr=False)

    @property
    def size(self) -> int:
        return len(self.members)

    def __len__(self) -> int:
        return len(self.members)

    def degree(self, ell: int, l_rank: int) -> int:
        if ell == 0:
            return self.size
        return self.degree_index.get(ell, Counter()).get(l_rank, 0)

    def max_degree(self, ell: int) -> int:
        """``Delta_l(G_i)``."""
        if ell == 0:
            return self.size
        counts = self.degree_index.get(ell)
        return max(counts.values()) if counts else 0


@dataclass(frozen=True)
class LedgerEntry:
    generation: int
    ell: int
    l_rank: int
    jump: int
    pivot: int
    jump_queries: int
    pivot_queries: int


class DegreeLedger:
    """
    Attribution of every generation degree ``d_L(G_i)`` to jumps and pivots.

    An edge K found from J is a pivot at each l-set ``L`` inside J and a jump to each l-set
    inside K but not inside J. Contributions are keyed by the receiving generation.
    """

    def __init__(self):
        self._contrib: dict[EventKind, dict[tuple[int, int], Counter]] = {kind: {} for kind in EventKind}
        self._events: dict[EventKind, dict[tuple[int, int], Counter]] = {kind: {} for kind in EventKind}
        self._max_event: dict[tuple[EventKind, int], int] = {}

    def record(self, kind: EventKind, generation: int, ell: int, l_rank: int, added: int) -> None:
        key = (generation, ell)
        self._events[kind].setdefault(key, Counter())[l_rank] += 1
        if added:
            self._contrib[kind].setdefault(key, Counter())[l_rank] += added
        if added > self._max_event.get((kind, ell), 0):
            self._max_event[(kind, ell)] = added

    def contribution(self, kind: EventKind, generation: int, ell: int, l_rank: int) -> int:
        return self._contrib[kind].get((generation, ell), Counter()).get(l_rank, 0)

    def jump_contrib(self, generation: int, ell: int, l_rank: int) -> int:
        return self.contribution(EventKind.JUMP, generation, ell, l_rank)

    def pivot_contrib(self, generation: int, ell: int, l_rank: int) -> int:
        return self.contribution(EventKind.PIVOT, generation, ell, l_rank)

    def max_event(self, kind: EventKind, ell: int) -> int:
        """Largest number of new j-sets containing one l-set added by a single event of ``kind``."""
        return self._max_event.get((kind, ell), 0)

    def keys(self) -> set[tuple[int, int]]:
        return set(self._events[EventKind.JUMP]) | set(self._events[EventKind.PIVOT])

    def is_empty(self) -> bool:
        return not self.keys()

    def entries(self) -> Iterator[LedgerEntry]:
        """Every (generation, l, L) touched by an event, in generation order."""
        for generation, ell in sorted(self.keys()):
            key = (generation, ell)
            jump_events = self._events[EventKind.JUMP].get(key, Counter())
            pivot_events = self._events[EventKind.PIVOT].get(key, Counter())
            for l_rank in sorted(set(jump_events) | set(pivot_events)):
                yield LedgerEntry(
                    generation,
                    ell,
                    l_rank,
                    self.jump_contrib(generation, ell, l_rank),
                    self.pivot_contrib(generation, ell, l_rank),
                    jump_events.get(l_rank, 0),
                    pivot_events.get(l_rank, 0),
                )


@dataclass
class ExplorationTrace:
    """
    Record of one breadth-first exploration from the j-set ``start``.

    ``generations[i - 1]`` is G_i and ``component_sizes[i - 1]`` is ``|C(i)|``. The last
    generation is the one at which the run stopped; round i (processing G_i) made
    ``queries_per_round[i - 1]`` queries and found ``edges_per_round[i - 1]`` edges.
    """
    start: int
    n: int
    k: int
    j: int
    params: StopParams
    generations: list[Generation]
    component_sizes: list[int]
    stop_reason: StopReason
    stop_time: int
    large_time: int | None
    ledger: DegreeLedger
    queries_per_round: list[int]
    edges_per_round: list[int]
    component_max_degree: list[dict[int, int]] = field(default_factory=list)
    # Per round, the full-query count of each processed j-set (lower-coupling tracking only)
    full_queries: dict[int, list[int]] | None = None
    degree_indexed: bool = True

    @property
    def generation_sizes(self) -> list[int]:
        return [generation.size for generation in self.generations]

    @property
    def total_queries(self) -> int:
        return sum(self.queries_per_round)

    @property
    def total_edges(self) -> int:
        return sum(self.edges_per_round)

    @property
    def stopped_large(self) -> bool:
        """The event S: stopped by S2 or S3."""
        return self.stop_reason in (StopReason.S2, StopReason.S3)

    @property
    def component_size(self) -> int:
        return self.component_sizes[-1]

    def generation(self, i: int) -> Generation:
        return self.generations[i - 1]

    def size_at(self, i: int) -> int:
        return self.component_sizes[i - 1]

    def component(self) -> set[int]:
        """All j-sets discovered so far."""
        return {rank for generation in self.generations for rank in generation.members}

    def max_degrees(self, i: int) -> dict[int, int]:
        generation = self.generation(i)
        return {ell: generation.max_degree(ell) for ell in range(self.j)}

    @property
    def lower_coupling_deficit_max(self) -> float | None:
        """Largest ``1 - full(J) / C(n, k - j)`` over processed j-sets."""
        if self.full_queries is None:
            return None
        counts = [count for per_round in self.full_queries.values() for count in per_round]
        if not counts:
            return 0.0
        return 1.0 - min(counts) / comb(self.n, self.k - self.j)

    def to_rows(self) -> list[dict[str, Any]]:
        rows = []
        for i, generation in enumerate(self.generations, start=1):
            row = {
                "i": i,
                "generation_size": generation.size,
                "component_size": self.component_sizes[i - 1],
                "queries": self.queries_per_round[i - 1] if i <= len(self.queries_per_round) else 0,
                "edges": self.edges_per_round[i - 1] if i <= len(self.edges_per_round) else 0,
            }
            for ell in range(self.j):
                row[f"delta_{ell}"] = generation.max_degree(ell) if self.degree_indexed or ell == 0 else None
            rows.append(row)
        return rows

    def summary(self) -> dict[str, Any]:
        return {
            "start": self.start,
            "n": self.n,
            "k": self.k,
            "j": self.j,
            "stop_reason": self.stop_reason.value,
            "T": self.stop_time,
            "T_large": self.large_time,
            "component_size": self.component_size,
            "total_queries": self.total_queries,
            "total_edges": self.total_edges,
            "params": self.params.to_dict(),
        }


def _start_rank(start: int | SetRank | VertexSet | Sequence[int], n: int, j: int) -> int:
    if isinstance(start, VertexSet):
        if start.n != n or start.arity != j:
            raise ValueError(f"Start set {start} is not a {j}-set of {n} vertices")
        return rank_of(start.vertices)
    if isinstance(start, (int, SetRank)):
        rank = int(start)
        if not 0 <= rank < comb(n, j):
            raise ValueError(f"Rank {rank} is not a valid {j}-set of {n} vertices")
        return rank
    return _start_rank(VertexSet(start, n), n, j)


class _Explorer:
    """Mutable state of one exploration; :func:`explore` is the public entry point."""

    def __init__(
            self,
            oracle: EdgeOracle,
            params: StopParams,
            j: int,
            degree_index: bool,
            track_lower_coupling: bool,
    ):
        self._oracle: EdgeOracle = oracle
        self._params: StopParams = params
        self._n: int = oracle.n
        self._k: int = oracle.k
        self._j: int = j
        self._degree_index: bool = degree_index
        self._track: bool = track_lower_coupling
        self._discovered: set[int] = set()
        self._queried: set[int] = set()
        self._ledger: DegreeLedger = DegreeLedger()
        self._jsub_positions = list(colex_combinations(range(self._k), j))
        self._lsub_positions = {ell: list(colex_combinations(range(j), ell)) for ell in range(1, j)}
        self._ksub_positions = {ell: list(colex_combinations(range(self._k), ell)) for ell in range(1, j)}
        self._component_counts: dict[int, Counter] = {ell: Counter() for ell in range(1, j)}
        self._component_max: dict[int, int] = {ell: 0 for ell in range(1, j)}
        self._full_queries: dict[int, list[int]] | None = {} if track_lower_coupling else None
        use_matrix = comb(self._n - j, self._k - j) <= SUPERSET_MATRIX_LIMIT
        if use_matrix:
            try:
                binom_table(self._n, self._k)
            except CombinatorialOverflowError:
                use_matrix = False
        self._use_matrix: bool = use_matrix

    def _supersets(self, j_vertices: tuple[int, ...]) -> tuple[list[int], Sequence]:
        if self._use_matrix:
            ranks, rows = superset_matrix(j_vertices, self._n, self._k)
            return ranks.tolist(), rows
        rows = list(superset_tuples(j_vertices, self._n, self._k))
        return [rank_of(row) for row in rows], rows

    def _degree_index_of(self, members: tuple[int, ...]) -> dict[int, Counter]:
        index: dict[int, Counter] = {}
        if not self._degree_index:
            return index
        vertex_lists = [unrank_of(rank, self._j, self._n) for rank in members]
        for ell, positions in self._lsub_positions.items():
            counts: Counter = Counter()
            for vertices in vertex_lists:
                for combo in positions:
                    counts[rank_of([vertices[a] for a in combo])] += 1
            index[ell] = counts
            component_counts = self._component_counts[ell]
            component_counts.update(counts)
            for l_rank in counts:
                if component_counts[l_rank] > self._component_max[ell]:
                    self._component_max[ell] = component_counts[l_rank]
        return index

    def _generation(self, index: int, members: list[int]) -> Generation:
        ordered = tuple(sorted(members))
        return Generation(index, ordered, self._degree_index_of(ordered))

    def _component_max_now(self, component_size: int) -> dict[int, int]:
        maxima = {0: component_size}
        if self._degree_index:
            maxima.update(self._component_max)
        return maxima

    def _stop_reason(self, generation_size: int, component_size: int) -> StopReason | None:
        if generation_size == 0:
            return StopReason.S1
        if component_size >= self._params.component_threshold:
            return StopReason.S2
        if generation_size >= self._params.generation_threshold:
            return StopReason.S3
        return None

    def _record_events(self, generation: int, j_vertices: tuple[int, ...], edge: tuple[int, ...],
                       new_sets: list[tuple[int, ...]]) -> None:
        inside = set(j_vertices)
        for ell, positions in self._lsub_positions.items():
            added: Counter = Counter()
            for vertices in new_sets:
                for combo in positions:
                    added[rank_of([vertices[a] for a in combo])] += 1
            for combo in self._ksub_positions[ell]:
                subset = [edge[a] for a in combo]
                kind = EventKind.PIVOT if inside.issuperset(subset) else EventKind.JUMP
                l_rank = rank_of(subset)
                self._ledger.record(kind, generation, ell, l_rank, added.get(l_rank, 0))

    def _process(self, round_index: int, j_rank: int, next_members: list[int]) -> tuple[int, int]:
        j_vertices = unrank_of(j_rank, self._j, self._n)
        ranks, rows = self._supersets(j_vertices)
        queried = self._queried
        fresh = [t for t, rank in enumerate(ranks) if rank not in queried]
        fresh_ranks = [ranks[t] for t in fresh]
        queried.update(fresh_ranks)
        outcomes = self._oracle.query_batch(fresh_ranks)
        discovered = self._discovered
        full = 0
        edges = 0
        for t, is_edge in zip(fresh, outcomes):
            edge = tuple(int(v) for v in rows[t]) if (is_edge or self._track) else ()
            if self._track:
                others = (rank_of([edge[a] for a in combo]) for combo in self._jsub_positions)
                if all(other == j_rank or other not in discovered for other in others):
                    full += 1
            if not is_edge:
                continue
            edges += 1
            new_sets = []
            for combo in self._jsub_positions:
                subset = tuple(edge[a] for a in combo)
                rank = rank_of(subset)
                if rank not in discovered:
                    discovered.add(rank)
                    next_members.append(rank)
                    new_sets.append(subset)
            if self._degree_index and self._lsub_positions:
                self._record_events(round_index + 1, j_vertices, edge, new_sets)
        if self._full_queries is not None:
            self._full_queries.setdefault(round_index, []).append(full)
        return len(fresh_ranks), edges

    def run(self, start: int) -> ExplorationTrace:
        mode = self._params.mode
        self._discovered.add(start)
        generations = [self._generation(1, [start])]
        component_sizes = [1]
        component_max = [self._component_max_now(1)]
        queries_per_round: list[int] = []
        edges_per_round: list[int] = []
        stop_reason: StopReason | None = None
        stop_time: int | None = None
        large_time: int | None = None
        i = 1
        while True:
            current = generations[-1]
            reason = self._stop_reason(current.size, component_sizes[-1])
            if reason is not None and stop_time is None:
                stop_reason, stop_time = reason, i
                logger.debug(f"Exploration from {start}: {reason.value} at round {i}, |C| = {component_sizes[-1]}")
            if reason in (StopReason.S1, StopReason.S2) and large_time is None:
                large_time = i
            match mode:
                case StopMode.RUN_TO_T if stop_time is not None:
                    break
                case StopMode.RUN_TO_T_LARGE if large_time is not None:
                    break
                case StopMode.FULL if reason is StopReason.S1:
                    break
            next_members: list[int] = []
            round_queries = round_edges = 0
            for j_rank in current.members:
                queries, edges = self._process(i, j_rank, next_members)
                round_queries += queries
                round_edges += edges
            queries_per_round.append(round_queries)
            edges_per_round.append(round_edges)
            i += 1
            generations.append(self._generation(i, next_members))
            component_sizes.append(component_sizes[-1] + len(next_members))
            component_max.append(self._component_max_now(component_sizes[-1]))

        return ExplorationTrace(
            start=start,
            n=self._n,
            k=self._k,
            j=self._j,
            params=self._params,
            generations=generations,
            component_sizes=component_sizes,
            stop_reason=stop_reason,
            stop_time=stop_time,
            large_time=large_time,
            ledger=self._ledger,
            queries_per_round=queries_per_round,
            edges_per_round=edges_per_round,
            component_max_degree=component_max,
            full_queries=self._full_queries,
            degree_indexed=self._degree_index,
        )


def explore(
        start: int | SetRank | VertexSet | Sequence[int],
        oracle: EdgeOracle,
        params: StopParams,
        *,
        degree_index: bool = True,
        track_lower_coupling: bool = False,
) -> ExplorationTrace:
    """
    Breadth-first exploration of the j-component of ``start``.

    Each round processes G_i in colex order: every not yet queried k-superset of the current
    j-set is queried in colex order, and each edge found moves its undiscovered j-subsets into
    G_{i+1}. Stopping conditions are checked at the beginning of every round; a round always
    completes its generation.

    :param start: The j-set J1, as a rank, a :class:`VertexSet` or a vertex sequence.
    :param EdgeOracle oracle: Source of edge statuses, owned by this exploration.
    :param StopParams params: Thresholds and the run mode.
    :param bool degree_index: Maintain l-set degrees and the jump/pivot ledger.
    :param bool track_lower_coupling: Count full queries per processed j-set.
    :return: The trace.
    :rtype: ExplorationTrace

    :raises ValueError: If the start set or the parameters do not match the oracle.
    :raises MemoryGuardError: If the oracle's reveal cap is reached.
    """
    n, k = oracle.n, oracle.k
    j = params.j
    if params.n != n:
        raise ValueError(f"Parameters are for n={params.n}, oracle is for n={n}")
    if not 1 <= j <= k - 1:
        raise ValueError(f"j must lie in [1, k - 1] = [1, {k - 1}], got {j}")
    start_rank = _start_rank(start, n, j)
    return _Explorer(oracle, params, j, degree_index, track_lower_coupling).run(start_rank)

import config.env  # noqa: F401  # load_dotenv side effect
import os
import logging
from collections import Counter
from dataclasses import dataclass, field
from math import comb
from typing import Any, Iterator

from core.combinat import colex_combinations, rank_of, unrank_of
from core.randsrc import EdgeSet, MemoryGuardError

# Guard on the number of covered j-sets held by the union-find
MAX_COVERED_JSETS: int = int(os.getenv("MAX_COVERED_JSETS", 30_000_000))

logger = logging.getLogger("hypergiant.census")


class UnionFind:
    """
    Disjoint sets over sparse integer keys, with path compression and union by size.
    Keys enter on first use.
    """

    def __init__(self):
        self.parent: dict[int, int] = {}
        self.size: dict[int, int] = {}

    def __len__(self) -> int:
        return len(self.parent)

    def __contains__(self, x: int) -> bool:
        return x in self.parent

    def add(self, x: int) -> None:
        if x not in self.parent:
            self.parent[x] = x
            self.size[x] = 1

    def find(self, x: int) -> int:
        parent = self.parent
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    def union(self, x: int, y: int) -> int:
        rx, ry = self.find(x), self.find(y)
        if rx == ry:
            return rx
        if self.size[rx] < self.size[ry]:
            rx, ry = ry, rx
        self.parent[ry] = rx
        self.size[rx] += self.size.pop(ry)
        return rx

    def roots(self) -> Iterator[int]:
        return (x for x, px in self.parent.items() if x == px)


@dataclass
class Component:
    """A non-trivial j-component: at least one edge, hence at least C(k, j) j-sets."""
    root: int
    size: int
    edge_count: int
    c: int

    @property
    def nullity(self) -> int:
        return 1 + self.c * self.edge_count - self.size


@dataclass
class ComponentCensus:
    n: int
    k: int
    j: int
    components: list[Component]
    covered_jset_count: int
    labels: dict[int, int] = field(repr=False, default_factory=dict)

    @property
    def c(self) -> int:
        return comb(self.k, self.j) - 1

    @property
    def total_jsets(self) -> int:
        return comb(self.n, self.j)

    @property
    def singleton_count(self) -> int:
        return self.total_jsets - self.covered_jset_count

    @property
    def largest(self) -> int:
        return self.components[0].size if self.components else 0

    @property
    def second_largest(self) -> int:
        return self.components[1].size if len(self.components) > 1 else 0

    def component_of(self, jset_rank: int) -> int | None:
        """Index into ``components`` of the component holding ``jset_rank``, or None for a singleton."""
        return self.labels.get(jset_rank)

    def members(self, index: int) -> set[int]:
        return {rank for rank, label in self.labels.items() if label == index}

    def partition(self) -> list[frozenset[int]]:
        groups: dict[int, set[int]] = {}
        for rank, label in self.labels.items():
            groups.setdefault(label, set()).add(rank)
        return [frozenset(groups[i]) for i in range(len(self.components))]

    def size_histogram(self) -> dict[int, int]:
        return dict(sorted(Counter(component.size for component in self.components).items()))

    def nullity_histogram(self) -> dict[int, int]:
        return dict(sorted(Counter(component.nullity for component in self.components).items()))

    def to_dict(self) -> dict[str, Any]:
        return {
            "n": self.n,
            "k": self.k,
            "j": self.j,
            "components": len(self.components),
            "largest": self.largest,
            "second_largest": self.second_largest,
            "covered_jsets": self.covered_jset_count,
            "singletons": self.singleton_count,
            "total_nullity": total_nullity(self),
            "hypertrees": sum(1 for component in self.components if is_hypertree(component)),
            "size_histogram": {str(size): count for size, count in self.size_histogram().items()},
            "nullity_histogram": {str(nu): count for nu, count in self.nullity_histogram().items()},
        }


def build_census(edges: EdgeSet, j: int, max_covered: int = MAX_COVERED_JSETS) -> ComponentCensus:
    """
    Decomposes the covered j-sets of a hypergraph into j-components.

    All C(k, j) j-subsets of each edge are united; two edges meeting in at least j vertices
    share a j-subset, so the union process reproduces the walk definition of j-connectedness.
    Isolated j-sets are counted, never stored.

    :param EdgeSet edges: The hypergraph.
    :param int j: Connectivity order, ``1 <= j <= k - 1``.
    :param int max_covered: Upper bound on ``C(k, j) * |E|``.
    :return: Components sorted by decreasing size (ties by smallest member rank).
    :rtype: ComponentCensus

    :raises ValueError: If j is outside ``[1, k - 1]``.
    :raises MemoryGuardError: If the covered j-sets could exceed ``max_covered``.
    """
    n, k = edges.n, edges.k
    if not 1 <= j <= k - 1:
        raise ValueError(f"j must lie in [1, k - 1] = [1, {k - 1}], got {j}")
    subsets_per_edge = comb(k, j)
    if subsets_per_edge * len(edges) > max_covered:
        raise MemoryGuardError(
            f"Census of {len(edges)} edges (n={n}, k={k}, j={j}) may cover more than {max_covered} j-sets"
        )
    positions = list(colex_combinations(range(k), j))
    uf = UnionFind()
    edge_roots: list[int] = []
    for edge_rank in edges:
        vertices = unrank_of(edge_rank, k, n)
        subset_ranks = [rank_of([vertices[i] for i in combo]) for combo in positions]
        first = subset_ranks[0]
        uf.add(first)
        for rank in subset_ranks[1:]:
            uf.add(rank)
            uf.union(first, rank)
        edge_roots.append(first)

    edge_counts = Counter(uf.find(first) for first in edge_roots)
    smallest_member: dict[int, int] = {}
    for rank in uf.parent:
        root = uf.find(rank)
        if rank < smallest_member.get(root, rank + 1):
            smallest_member[root] = rank
    c = subsets_per_edge - 1
    components = [Component(root, uf.size[root], edge_counts[root], c) for root in uf.roots()]
    components.sort(key=lambda component: (-component.size, smallest_member[component.root]))
    index_of = {component.root: i for i, component in enumerate(components)}
    labels = {rank: index_of[uf.find(rank)] for rank in uf.parent}
    census = ComponentCensus(n, k, j, components, len(uf), labels)
    logger.debug(
        f"Census of {len(edges)} edges: {len(components)} components, largest {census.largest}, "
        f"second {census.second_largest}"
    )
    return census


def nullity(component: Component) -> int:
    """Per-component nullity ``1 + c * edge_count - size``."""
    return component.nullity


def total_nullity(census: ComponentCensus) -> int:
    return sum(component.nullity for component in census.components)


def is_hypertree(component: Component) -> bool:
    return component.nullity == 0


def largest_two(census: ComponentCensus) -> tuple[int, int]:
    return census.largest, census.second_largest

import logging
from functools import lru_cache
from math import comb
from typing import Iterable, Iterator, Sequence

import numpy as np

INT64_BITS: int = 64

logger = logging.getLogger("hypergiant.combinat")


class CombinatorialOverflowError(OverflowError):
    """Raised when a binomial coefficient does not fit the requested integer width."""
    pass


class VertexSet:
    """
    A set of distinct vertex labels from the universe ``[0, n)``, kept as a strictly
    increasing tuple. Houses both j-sets and k-sets.

    :param vertices: The vertex labels, in any order.
    :type vertices: Iterable[int]
    :param n: Size of the vertex universe.
    :type n: int

    :raises ValueError: If a label is repeated, outside ``[0, n)``, or the set is empty.
    """

    __slots__ = ("_vertices", "_n")

    def __init__(self, vertices: Iterable[int], n: int):
        ordered = tuple(sorted(int(v) for v in vertices))
        if not ordered:
            raise ValueError("A vertex set must contain at least one vertex")
        if len(set(ordered)) != len(ordered):
            raise ValueError(f"Vertex labels must be distinct, got {ordered}")
        if ordered[0] < 0 or ordered[-1] >= n:
            raise ValueError(f"Vertex labels must lie in [0, {n}), got {ordered}")
        self._vertices: tuple[int, ...] = ordered
        self._n: int = n

    @property
    def vertices(self) -> tuple[int, ...]:
        return self._vertices

    @property
    def n(self) -> int:
        return self._n

    @property
    def arity(self) -> int:
        return len(self._vertices)

    def __len__(self) -> int:
        return len(self._vertices)

    def __iter__(self) -> Iterator[int]:
        return iter(self._vertices)

    def __contains__(self, vertex: object) -> bool:
        return vertex in self._vertices

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, VertexSet):
            return NotImplemented
        return self._vertices == other._vertices and self._n == other._n

    def __hash__(self) -> int:
        return hash((self._vertices, self._n))

    def __repr__(self) -> str:
        return f"VertexSet({list(self._vertices)}, n={self._n})"


class SetRank:
    """
    Colexicographic rank of an ``arity``-set inside the universe ``[0, universe)``.

    :raises ValueError: If ``rank`` is outside ``[0, C(universe, arity))``.
    """

    __slots__ = ("_rank", "_arity", "_universe")

    def __init__(self, rank: int, arity: int, universe: int):
        if not 0 <= rank < comb(universe, arity):
            raise ValueError(f"Rank {rank} out of range for {arity}-sets of a {universe}-vertex universe")
        self._rank: int = rank
        self._arity: int = arity
        self._universe: int = universe

    @property
    def rank(self) -> int:
        return self._rank

    @property
    def arity(self) -> int:
        return self._arity

    @property
    def universe(self) -> int:
        return self._universe

    def __int__(self) -> int:
        return self._rank

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SetRank):
            return NotImplemented
        return (self._rank, self._arity, self._universe) == (other._rank, other._arity, other._universe)

    def __hash__(self) -> int:
        return hash((self._rank, self._arity, self._universe))

    def __repr__(self) -> str:
        return f"SetRank({self._rank}, arity={self._arity}, universe={self._universe})"


def binom(n: int, r: int, *, bits: int | None = None) -> int:
    """
    Exact binomial coefficient C(n, r).

    Python integers never wrap around; ``bits`` names the signed integer width the caller
    is about to store the value in (e.g. 64 for numpy ``int64`` tables) and turns an
    oversized result into an explicit error.

    :param int n: Universe size, non-negative.
    :param int r: Subset size, non-negative.
    :param bits: Optional signed integer width the result must fit.
    :type bits: int | None
    :return: C(n, r), or 0 when r > n.
    :rtype: int

    :raises ValueError: If n or r is negative.
    :raises CombinatorialOverflowError: If the result does not fit ``bits``.
    """
    if n < 0 or r < 0:
        raise ValueError(f"binom needs non-negative arguments, got ({n}, {r})")
    value = comb(n, r)
    if bits is not None and value >= 1 << (bits - 1):
        raise CombinatorialOverflowError(f"C({n}, {r}) does not fit a signed {bits}-bit integer")
    return value


@lru_cache(maxsize=16)
def binom_table(n: int, r_max: int) -> np.ndarray:
    """
    ``table[v, i] = C(v, i)`` for ``0 <= v <= n`` and ``0 <= i <= r_max`` as ``int64``.

    :raises CombinatorialOverflowError: If C(n, r_max) does not fit in int64.
    """
    binom(n, min(r_max, n // 2), bits=INT64_BITS)
    table = np.zeros((n + 1, r_max + 1), dtype=np.int64)
    for i in range(r_max + 1):
        table[:, i] = [comb(v, i) for v in range(n + 1)]
    return table


def rank_of(vertices: Sequence[int]) -> int:
    """Colex rank of a strictly increasing vertex tuple (no validation)."""
    return sum(comb(v, i + 1) for i, v in enumerate(vertices))


def colex_rank(s: VertexSet) -> SetRank:
    """
    :param s: A valid vertex set.
    :type s: VertexSet
    :return: ``sum(C(s[i], i + 1))`` together with the set's arity and universe.
    :rtype: SetRank
    """
    if not isinstance(s, VertexSet):
        raise ValueError(f"colex_rank expects a VertexSet, got {type(s).__name__}")
    return SetRank(rank_of(s.vertices), s.arity, s.n)


def unrank_of(rank: int, r: int, n: int) -> tuple[int, ...]:
    """Inverse of :func:`rank_of`, using a binary search for each position (no validation)."""
    vertices = [0] * r
    upper = n
    while r > 0:
        # largest v with C(v, r) <= rank
        lower = r - 1
        while lower < upper - 1:
            mid = (lower + upper) // 2
            if comb(mid, r) <= rank:
                lower = mid
            else:
                upper = mid
        rank -= comb(lower, r)
        r -= 1
        vertices[r] = lower
        upper = lower
    return tuple(vertices)


def colex_unrank(rank: int | SetRank, r: int, n: int) -> VertexSet:
    """
    :raises ValueError: If ``rank`` is outside ``[0, C(n, r))``.
    """
    rank = int(rank)
    if r < 1 or r > n:
        raise ValueError(f"Arity {r} must lie in [1, {n}]")
    if not 0 <= rank < comb(n, r):
        raise ValueError(f"Rank {rank} out of range [0, {comb(n, r)})")
    return VertexSet(unrank_of(rank, r, n), n)


def colex_combinations(items: Sequence[int], r: int) -> Iterator[tuple[int, ...]]:
    """
    All r-subsets of ``items`` (assumed strictly increasing) in colexicographic order.
    """
    if r == 0:
        yield ()
        return
    for top in range(r - 1, len(items)):
        for head in colex_combinations(items[:top], r - 1):
            yield head + (items[top],)


def r_subsets(s: VertexSet, r: int) -> list[VertexSet]:
    """
    :raises ValueError: If r exceeds the size of ``s``.
    """
    if not 1 <= r <= s.arity:
        raise ValueError(f"Subset size {r} must lie in [1, {s.arity}]")
    return [VertexSet(sub, s.n) for sub in colex_combinations(s.vertices, r)]


def merge_sorted(a: Sequence[int], b: Sequence[int]) -> tuple[int, ...]:
    """Union of two disjoint increasing tuples, increasing."""
    merged = []
    i = t = 0
    while i < len(a) and t < len(b):
        if a[i] < b[t]:
            merged.append(a[i])
            i += 1
        else:
            merged.append(b[t])
            t += 1
    merged.extend(a[i:])
    merged.extend(b[t:])
    return tuple(merged)


def superset_tuples(j_vertices: Sequence[int], n: int, k: int) -> Iterator[tuple[int, ...]]:
    """k-sets containing ``j_vertices``, in colex order of the added outside vertices."""
    inside = set(j_vertices)
    outside = [v for v in range(n) if v not in inside]
    for added in colex_combinations(outside, k - len(j_vertices)):
        yield merge_sorted(j_vertices, added)


def k_supersets(j_set: VertexSet, n: int, k: int) -> list[VertexSet]:
    """
    :raises ValueError: Unless ``|j_set| < k <= n``.
    """
    if not j_set.arity < k <= n:
        raise ValueError(f"Need |j_set| = {j_set.arity} < k = {k} <= n = {n}")
    return [VertexSet(vertices, n) for vertices in superset_tuples(j_set.vertices, n, k)]


@lru_cache(maxsize=32)
def colex_index_matrix(m: int, r: int) -> np.ndarray:
    """
    Every r-subset of ``[0, m)`` as a row of an ``(C(m, r), r)`` int64 matrix, rows in colex order.
    """
    rows = np.fromiter(
        (v for combo in colex_combinations(range(m), r) for v in combo),
        dtype=np.int64,
        count=comb(m, r) * r,
    )
    return rows.reshape(-1, r)


def superset_matrix(j_vertices: Sequence[int], n: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    """
    Vectorized form of :func:`superset_tuples`: returns ``(ranks, rows)`` where ``rows`` is the
    ``(C(n - j, k - j), k)`` matrix of supersets (sorted rows, colex order of the added vertices)
    and ``ranks`` their colex ranks.

    :raises CombinatorialOverflowError: If k-set ranks over ``[0, n)`` do not fit in int64.
    """
    j = len(j_vertices)
    table = binom_table(n, k)
    inside = np.asarray(j_vertices, dtype=np.int64)
    outside = np.setdiff1d(np.arange(n, dtype=np.int64), inside, assume_unique=True)
    added = outside[colex_index_matrix(n - j, k - j)]
    rows = np.sort(np.hstack([added, np.broadcast_to(inside, (added.shape[0], j))]), axis=1)
    ranks = table[rows, np.arange(1, k + 1)].sum(axis=1)
    return ranks, rows


def rows_rank(rows: np.ndarray, n: int) -> np.ndarray:
    """Colex ranks of the sorted rows of an integer matrix."""
    r = rows.shape[1]
    if r == 0:
        return np.zeros(rows.shape[0], dtype=np.int64)
    return binom_table(n, r)[rows, np.arange(1, r + 1)].sum(axis=1)


def intersection_size(a: VertexSet | Sequence[int], b: VertexSet | Sequence[int]) -> int:
    """Size of the intersection of two sorted vertex sequences, by a linear merge."""
    left = a.vertices if isinstance(a, VertexSet) else a
    right = b.vertices if isinstance(b, VertexSet) else b
    i = t = shared = 0
    while i < len(left) and t < len(right):
        if left[i] == right[t]:
            shared += 1
            i += 1
            t += 1
        elif left[i] < right[t]:
            i += 1
        else:
            t += 1
    return shared

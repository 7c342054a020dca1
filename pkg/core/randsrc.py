import config.env  # noqa: F401  # load_dotenv side effect
import os
import logging
from enum import auto, StrEnum
from math import comb, log1p, exp
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from core.combinat import SetRank, binom, rank_of, unrank_of

# Largest N handed to numpy's binomial sampler (signed 64-bit)
INT64_MAX: int = (1 << 63) - 1
# Above this mean, huge-N binomial draws split N instead of inverting the pmf
INVERSION_MEAN_LIMIT: float = 30.0
# Guard for whole-hypergraph sampling, in expected edges
MAX_EXPECTED_EDGES: int = int(os.getenv("MAX_EXPECTED_EDGES", 5_000_000))
# Guard for the lazy oracle, in revealed k-sets
MAX_REVEALED_QUERIES: int = int(os.getenv("MAX_REVEALED_QUERIES", 50_000_000))

logger = logging.getLogger("hypergiant.randsrc")


class MemoryGuardError(RuntimeError):
    """Raised when a sampler or oracle would exceed its configured memory limit."""
    pass


class OracleBackend(StrEnum):
    PRESAMPLED = auto()
    LAZY = auto()


class SeededStream:
    """
    A reproducible random stream. ``(seed, stream_id)`` selects an independent PCG64
    substream through numpy's ``SeedSequence`` spawn keys, so trials never coordinate.

    :param seed: Base seed, a 64-bit non-negative integer.
    :type seed: int
    :param stream_id: Per-trial substream id, a 64-bit non-negative integer.
    :type stream_id: int

    :raises ValueError: If either value is outside ``[0, 2**64)``.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        for name, value in (("seed", seed), ("stream_id", stream_id)):
            if not 0 <= value < 1 << 64:
                raise ValueError(f"{name} must be a 64-bit non-negative integer, got {value}")
        self._seed: int = seed
        self._stream_id: int = stream_id
        sequence = np.random.SeedSequence(entropy=seed, spawn_key=(stream_id,))
        self._generator: np.random.Generator = np.random.Generator(np.random.PCG64(sequence))

    @property
    def seed(self) -> int:
        return self._seed

    @property
    def stream_id(self) -> int:
        return self._stream_id

    @property
    def generator(self) -> np.random.Generator:
        return self._generator

    def random(self) -> float:
        return float(self._generator.random())

    def random_batch(self, size: int) -> np.ndarray:
        return self._generator.random(size)

    def randbelow(self, bound: int) -> int:
        """
        Uniform integer in ``[0, bound)`` for any positive Python integer bound.
        """
        if bound <= 0:
            raise ValueError(f"Bound must be positive, got {bound}")
        if bound <= INT64_MAX:
            return int(self._generator.integers(0, bound))
        bits = bound.bit_length()
        n_bytes = (bits + 7) // 8
        while True:
            candidate = int.from_bytes(self._generator.bytes(n_bytes), "little") >> (8 * n_bytes - bits)
            if candidate < bound:
                return candidate

    def __repr__(self) -> str:
        return f"SeededStream(seed={self._seed}, stream_id={self._stream_id})"


def _binomial_inversion(stream: SeededStream, trials: int, p: float) -> int:
    # Walks the pmf recurrence P(x+1) = P(x) * (N - x) / (x + 1) * p / (1 - p)
    u = stream.random()
    pmf = exp(trials * log1p(-p))
    ratio = p / (1.0 - p)
    cumulative = pmf
    x = 0
    while u > cumulative and x < trials:
        pmf *= (trials - x) / (x + 1) * ratio
        x += 1
        cumulative += pmf
        if pmf == 0.0:
            break
    return x


def _binomial_splitting(stream: SeededStream, trials: int, p: float) -> int:
    # The a-th smallest of N uniforms is X ~ Beta(a, N - a + 1). Below X the a - 1 smaller
    # uniforms are iid U(0, X); above it the N - a larger ones are iid U(X, 1).
    successes = 0
    while trials > INT64_MAX:
        a = trials // 2 + 1
        x = float(stream.generator.beta(float(a), float(trials - a + 1)))
        if x > p:
            trials, p = a - 1, p / x
        else:
            successes += a
            trials, p = trials - a, (p - x) / (1.0 - x)
    return successes + int(stream.generator.binomial(trials, min(max(p, 0.0), 1.0)))


def binomial_draw(stream: SeededStream, trials: int, p: float) -> int:
    """
    Exact Binomial(N, p) draw for any non-negative integer N.

    N up to 2**63 - 1 goes to numpy's sampler (inversion below mean 30, BTPE accept-reject
    above). Larger N with ``N * p <= 30`` uses inversion on the pmf recurrence; otherwise N
    is halved through its middle order statistic until numpy's sampler can finish the draw.

    :param SeededStream stream: Source of randomness.
    :param int trials: N, the number of Bernoulli trials.
    :param float p: Success probability.
    :return: The number of successes.
    :rtype: int

    :raises ValueError: If p is outside [0, 1] or N is negative.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"Probability must lie in [0, 1], got {p}")
    if trials < 0:
        raise ValueError(f"Number of trials must be non-negative, got {trials}")
    if trials == 0 or p == 0.0:
        return 0
    if p == 1.0:
        return trials
    if trials <= INT64_MAX:
        return int(stream.generator.binomial(trials, p))
    if trials * p <= INVERSION_MEAN_LIMIT:
        return _binomial_inversion(stream, trials, p)
    return _binomial_splitting(stream, trials, p)


class EdgeSet:
    """
    The edge set of a k-uniform hypergraph on ``[0, n)``, stored as colex ranks of k-sets.

    :param n: Number of vertices.
    :type n: int
    :param k: Edge size.
    :type k: int
    :param edges: Initial edge ranks.
    :type edges: Iterable[int]

    :raises ValueError: If k is outside [1, n] or a rank is out of range.
    """

    def __init__(self, n: int, k: int, edges: Iterable[int] = ()):
        if not 1 <= k <= n:
            raise ValueError(f"Edge size k={k} must lie in [1, n={n}]")
        self._n: int = n
        self._k: int = k
        self._total: int = binom(n, k)
        self._edges: set[int] = set()
        for rank in edges:
            self.add(rank)

    @property
    def n(self) -> int:
        return self._n

    @property
    def k(self) -> int:
        return self._k

    @property
    def edges(self) -> frozenset[int]:
        return frozenset(self._edges)

    def add(self, rank: int | SetRank) -> None:
        rank = int(rank)
        if not 0 <= rank < self._total:
            raise ValueError(f"Rank {rank} is not a valid {self._k}-set of {self._n} vertices")
        self._edges.add(rank)

    def __len__(self) -> int:
        return len(self._edges)

    def __contains__(self, rank: object) -> bool:
        return rank in self._edges

    def __iter__(self) -> Iterator[int]:
        return iter(sorted(self._edges))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EdgeSet):
            return NotImplemented
        return (self._n, self._k, self._edges) == (other._n, other._k, other._edges)

    def vertex_sets(self) -> Iterator[tuple[int, ...]]:
        """Edges as sorted vertex tuples, in colex order."""
        for rank in self:
            yield unrank_of(rank, self._k, self._n)

    def to_text(self) -> str:
        """
        Header ``n k m`` followed by one edge per line as sorted, space-separated labels.
        """
        lines = [f"{self._n} {self._k} {len(self._edges)}"]
        lines.extend(" ".join(str(v) for v in vertices) for vertices in self.vertex_sets())
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "EdgeSet":
        """
        :raises ValueError: If the header is malformed or the edge count does not match.
        """
        rows = [line.split() for line in text.splitlines() if line.strip()]
        if not rows or len(rows[0]) != 3:
            raise ValueError("Edge set text must start with an 'n k m' header")
        n, k, m = (int(value) for value in rows[0])
        edge_set = cls(n, k)
        for row in rows[1:]:
            vertices = sorted(int(v) for v in row)
            if len(vertices) != k or len(set(vertices)) != k or vertices[0] < 0 or vertices[-1] >= n:
                raise ValueError(f"Invalid edge line {' '.join(row)} for n={n}, k={k}")
            edge_set.add(rank_of(vertices))
        if len(edge_set) != m:
            raise ValueError(f"Header announces {m} edges, found {len(edge_set)} distinct")
        return edge_set

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def read(cls, path: str | Path) -> "EdgeSet":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    def __repr__(self) -> str:
        return f"EdgeSet(n={self._n}, k={self._k}, m={len(self._edges)})"


def _distinct_ranks(stream: SeededStream, total: int, count: int) -> set[int]:
    # Uniform count-subset of [0, total): iid uniform draws, duplicates rejected
    chosen: set[int] = set()
    while len(chosen) < count:
        need = count - len(chosen)
        if total <= INT64_MAX:
            chosen.update(stream.generator.integers(0, total, size=need).tolist())
        else:
            chosen.update(stream.randbelow(total) for _ in range(need))
    return chosen


def sample_hypergraph(
        n: int,
        k: int,
        p: float,
        stream: SeededStream,
        max_expected_edges: int = MAX_EXPECTED_EDGES,
) -> EdgeSet:
    """
    Samples H^k(n, p): draws the edge count M ~ Binomial(C(n, k), p), then M distinct
    k-set ranks uniformly without replacement.

    :raises ValueError: If p is outside [0, 1].
    :raises MemoryGuardError: If ``p * C(n, k)`` exceeds ``max_expected_edges``.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"Probability must lie in [0, 1], got {p}")
    total = binom(n, k)
    expected = p * total
    if expected > max_expected_edges:
        raise MemoryGuardError(
            f"Expected {expected:.4g} edges for (n={n}, k={k}, p={p:.6g}) exceeds the cap of "
            f"{max_expected_edges}; use exploration mode with a lazy oracle instead"
        )
    m = binomial_draw(stream, total, p)
    if 2 * m > total:
        excluded = _distinct_ranks(stream, total, total - m)
        edges = (rank for rank in range(total) if rank not in excluded)
    else:
        edges = _distinct_ranks(stream, total, m)
    edge_set = EdgeSet(n, k, edges)
    logger.debug(f"Sampled H^{k}({n}, {p:.6g}) with {len(edge_set)} edges")
    return edge_set


class EdgeOracle:
    """
    Memoized edge queries on H^k(n, p). Each k-set's status is revealed at most once.

    Use :meth:`presampled` to answer from a materialized :class:`EdgeSet`, or :meth:`lazy`
    to flip an independent Bernoulli(p) coin the first time a k-set is queried.

    :raises ValueError: If neither or both backends are configured.
    """

    def __init__(
            self,
            n: int,
            k: int,
            *,
            edges: EdgeSet | None = None,
            p: float | None = None,
            stream: SeededStream | None = None,
            max_reveals: int = MAX_REVEALED_QUERIES,
    ):
        if (edges is None) == (p is None):
            raise ValueError("Configure exactly one backend: an edge set or a probability with a stream")
        if edges is not None:
            if (edges.n, edges.k) != (n, k):
                raise ValueError(f"Edge set is for (n={edges.n}, k={edges.k}), oracle is for (n={n}, k={k})")
            self._backend: OracleBackend = OracleBackend.PRESAMPLED
        else:
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"Probability must lie in [0, 1], got {p}")
            if stream is None:
                raise ValueError("A lazy oracle needs a SeededStream")
            self._backend = OracleBackend.LAZY
        self._n: int = n
        self._k: int = k
        self._edges: EdgeSet | None = edges
        self._p: float | None = p
        self._stream: SeededStream | None = stream
        self._max_reveals: int = max_reveals
        self._revealed: dict[int, bool] = {}

    @classmethod
    def presampled(cls, edges: EdgeSet, **kwargs) -> "EdgeOracle":
        return cls(edges.n, edges.k, edges=edges, **kwargs)

    @classmethod
    def lazy(cls, n: int, k: int, p: float, stream: SeededStream, **kwargs) -> "EdgeOracle":
        return cls(n, k, p=p, stream=stream, **kwargs)

    @property
    def backend(self) -> OracleBackend:
        return self._backend

    @property
    def n(self) -> int:
        return self._n

    @property
    def k(self) -> int:
        return self._k

    @property
    def p(self) -> float | None:
        return self._p

    @property
    def query_count(self) -> int:
        return len(self._revealed)

    @property
    def revealed(self) -> Mapping[int, bool]:
        return self._revealed

    def is_revealed(self, rank: int) -> bool:
        return rank in self._revealed

    def query(self, rank: int) -> bool:
        return self.query_batch([rank])[0]

    def query_batch(self, ranks: Sequence[int]) -> list[bool]:
        """
        Reveals ``ranks`` in order. Lazy draws for all previously unrevealed ranks are taken
        from the stream in one batch, in first-occurrence order.

        :raises MemoryGuardError: If the number of revealed k-sets would exceed the cap.
        """
        revealed = self._revealed
        fresh = [rank for rank in dict.fromkeys(ranks) if rank not in revealed]
        if fresh:
            if len(revealed) + len(fresh) > self._max_reveals:
                raise MemoryGuardError(
                    f"Oracle for (n={self._n}, k={self._k}) would reveal more than {self._max_reveals} k-sets"
                )
            if self._backend is OracleBackend.PRESAMPLED:
                edges = self._edges
                revealed.update((rank, rank in edges) for rank in fresh)
            elif self._p == 1.0:
                revealed.update((rank, True) for rank in fresh)
            else:
                coins = (self._stream.random_batch(len(fresh)) < self._p).tolist()
                revealed.update(zip(fresh, coins))
        return [revealed[rank] for rank in ranks]

    def revealed_edges(self) -> EdgeSet:
        """Every revealed k-set that is an edge."""
        return EdgeSet(self._n, self._k, (rank for rank, is_edge in self._revealed.items() if is_edge))

    def __repr__(self) -> str:
        return f"EdgeOracle({self._backend.value}, n={self._n}, k={self._k}, revealed={len(self._revealed)})"


def oracle_query(oracle: EdgeOracle, rank: int | SetRank) -> bool:
    """
    :raises ValueError: If ``rank`` is not a valid k-set rank for the oracle.
    """
    value = int(rank)
    if not 0 <= value < comb(oracle.n, oracle.k):
        raise ValueError(f"Rank {value} is not a valid {oracle.k}-set of {oracle.n} vertices")
    return oracle.query(value)

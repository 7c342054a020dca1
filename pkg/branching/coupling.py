import logging
from dataclasses import dataclass
from math import comb
from typing import Sequence

from core.combinat import SetRank, VertexSet
from core.randsrc import EdgeOracle, OracleBackend, SeededStream, binomial_draw
from explorer.params import StopMode, StopParams
from explorer.process import ExplorationTrace, explore

logger = logging.getLogger("hypergiant.branching.coupling")


@dataclass(frozen=True)
class CouplingResult:
    bfs_sizes: list[int]
    bp_sizes: list[int]
    dominated: bool
    trace: ExplorationTrace


def coupled_domination_run(
        start: int | SetRank | VertexSet | Sequence[int],
        oracle: EdgeOracle,
        params: StopParams,
        padding: SeededStream,
) -> CouplingResult:
    """
    Runs the exploration and the upper branching process on shared coin flips.

    Each BFS j-set is paired with a process individual that reuses the j-set's actual queries
    and tops them up with fresh draws to ``C(n, k - j)``; unpaired individuals draw all their
    queries fresh. Every success gives ``C(k, j) - 1`` children, so generation i of the
    process is ``c * (E_i + Bi(|BP_i| C(n, k - j) - Q_i, p))`` where Q_i and E_i are the
    queries and edges of BFS round i.

    :param start: The j-set J1.
    :param EdgeOracle oracle: A fresh lazy oracle.
    :param StopParams params: Thresholds; the run goes up to the stopping time T.
    :param SeededStream padding: Stream for the top-up draws.
    :return: Generation sizes of both processes and whether BFS stays below the process.
    :rtype: CouplingResult

    :raises ValueError: If the oracle is not lazy or not fresh.
    """
    if oracle.backend is not OracleBackend.LAZY:
        raise ValueError("The coupled run needs a lazy oracle")
    if oracle.query_count:
        raise ValueError("The coupled run needs a fresh oracle")
    n, k, j = oracle.n, oracle.k, params.j
    trace = explore(start, oracle, params.with_mode(StopMode.RUN_TO_T), degree_index=False)
    trials = comb(n, k - j)
    c = comb(k, j) - 1
    bp_sizes = [1]
    for queries, edges in zip(trace.queries_per_round, trace.edges_per_round):
        fresh = bp_sizes[-1] * trials - queries
        bp_sizes.append(c * (edges + binomial_draw(padding, fresh, oracle.p)))
    bfs_sizes = trace.generation_sizes
    dominated = all(bfs <= bp for bfs, bp in zip(bfs_sizes, bp_sizes))
    if not dominated:
        logger.error(f"Domination failed from {trace.start}: BFS {bfs_sizes}, process {bp_sizes}")
    return CouplingResult(bfs_sizes, bp_sizes, dominated, trace)

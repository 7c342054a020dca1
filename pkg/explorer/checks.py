import logging
from dataclasses import dataclass
from math import comb
from typing import Callable, Sequence

from core.randsrc import EdgeOracle, SeededStream
from core.stats import Proportion
from core.theory import TheoryConstants
from explorer.params import StopMode, StopParams
from explorer.process import EventKind, ExplorationTrace, explore

# Start j-sets of multi-start trials are drawn from substreams above this id
START_STREAM_OFFSET: int = 1 << 62

logger = logging.getLogger("hypergiant.explorer.checks")


class PreconditionError(ValueError):
    """Raised when a checker is given a trace outside the event or mode it is conditioned on."""
    pass


@dataclass(frozen=True)
class Violation:
    round: int
    ell: int
    l_rank: int | None
    observed: float
    bound: float
    kind: str = "degree"


def _require_degree_index(trace: ExplorationTrace) -> None:
    if not trace.degree_indexed:
        raise PreconditionError("Trace was recorded without degree indexing")


def _require_constants(trace: ExplorationTrace, constants: TheoryConstants) -> None:
    if (constants.k, constants.j) != (trace.k, trace.j):
        raise ValueError(f"Constants are for (k={constants.k}, j={constants.j}), trace for (k={trace.k}, j={trace.j})")


def _slack(trace: ExplorationTrace, i: int, ell: int, delta: float) -> float:
    return trace.generation(i).size / trace.n ** ell + trace.n ** delta


def check_theorem3(trace: ExplorationTrace, constants: TheoryConstants, delta: float) -> list[Violation]:
    """
    Every (i, l, L) with ``i <= T`` and ``d_L(G_i) > C_l (|G_i| / n^l + n^delta)``.

    :raises PreconditionError: If the trace has no degree index.
    """
    _require_degree_index(trace)
    _require_constants(trace, constants)
    violations = []
    for i in range(1, min(trace.stop_time, len(trace.generations)) + 1):
        generation = trace.generation(i)
        for ell in range(1, trace.j):
            bound = constants.big_c[ell] * _slack(trace, i, ell, delta)
            violations.extend(
                Violation(i, ell, l_rank, degree, bound)
                for l_rank, degree in generation.degree_index.get(ell, {}).items()
                if degree > bound
            )
    return violations


def check_corollary4(
        trace: ExplorationTrace,
        xi: float,
        kappas: Sequence[float] | None = None,
        constants: TheoryConstants | None = None,
) -> bool:
    """
    True iff ``d_L(G_T) <= kappa_l (|G_T| n^-l + xi)`` for every l-set L. The kappas default
    to the constants ``C_1, ..., C_{j-1}``.

    :raises PreconditionError: If the trace stopped by S1 or has no degree index.
    """
    if not trace.stopped_large:
        raise PreconditionError(f"Trace stopped by {trace.stop_reason.value}; the bound is conditioned on S2 or S3")
    _require_degree_index(trace)
    if kappas is None:
        if constants is None:
            raise ValueError("Provide either kappas or constants")
        _require_constants(trace, constants)
        kappas = constants.kappas()
    if len(kappas) != trace.j - 1:
        raise ValueError(f"Expected {trace.j - 1} kappas, got {len(kappas)}")
    generation = trace.generation(trace.stop_time)
    for ell, kappa in enumerate(kappas, start=1):
        if generation.max_degree(ell) > kappa * (generation.size / trace.n ** ell + xi):
            return False
    return True


def check_staybig(trace: ExplorationTrace, n: int | None = None) -> list[int]:
    """Rounds ``i <= T`` with ``|G_i| >= n`` whose next generation is smaller."""
    n = trace.n if n is None else n
    sizes = trace.generation_sizes
    last = min(trace.stop_time, len(sizes) - 1)
    return [i for i in range(1, last + 1) if sizes[i - 1] >= n and sizes[i] < sizes[i - 1]]


def check_size_at_T_large(
        trace: ExplorationTrace,
        lam: float | None = None,
        n: int | None = None,
        j: int | None = None,
) -> bool:
    """
    True iff ``|C(T_large)| <= 3 lam n^j``.

    :raises PreconditionError: If the trace was not run up to T_large.
    """
    if trace.params.mode is StopMode.RUN_TO_T or trace.large_time is None:
        raise PreconditionError(f"Trace ran in mode {trace.params.mode.value}; T_large was not reached")
    lam = trace.params.lam if lam is None else lam
    n = trace.n if n is None else n
    j = trace.j if j is None else j
    return trace.size_at(trace.large_time) <= 3.0 * lam * n ** j


def check_ledger(trace: ExplorationTrace) -> list[Violation]:
    """Every (i >= 2, l, L) where jump plus pivot contributions differ from ``d_L(G_i)``."""
    _require_degree_index(trace)
    ledger = trace.ledger
    mismatches = []
    for i in range(2, len(trace.generations) + 1):
        generation = trace.generation(i)
        for ell in range(1, trace.j):
            degrees = generation.degree_index.get(ell, {})
            for l_rank, degree in degrees.items():
                attributed = ledger.jump_contrib(i, ell, l_rank) + ledger.pivot_contrib(i, ell, l_rank)
                if attributed != degree:
                    mismatches.append(Violation(i, ell, l_rank, attributed, degree, "ledger"))
    for entry in ledger.entries():
        if entry.l_rank not in trace.generation(entry.generation).degree_index.get(entry.ell, {}):
            if entry.jump + entry.pivot:
                mismatches.append(Violation(entry.generation, entry.ell, entry.l_rank, entry.jump + entry.pivot, 0,
                                            "ledger"))
    return mismatches


def check_event_caps(trace: ExplorationTrace) -> list[Violation]:
    """
    Single events above their caps: a jump adds at most ``C(k-l, j-l)`` j-sets containing L,
    a pivot at most ``C(k-l, j-l) - 1``.
    """
    violations = []
    for ell in range(1, trace.j):
        cap = comb(trace.k - ell, trace.j - ell)
        for kind, limit in ((EventKind.JUMP, cap), (EventKind.PIVOT, cap - 1)):
            observed = trace.ledger.max_event(kind, ell)
            if observed > limit:
                violations.append(Violation(0, ell, None, observed, limit, kind.value))
    return violations


def check_jump_pivot_bounds(trace: ExplorationTrace, constants: TheoryConstants, delta: float) -> list[Violation]:
    """
    For ``2 <= i <= T``: jump part ``<= C'_l (|G_i| / n^l + n^delta)`` and pivot part
    ``<= (r'_l C_l + 2 c_l + 1)(|G_i| / n^l + n^delta)``.
    """
    _require_degree_index(trace)
    _require_constants(trace, constants)
    violations = []
    last = min(trace.stop_time, len(trace.generations))
    for entry in trace.ledger.entries():
        if entry.generation > last:
            continue
        slack = _slack(trace, entry.generation, entry.ell, delta)
        jump_bound = constants.big_c_prime[entry.ell] * slack
        pivot_bound = constants.pivot_factor(entry.ell) * slack
        if entry.jump > jump_bound:
            violations.append(Violation(entry.generation, entry.ell, entry.l_rank, entry.jump, jump_bound, "jump"))
        if entry.pivot > pivot_bound:
            violations.append(Violation(entry.generation, entry.ell, entry.l_rank, entry.pivot, pivot_bound, "pivot"))
    return violations


def check_lower_coupling(trace: ExplorationTrace, gamma: float) -> list[tuple[int, int]]:
    """
    Rounds in which some processed j-set made fewer than ``(1 - gamma) C(n, k - j)`` full
    queries, with the number of such j-sets.

    :raises PreconditionError: If the trace was recorded without lower-coupling tracking.
    """
    if trace.full_queries is None:
        raise PreconditionError("Trace was recorded without lower-coupling tracking")
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    required = (1.0 - gamma) * comb(trace.n, trace.k - trace.j)
    failures = []
    for i, counts in sorted(trace.full_queries.items()):
        short = sum(1 for count in counts if count < required)
        if short:
            failures.append((i, short))
    return failures


def default_component_scale(k: int, ell: int) -> float:
    return 3.0 * 2 ** (k + ell + 1)


def check_component_degree(
        trace: ExplorationTrace,
        lam: float | None = None,
        scale: Callable[[int, int], float] | float | None = None,
) -> list[Violation]:
    """
    Every (i, l) with ``i <= T_large`` (or the last recorded round) and
    ``Delta_l(C(i)) > S_l lam n^(j - l)``. ``scale`` is a constant or a function of (k, l).
    """
    _require_degree_index(trace)
    lam = trace.params.lam if lam is None else lam
    last = trace.large_time if trace.large_time is not None else len(trace.generations)
    violations = []
    for i in range(1, last + 1):
        maxima = trace.component_max_degree[i - 1]
        for ell in range(1, trace.j):
            match scale:
                case None:
                    s = default_component_scale(trace.k, ell)
                case int() | float():
                    s = float(scale)
                case _:
                    s = scale(trace.k, ell)
            bound = s * lam * trace.n ** (trace.j - ell)
            if maxima.get(ell, 0) > bound:
                violations.append(Violation(i, ell, None, maxima[ell], bound, "component"))
    return violations


class LazyOracleFactory:
    """Fresh lazy oracle per trial, on substream ``trial`` of ``seed``."""

    def __init__(self, n: int, k: int, p: float, seed: int):
        self.n = n
        self.k = k
        self.p = p
        self.seed = seed

    def __call__(self, trial: int) -> EdgeOracle:
        return EdgeOracle.lazy(self.n, self.k, self.p, SeededStream(self.seed, trial))


def random_start(n: int, j: int, seed: int, trial: int) -> int:
    """Uniform j-set rank for trial ``trial``, independent of the trial's oracle stream."""
    return SeededStream(seed, START_STREAM_OFFSET + trial).randbelow(comb(n, j))


def multi_start_stop_frequency(
        oracle_factory: Callable[[int], EdgeOracle],
        params: StopParams,
        trials: int,
        seed: int = 0,
) -> Proportion:
    """
    Fraction of explorations stopping by S2 or S3, each from a uniformly random start on a
    fresh oracle.

    :raises ValueError: If trials is not positive.
    """
    if trials < 1:
        raise ValueError(f"Need at least one trial, got {trials}")
    stopped = 0
    for trial in range(trials):
        oracle = oracle_factory(trial)
        start = random_start(params.n, params.j, seed, trial)
        trace = explore(start, oracle, params.with_mode(StopMode.RUN_TO_T), degree_index=False)
        stopped += trace.stopped_large
    result = Proportion(stopped, trials)
    logger.info(f"Stop frequency {result.estimate:.4f} +- {result.stderr:.4f} over {trials} trials")
    return result

import config.env  # noqa: F401  # load_dotenv side effect
import os
import logging
from dataclasses import asdict, dataclass, field, replace
from enum import auto, StrEnum
from functools import lru_cache, partial
from math import comb, sqrt
from pathlib import Path
from multiprocessing import Pool
from typing import Any, Callable, Mapping

from tqdm import tqdm

from branching.coupling import coupled_domination_run
from branching.galton_watson import default_progeny_cap, mean_progeny_mc, survival_mc
from branching.law_types import LawKind
from branching.law_utils import make_law
from core.census import build_census, is_hypertree
from core.randsrc import MAX_EXPECTED_EDGES, EdgeSet, SeededStream, sample_hypergraph
from core.stats import Proportion, agrees, combined_stderr, sample_mean
from core.theory import (C_SUB, DEFAULT_DELTA, build_constants, c_of, critical_p, default_params,
                         extinction_fixed_point, giant_prediction, graph_subcritical_bound, leading_order_survival,
                         log_binom, stop_probability_bracket, subcritical_bound)
from explorer.checks import (LazyOracleFactory, check_component_degree, check_corollary4, check_event_caps,
                             check_jump_pivot_bounds, check_ledger, check_lower_coupling, check_size_at_T_large,
                             check_staybig, check_theorem3, multi_start_stop_frequency, random_start)
from explorer.params import StopMode, StopParams
from explorer.process import explore
from services.reports import ReportFormat, write_census, write_trace

# Worker processes for trial-level parallelism
HARNESS_WORKERS: int = int(os.getenv("HARNESS_WORKERS", 1))
# Coupled runs per branching suite
COUPLING_TRIALS: int = int(os.getenv("COUPLING_TRIALS", 100))
# Padding draws of coupled runs use substreams above this id
PADDING_STREAM_OFFSET: int = 1 << 61

logger = logging.getLogger("hypergiant.harness")


class Regime(StrEnum):
    SUB = auto()
    SUPER = auto()


@lru_cache(maxsize=16)
def _cached_default_params(n: int, k: int, j: int, eps: float, delta: float, mode: StopMode) -> StopParams:
    # Parameter-window warnings are logged once per configuration, not once per trial
    return default_params(n, k, j, eps, delta, mode)


def _to_bool(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    return str(value).strip().lower() in ("1", "true", "yes", "on")


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Everything a run depends on. ``p`` overrides ``(1 +- eps) p_g``; ``lam``, ``delta``,
    ``xi`` and ``gamma`` override the default stopping parameters. ``edges_file`` replaces
    sampling in census trials by a hypergraph read from disk; with ``out`` set, ``save_edges``
    keeps every sampled hypergraph next to the reports.
    """
    n: int
    k: int
    j: int
    eps: float
    regime: Regime = Regime.SUPER
    trials: int = 10
    seed: int = 0
    p: float | None = None
    lam: float | None = None
    delta: float = DEFAULT_DELTA
    xi: float | None = None
    gamma: float | None = None
    progeny_cap: int | None = None
    max_edges: int = MAX_EXPECTED_EDGES
    out: str | None = None
    format: ReportFormat = ReportFormat.CSV
    workers: int = HARNESS_WORKERS
    track_lower_coupling: bool = False
    save_edges: bool = False
    edges_file: str | None = None

    def __post_init__(self):
        if self.k < 2 or not 1 <= self.j <= self.k - 1 or self.k > self.n:
            raise ValueError(f"Need 1 <= j <= k - 1 and k <= n, got n={self.n}, k={self.k}, j={self.j}")
        if not 0.0 < self.eps < 1.0:
            raise ValueError(f"eps must lie in (0, 1), got {self.eps}")
        if self.trials < 1:
            raise ValueError(f"Need at least one trial, got {self.trials}")
        if self.p is not None and not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must lie in [0, 1], got {self.p}")
        object.__setattr__(self, "regime", Regime(self.regime))
        object.__setattr__(self, "format", ReportFormat(self.format))

    @property
    def c(self) -> int:
        return c_of(self.k, self.j)

    @property
    def overridden_p(self) -> bool:
        return self.p is not None or self.edges_file is not None

    @property
    def edge_probability(self) -> float:
        if self.p is not None:
            return self.p
        sign = 1.0 if self.regime is Regime.SUPER else -1.0
        return (1.0 + sign * self.eps) * critical_p(self.n, self.k, self.j)

    def stop_params(self, mode: StopMode = StopMode.RUN_TO_T) -> StopParams:
        defaults = _cached_default_params(self.n, self.k, self.j, self.eps, self.delta, mode)
        lam = self.lam if self.lam is not None else defaults.lam
        gamma = self.gamma if self.gamma is not None else sqrt(lam * self.eps)
        return StopParams(
            lam=lam,
            delta=self.delta,
            xi=self.xi if self.xi is not None else defaults.xi,
            n=self.n,
            j=self.j,
            mode=mode,
            gamma=gamma,
        )

    def to_dict(self) -> dict[str, Any]:
        result = asdict(self)
        result["regime"] = self.regime.value
        result["format"] = self.format.value
        return result

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any]) -> "ExperimentConfig":
        """
        Builds a config from case-insensitive keys (``N``, ``EPS``, ``LAMBDA`` ...). Unset or
        empty values fall back to the defaults.

        :raises ValueError: On an unknown key or a value that does not parse.
        """
        casts: dict[str, Callable[[Any], Any]] = {
            "n": int, "k": int, "j": int, "eps": float, "regime": Regime, "trials": int, "seed": int,
            "p": float, "lam": float, "delta": float, "xi": float, "gamma": float, "progeny_cap": int,
            "max_edges": int, "out": str, "format": ReportFormat, "workers": int,
            "track_lower_coupling": _to_bool, "save_edges": _to_bool, "edges_file": str,
        }
        kwargs: dict[str, Any] = {}
        for key, value in values.items():
            name = key.strip().lower()
            if name == "lambda":
                name = "lam"
            if name not in casts:
                raise ValueError(f"Unknown config key {key}")
            if value is None or (isinstance(value, str) and not value.strip()):
                continue
            try:
                kwargs[name] = casts[name](value.strip() if isinstance(value, str) else value)
            except (TypeError, ValueError) as e:
                raise ValueError(f"Invalid value {value!r} for {key}: {e}") from e
        missing = [name for name in ("n", "k", "j", "eps") if name not in kwargs]
        if missing:
            raise ValueError(f"Missing config keys: {', '.join(missing)}")
        return cls(**kwargs)

    def with_overrides(self, **changes: Any) -> "ExperimentConfig":
        return replace(self, **{key: value for key, value in changes.items() if value is not None})


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    observed: Any
    target: Any
    detail: str = ""

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass
class Report:
    """Trial records in trial order, the aggregate computed from them, and the acceptance checks."""
    kind: str
    config: ExperimentConfig
    records: list[dict[str, Any]]
    aggregate: dict[str, Any]
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def summary(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "config": self.config.to_dict(),
            "aggregate": self.aggregate,
            "checks": [check.to_dict() for check in self.checks],
            "passed": self.passed,
        }


def run_trials(trial: Callable[[ExperimentConfig, int], dict[str, Any]], config: ExperimentConfig,
               description: str, count: int | None = None) -> list[dict[str, Any]]:
    """
    Runs ``trial(config, t)`` for every trial index, in worker processes when configured.
    Records come back in trial-index order.
    """
    count = config.trials if count is None else count
    task = partial(trial, config)
    if config.workers > 1 and count > 1:
        with Pool(config.workers) as pool:
            return list(tqdm(pool.imap(task, range(count)), total=count, desc=description, disable=None))
    return [task(t) for t in tqdm(range(count), desc=description, disable=None)]


# Census

def load_edges(config: ExperimentConfig) -> EdgeSet:
    """
    :raises ValueError: If the file's ``n`` or ``k`` differ from the config.
    """
    edges = EdgeSet.read(config.edges_file)
    if (edges.n, edges.k) != (config.n, config.k):
        raise ValueError(f"{config.edges_file} holds a hypergraph with n={edges.n}, k={edges.k}; "
                         f"the config asks for n={config.n}, k={config.k}")
    return edges


def census_trial(config: ExperimentConfig, trial: int) -> dict[str, Any]:
    if config.edges_file:
        edges = load_edges(config)
    else:
        stream = SeededStream(config.seed, trial)
        edges = sample_hypergraph(config.n, config.k, config.edge_probability, stream, config.max_edges)
    census = build_census(edges, config.j)
    if config.out:
        out = Path(config.out)
        write_census(census, out / f"census_{trial}.json")
        if config.save_edges and not config.edges_file:
            edges.write(out / f"census_edges_{trial}.txt")
    rest = census.components[1:]
    return {
        "trial": trial,
        "stream_id": trial,
        "edges": len(edges),
        "components": len(census.components),
        "largest": census.largest,
        "second_largest": census.second_largest,
        "singletons": census.singleton_count,
        "giant_nullity": census.components[0].nullity if census.components else 0,
        "rest_nullity": sum(component.nullity for component in rest),
        "rest_components": len(rest),
        "rest_hypertrees": sum(1 for component in rest if is_hypertree(component)),
        "size_histogram": {str(size): count for size, count in census.size_histogram().items()},
        "nullity_histogram": {str(nu): count for nu, count in census.nullity_histogram().items()},
    }


def _second_smallness_rule(config: ExperimentConfig) -> tuple[float, float]:
    # (ratio of second to largest, fraction of trials that must satisfy it)
    if config.k == 2:
        return 0.05, 1.0
    return 0.10, 0.9


def aggregate_census(config: ExperimentConfig, records: list[dict[str, Any]]) -> tuple[dict[str, Any], list[Check]]:
    largest = sample_mean([record["largest"] for record in records])
    second = sample_mean([record["second_largest"] for record in records])
    total = comb(config.n, config.j)
    rest_components = sum(record["rest_components"] for record in records)
    aggregate: dict[str, Any] = {
        "p": config.edge_probability,
        "critical_p": critical_p(config.n, config.k, config.j),
        "mean_largest": largest.mean,
        "stderr_largest": largest.stderr,
        "std_largest": largest.std,
        "mean_largest_fraction": largest.mean / total,
        "max_largest": max(record["largest"] for record in records),
        "mean_second_largest": second.mean,
        "mean_giant_nullity": sample_mean([record["giant_nullity"] for record in records]).mean,
        "rest_hypertree_fraction": (
            sum(record["rest_hypertrees"] for record in records) / rest_components if rest_components else 1.0
        ),
    }
    checks: list[Check] = []
    if config.overridden_p:
        return aggregate, checks
    if config.regime is Regime.SUPER:
        prediction = giant_prediction(config.n, config.k, config.j, config.eps)
        aggregate["solver_size"] = prediction.solver_size
        aggregate["asymptotic_size"] = prediction.asymptotic_size
        aggregate["solver_survival"] = prediction.survival
        tolerance = 0.10 if config.k == 2 else 0.15
        deviation = abs(largest.mean - prediction.solver_size) / prediction.solver_size
        checks.append(Check("giant_size", deviation <= tolerance, largest.mean, prediction.solver_size,
                            f"relative deviation {deviation:.4f}, tolerance {tolerance}"))
        ratio, required = _second_smallness_rule(config)
        small = sum(1 for record in records if record["second_largest"] <= ratio * record["largest"])
        checks.append(Check("second_largest_small", small >= required * len(records), small, required * len(records),
                            f"second <= {ratio} * largest"))
    else:
        bound = subcritical_bound(config.n, config.j, config.eps, C_SUB)
        aggregate["subcritical_bound"] = bound
        if config.k == 2 and config.eps ** 3 * config.n > 1.0:
            # Reported only: the graph shape has leading constant 2, above the frozen C_SUB
            shape = graph_subcritical_bound(config.n, config.eps, 1.0)
            aggregate["graph_subcritical_shape"] = shape
            aggregate["max_largest_over_graph_shape"] = aggregate["max_largest"] / shape
        violations = sum(1 for record in records if record["largest"] > bound)
        checks.append(Check("subcritical_bound", violations == 0, violations, 0, f"bound {bound:.6g}"))
    return aggregate, checks


def run_census_sweep(config: ExperimentConfig) -> Report:
    """
    Samples ``trials`` hypergraphs and decomposes each into j-components.

    :raises MemoryGuardError: If the expected edge count exceeds ``config.max_edges``.
    """
    records = run_trials(census_trial, config, "census")
    aggregate, checks = aggregate_census(config, records)
    return Report("census", config, records, aggregate, checks)


def calibrate_c_sub(config: ExperimentConfig) -> float:
    """Largest subcritical component over the sweep, in units of ``eps^-2 log C(n, j)``."""
    config = replace(config, regime=Regime.SUB, p=None)
    records = run_trials(census_trial, config, "calibration")
    worst = max(record["largest"] for record in records)
    value = worst / (config.eps ** -2 * log_binom(config.n, config.j))
    logger.info(f"Calibrated C_sub = {value:.6g} from {config.trials} samples at n={config.n}")
    return value


# Exploration

def exploration_trial(config: ExperimentConfig, trial: int) -> dict[str, Any]:
    params = config.stop_params(StopMode.RUN_TO_T_LARGE)
    oracle = LazyOracleFactory(config.n, config.k, config.edge_probability, config.seed)(trial)
    start = random_start(config.n, config.j, config.seed, trial)
    trace = explore(start, oracle, params, track_lower_coupling=config.track_lower_coupling)
    if config.out:
        write_trace(trace, Path(config.out) / f"explore_trace_{trial}.{config.format.value}", config.format)
    constants = build_constants(config.k, config.j, config.eps)
    sizes = trace.generation_sizes
    last = min(trace.stop_time, len(sizes) - 1)
    record = {
        "trial": trial,
        "stream_id": trial,
        "start": start,
        "stop_reason": trace.stop_reason.value,
        "T": trace.stop_time,
        "T_large": trace.large_time,
        "component_size": trace.size_at(trace.stop_time),
        "component_size_T_large": trace.size_at(trace.large_time),
        "queries": trace.total_queries,
        "edges": trace.total_edges,
        "theorem3_violations": len(check_theorem3(trace, constants, params.delta)),
        "staybig_violations": len(check_staybig(trace)),
        "staybig_rounds": sum(1 for i in range(1, last + 1) if sizes[i - 1] >= config.n),
        "size_bound_ok": check_size_at_T_large(trace),
        "corollary4_ok": check_corollary4(trace, params.xi, constants=constants) if trace.stopped_large else None,
        "ledger_mismatches": len(check_ledger(trace)),
        "cap_violations": len(check_event_caps(trace)),
        "jump_pivot_violations": len(check_jump_pivot_bounds(trace, constants, params.delta)),
        "component_degree_violations": len(check_component_degree(trace)),
    }
    if config.track_lower_coupling:
        record["lower_coupling_failures"] = sum(count for _, count in check_lower_coupling(trace, params.gamma))
    return record


def aggregate_exploration(
        config: ExperimentConfig,
        records: list[dict[str, Any]],
) -> tuple[dict[str, Any], list[Check]]:
    trials = len(records)
    stopped = Proportion(sum(1 for record in records if record["stop_reason"] in ("S2", "S3")), trials)
    staybig_rounds = sum(record["staybig_rounds"] for record in records)
    staybig_violations = sum(record["staybig_violations"] for record in records)
    s_trials = [record for record in records if record["corollary4_ok"] is not None]
    size_ok = sum(1 for record in records if record["size_bound_ok"])
    params = config.stop_params()
    aggregate: dict[str, Any] = {
        "p": config.edge_probability,
        "lam": params.lam,
        "xi": params.xi,
        "gamma": params.gamma,
        "stop_frequency": stopped.estimate,
        "stop_frequency_stderr": stopped.stderr,
        "theorem3_violations": sum(record["theorem3_violations"] for record in records),
        "staybig_violation_rate": staybig_violations / staybig_rounds if staybig_rounds else 0.0,
        "size_bound_pass_rate": size_ok / trials,
        "corollary4_pass_rate": (
            sum(1 for record in s_trials if record["corollary4_ok"]) / len(s_trials) if s_trials else None
        ),
        "ledger_mismatches": sum(record["ledger_mismatches"] for record in records),
        "cap_violations": sum(record["cap_violations"] for record in records),
        "jump_pivot_violations": sum(record["jump_pivot_violations"] for record in records),
        "component_degree_violations": sum(record["component_degree_violations"] for record in records),
    }
    checks = [
        Check("ledger_identity", aggregate["ledger_mismatches"] == 0, aggregate["ledger_mismatches"], 0),
        Check("event_caps", aggregate["cap_violations"] == 0, aggregate["cap_violations"], 0),
    ]
    if config.overridden_p:
        return aggregate, checks
    c = config.c
    if config.regime is Regime.SUPER:
        bracket = stop_probability_bracket(config.n, config.k, config.j, config.eps, params.lam, params.gamma)
        aggregate["solver_survival"] = bracket.survival
        aggregate["lower_law_survival"] = bracket.lower
        aggregate["upper_bound"] = bracket.upper
        aggregate["leading_order_survival"] = leading_order_survival(config.eps, c)
        checks.extend([
            Check("theorem3", aggregate["theorem3_violations"] == 0, aggregate["theorem3_violations"], 0),
            Check("size_at_T_large", aggregate["size_bound_pass_rate"] >= 0.99, aggregate["size_bound_pass_rate"],
                  0.99),
            Check("staybig", aggregate["staybig_violation_rate"] < 0.01, aggregate["staybig_violation_rate"], 0.01),
            Check("stop_frequency", agrees(stopped.estimate, bracket.survival, stopped.stderr),
                  stopped.estimate, bracket.survival, f"stderr {stopped.stderr:.4g}"),
            Check("stop_bracket",
                  bracket.lower - 3.0 * stopped.stderr <= stopped.estimate <= bracket.upper + 3.0 * stopped.stderr,
                  stopped.estimate, [bracket.lower, bracket.upper]),
        ])
        if s_trials:
            checks.append(Check("corollary4", aggregate["corollary4_pass_rate"] >= 0.99,
                                aggregate["corollary4_pass_rate"], 0.99))
    else:
        s1 = 1.0 - stopped.estimate
        required = 1.0 - 2.0 * config.eps / c - 5.0 * stopped.stderr
        checks.append(Check("subcritical_s1", s1 >= required, s1, required))
    return aggregate, checks


def run_exploration_sweep(config: ExperimentConfig) -> Report:
    """
    Explores from a uniformly random j-set per trial, each on a fresh lazy oracle, up to
    T_large, and runs every checker on the trace.
    """
    records = run_trials(exploration_trial, config, "explore")
    aggregate, checks = aggregate_exploration(config, records)
    return Report("explore", config, records, aggregate, checks)


# Branching

def coupling_trial(config: ExperimentConfig, trial: int) -> dict[str, Any]:
    oracle = LazyOracleFactory(config.n, config.k, config.edge_probability, config.seed)(trial)
    start = random_start(config.n, config.j, config.seed, trial)
    padding = SeededStream(config.seed, PADDING_STREAM_OFFSET + trial)
    result = coupled_domination_run(start, oracle, config.stop_params(), padding)
    return {"trial": trial, "dominated": result.dominated, "rounds": len(result.bfs_sizes)}


def run_branching_suite(config: ExperimentConfig) -> Report:
    """
    Upper and lower law survival against the solver, dual-law progeny against ``1 / eps``,
    pivot-law subcriticality and the coupled domination runs. The multi-start stop frequency
    is bracketed by the lower and upper survival estimates.

    :raises ValueError: If ``config.trials`` is below the survival minimum.
    """
    n, k, j, eps = config.n, config.k, config.j, config.eps
    p = config.edge_probability
    params = config.stop_params()
    cap = config.progeny_cap or default_progeny_cap(eps)
    c = config.c
    records: list[dict[str, Any]] = []
    checks: list[Check] = []

    upper = make_law(LawKind.UPPER, n, k, j, p)
    lower = make_law(LawKind.LOWER, n, k, j, p, gamma=params.gamma)
    estimates = {}
    for stream_id, law, zeta in ((0, upper, 0.0), (1, lower, params.gamma)):
        estimate = survival_mc(law, config.trials, SeededStream(config.seed, stream_id), cap, check_cap=True)
        solver = extinction_fixed_point(comb(n, k - j), p, c, zeta=zeta).survival
        estimates[law.kind] = estimate
        records.append({
            "law": law.kind.value, "mean": law.mean, "estimate": estimate.estimate, "stderr": estimate.stderr,
            "target": solver, "cap": estimate.cap,
            "cap_agrees": estimate.cap_check.agrees if estimate.cap_check else None,
        })
        if not config.overridden_p:
            checks.append(Check(f"{law.kind.value}_survival", agrees(estimate.estimate, solver, estimate.stderr),
                                estimate.estimate, solver))
    bracket_error = combined_stderr(estimates[LawKind.LOWER].stderr, estimates[LawKind.UPPER].stderr)
    checks.append(Check("survival_order",
                        estimates[LawKind.LOWER].estimate <= estimates[LawKind.UPPER].estimate + 3.0 * bracket_error,
                        [estimates[LawKind.LOWER].estimate, estimates[LawKind.UPPER].estimate], "lower <= upper"))

    dual = make_law(LawKind.DUAL, n, k, j, eps=eps)
    progeny = mean_progeny_mc(dual, config.trials, SeededStream(config.seed, 2))
    records.append({"law": dual.kind.value, "mean": dual.mean, "estimate": progeny.mean, "stderr": progeny.stderr,
                    "target": 1.0 / eps, "cap": None, "cap_agrees": None})
    checks.append(Check("dual_progeny", abs(progeny.mean - 1.0 / eps) <= 0.1 / eps, progeny.mean, 1.0 / eps))

    for ell in range(1, j):
        pivot = make_law(LawKind.PIVOT, n, k, j, p, ell=ell)
        estimate = survival_mc(pivot, config.trials, SeededStream(config.seed, 2 + ell), cap)
        records.append({"law": f"{pivot.kind.value}_{ell}", "mean": pivot.mean, "estimate": estimate.estimate,
                        "stderr": estimate.stderr, "target": 0.0, "cap": estimate.cap, "cap_agrees": None})
        tolerance = 3.0 * max(estimate.stderr, 1.0 / config.trials)
        checks.append(Check(f"pivot_{ell}_subcritical", pivot.is_subcritical() and estimate.estimate <= tolerance,
                            estimate.estimate, 0.0, f"mean {pivot.mean:.4g}"))

    coupled = run_trials(coupling_trial, config, "coupling", count=min(config.trials, COUPLING_TRIALS))
    dominated = sum(1 for record in coupled if record["dominated"])
    checks.append(Check("coupling_domination", dominated == len(coupled), dominated, len(coupled)))

    oracles = LazyOracleFactory(n, k, p, config.seed)
    stopped = multi_start_stop_frequency(oracles, params, config.trials, config.seed)
    if not config.overridden_p:
        markov = stop_probability_bracket(n, k, j, eps, params.lam, params.gamma).markov_term
        low = estimates[LawKind.LOWER].estimate - 3.0 * combined_stderr(
            estimates[LawKind.LOWER].stderr, stopped.stderr)
        high = estimates[LawKind.UPPER].estimate + markov + 3.0 * combined_stderr(
            estimates[LawKind.UPPER].stderr, stopped.stderr)
        checks.append(Check("stop_bracket_mc", low <= stopped.estimate <= high, stopped.estimate, [low, high],
                            f"Markov term {markov:.4g}"))

    aggregate = {
        "p": p,
        "progeny_cap": cap,
        "stop_frequency": stopped.estimate,
        "stop_frequency_stderr": stopped.stderr,
        "upper_survival": estimates[LawKind.UPPER].estimate,
        "lower_survival": estimates[LawKind.LOWER].estimate,
        "dual_mean_progeny": progeny.mean,
        "coupled_runs": len(coupled),
        "coupled_dominated": dominated,
    }
    return Report("branching", config, records, aggregate, checks)

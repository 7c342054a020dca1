import config.env  # noqa: F401  # load_dotenv side effect
import os
import logging
from dataclasses import dataclass
from math import ceil

import numpy as np

from branching.law import OffspringLaw
from core.randsrc import INT64_MAX, SeededStream
from core.stats import Proportion, SampleMean, combined_stderr, sample_mean

# Floor of the progeny cap that stands in for "survives forever"
DEFAULT_PROGENY_CAP: int = int(os.getenv("DEFAULT_PROGENY_CAP", 10_000))
# Safety cap for total progeny of subcritical runs
MAX_PROGENY: int = int(os.getenv("MAX_PROGENY", 100_000_000))
MIN_SURVIVAL_TRIALS: int = 100
CAP_SENSITIVITY_FACTOR: int = 4

logger = logging.getLogger("hypergiant.branching")


class ProgenyCapError(RuntimeError):
    """Raised when a subcritical run exceeds the total-progeny safety cap."""
    pass


@dataclass(frozen=True)
class GWOutcome:
    """
    One realization. ``total_progeny`` is counted when the run stopped, so it may pass the
    cap by the last generation.
    """
    total_progeny: int
    generations: int
    survived_to_cap: bool


@dataclass(frozen=True)
class CapCheck:
    cap: int
    estimate: float
    stderr: float
    agrees: bool


@dataclass(frozen=True)
class SurvivalEstimate:
    estimate: float
    stderr: float
    trials: int
    cap: int
    cap_check: CapCheck | None = None


def default_progeny_cap(eps: float | None = None) -> int:
    """``max(DEFAULT_PROGENY_CAP, ceil(10 / eps^2))``."""
    if eps is None or eps <= 0.0:
        return DEFAULT_PROGENY_CAP
    return max(DEFAULT_PROGENY_CAP, ceil(10.0 / eps ** 2))


def gw_run(law: OffspringLaw, progeny_cap: int, stream: SeededStream) -> GWOutcome:
    """
    Generation by generation realization from a single ancestor, stopped at extinction or
    once the total progeny reaches ``progeny_cap``.

    :raises ValueError: If the cap is below 1.
    """
    if progeny_cap < 1:
        raise ValueError(f"Progeny cap must be at least 1, got {progeny_cap}")
    population = total = 1
    generations = 0
    while population and total < progeny_cap:
        population = law.offspring_total(stream, population)
        total += population
        generations += 1
    return GWOutcome(total, generations, population > 0)


def _vectorizable(law: OffspringLaw, bound: int) -> bool:
    return law.trials * bound <= INT64_MAX


def _survival_frequency(law: OffspringLaw, cap: int, trials: int, stream: SeededStream) -> Proportion:
    if not _vectorizable(law, cap * max(law.multiplier, 1)):
        survived = sum(gw_run(law, cap, stream).survived_to_cap for _ in range(trials))
        return Proportion(survived, trials)
    generator = stream.generator
    population = np.ones(trials, dtype=np.int64)
    total = np.ones(trials, dtype=np.int64)
    active = total < cap
    while active.any():
        successes = generator.binomial(law.trials * population[active], law.p)
        population[active] = law.multiplier * successes
        total[active] += population[active]
        active = (population > 0) & (total < cap)
    return Proportion(int(np.count_nonzero(population > 0)), trials)


def survival_mc(
        law: OffspringLaw,
        trials: int,
        stream: SeededStream,
        progeny_cap: int | None = None,
        *,
        eps: float | None = None,
        check_cap: bool = False,
) -> SurvivalEstimate:
    """
    Fraction of runs alive when the total progeny reaches the cap.

    :param OffspringLaw law: The offspring law.
    :param int trials: Number of runs, at least 100.
    :param SeededStream stream: Source of randomness.
    :param progeny_cap: Cap standing in for survival; defaults to :func:`default_progeny_cap`
        with eps (or ``mean - 1`` when eps is omitted).
    :param eps: Supercriticality used for the default cap.
    :param bool check_cap: Also estimate at four times the cap and compare within 2 sigma.
    :return: The estimate, its binomial standard error and the optional cap check.
    :rtype: SurvivalEstimate

    :raises ValueError: If trials is below 100.
    """
    if trials < MIN_SURVIVAL_TRIALS:
        raise ValueError(f"Survival estimates need at least {MIN_SURVIVAL_TRIALS} trials, got {trials}")
    if progeny_cap is None:
        progeny_cap = default_progeny_cap(eps if eps is not None else law.mean - 1.0)
    result = _survival_frequency(law, progeny_cap, trials, stream)
    cap_check = None
    if check_cap:
        larger_cap = CAP_SENSITIVITY_FACTOR * progeny_cap
        larger = _survival_frequency(law, larger_cap, trials, stream)
        agrees = abs(result.estimate - larger.estimate) <= 2.0 * combined_stderr(result.stderr, larger.stderr)
        cap_check = CapCheck(larger_cap, larger.estimate, larger.stderr, agrees)
        if not agrees:
            logger.warning(
                f"Survival at cap {progeny_cap} ({result.estimate:.4f}) and at cap {larger_cap} "
                f"({larger.estimate:.4f}) differ by more than 2 sigma"
            )
    logger.debug(f"Survival of {law!r}: {result.estimate:.4f} +- {result.stderr:.4f}")
    return SurvivalEstimate(result.estimate, result.stderr, trials, progeny_cap, cap_check)


def mean_progeny_mc(
        law: OffspringLaw,
        trials: int,
        stream: SeededStream,
        safety_cap: int = MAX_PROGENY,
) -> SampleMean:
    """
    Empirical mean total progeny of a subcritical law.

    :raises ValueError: If the law's mean is at least 1 or trials is not positive.
    :raises ProgenyCapError: If some run passes ``safety_cap``.
    """
    if law.mean >= 1.0:
        raise ValueError(f"Total progeny is only finite for subcritical laws, got mean {law.mean:.6g}")
    if trials < 1:
        raise ValueError(f"Need at least one trial, got {trials}")
    if not _vectorizable(law, safety_cap * max(law.multiplier, 1)):
        totals = []
        for _ in range(trials):
            outcome = gw_run(law, safety_cap, stream)
            if outcome.survived_to_cap:
                raise ProgenyCapError(f"A run of {law!r} passed the safety cap of {safety_cap}")
            totals.append(outcome.total_progeny)
        return sample_mean(totals)
    generator = stream.generator
    population = np.ones(trials, dtype=np.int64)
    total = np.ones(trials, dtype=np.int64)
    alive = population > 0
    while alive.any():
        successes = generator.binomial(law.trials * population[alive], law.p)
        population[alive] = law.multiplier * successes
        total[alive] += population[alive]
        if total.max() > safety_cap:
            raise ProgenyCapError(
                f"A run of {law!r} passed the safety cap of {safety_cap} "
                f"(largest total {int(total.max())}, {int(np.count_nonzero(population))} runs alive)"
            )
        alive = population > 0
    return sample_mean(total)

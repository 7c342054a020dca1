import logging
from dataclasses import dataclass
from math import sqrt

import numpy as np
from scipy import stats as sp_stats

from core.randsrc import SeededStream

logger = logging.getLogger("hypergiant.stats")


@dataclass(frozen=True)
class Proportion:
    """A Monte Carlo frequency with its binomial standard error."""
    successes: int
    trials: int

    @property
    def estimate(self) -> float:
        return self.successes / self.trials if self.trials else 0.0

    @property
    def stderr(self) -> float:
        if not self.trials:
            return 0.0
        q = self.estimate
        return sqrt(q * (1.0 - q) / self.trials)


@dataclass(frozen=True)
class SampleMean:
    mean: float
    stderr: float
    std: float
    count: int


def sample_mean(values) -> SampleMean:
    array = np.asarray(values, dtype=float)
    if array.size == 0:
        return SampleMean(0.0, 0.0, 0.0, 0)
    std = float(array.std(ddof=1)) if array.size > 1 else 0.0
    return SampleMean(float(array.mean()), std / sqrt(array.size), std, int(array.size))


def agrees(observed: float, expected: float, stderr: float, sigmas: float = 3.0) -> bool:
    """True when ``observed`` is within ``sigmas`` standard errors of ``expected``."""
    return abs(observed - expected) <= sigmas * stderr


def combined_stderr(*errors: float) -> float:
    return sqrt(sum(e * e for e in errors))


def chernoff_exceedance(
        stream: SeededStream,
        m: int,
        p: float,
        a: float,
        delta: float,
        n: int,
        draws: int,
) -> Proportion:
    """
    Frequency of ``X > (1 + a) m p + 2 n^delta`` over ``draws`` samples of X ~ Bi(m, p).
    """
    threshold = (1.0 + a) * m * p + 2.0 * n ** delta
    samples = stream.generator.binomial(m, p, size=draws)
    return Proportion(int(np.count_nonzero(samples > threshold)), draws)


def binomial_count_pvalue(counts, trials: int, p: float, min_expected: float = 5.0) -> float:
    """
    Chi-square goodness-of-fit p-value of observed edge counts against Binomial(trials, p).
    Sparse tails are pooled until every cell expects at least ``min_expected`` observations.
    """
    observed = np.bincount(np.asarray(counts, dtype=np.int64), minlength=trials + 1)[: trials + 1]
    expected = sp_stats.binom.pmf(np.arange(trials + 1), trials, p) * len(counts)
    cells_obs, cells_exp = [], []
    acc_obs = acc_exp = 0.0
    for obs, exp_ in zip(observed, expected):
        acc_obs += obs
        acc_exp += exp_
        if acc_exp >= min_expected:
            cells_obs.append(acc_obs)
            cells_exp.append(acc_exp)
            acc_obs = acc_exp = 0.0
    if cells_exp:
        cells_obs[-1] += acc_obs
        cells_exp[-1] += acc_exp
    if len(cells_exp) < 2:
        return 1.0
    cells_exp = np.asarray(cells_exp)
    cells_exp *= np.sum(cells_obs) / cells_exp.sum()
    return float(sp_stats.chisquare(cells_obs, cells_exp).pvalue)

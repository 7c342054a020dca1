from math import ceil, comb
import sys
from typing import Any

if sys.version_info >= (3, 12):
    from typing import override
else:
    from typing_extensions import override

import numpy as np

from branching.law_types import LawKind
from core.randsrc import INT64_MAX, SeededStream, binomial_draw


class OffspringLaw:
    """
    Offspring ``m * Bi(N, p)``: N queries per individual, each success bringing m children.

    :param kind: Which of the coupling laws this is.
    :type kind: LawKind
    :param trials: N, the number of queries.
    :type trials: int
    :param p: Success probability.
    :type p: float
    :param multiplier: m, children per success.
    :type multiplier: int

    :raises ValueError: If p is outside [0, 1], N is negative or m is negative.
    """

    def __init__(self, kind: LawKind, trials: int, p: float, multiplier: int):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"Probability must lie in [0, 1], got {p}")
        if trials < 0 or multiplier < 0:
            raise ValueError(f"Need N >= 0 and m >= 0, got N={trials}, m={multiplier}")
        self._kind: LawKind = LawKind(kind)
        self._trials: int = trials
        self._p: float = p
        self._multiplier: int = multiplier

    @property
    def kind(self) -> LawKind:
        return self._kind

    @property
    def trials(self) -> int:
        return self._trials

    @property
    def p(self) -> float:
        return self._p

    @property
    def multiplier(self) -> int:
        return self._multiplier

    @property
    def mean(self) -> float:
        return self._multiplier * self._trials * self._p

    def is_subcritical(self) -> bool:
        return self.mean < 1.0

    def sample(self, stream: SeededStream) -> int:
        return self._multiplier * binomial_draw(stream, self._trials, self._p)

    def sample_batch(self, stream: SeededStream, size: int) -> np.ndarray:
        """``size`` independent offspring counts."""
        if self._trials <= INT64_MAX:
            return self._multiplier * stream.generator.binomial(self._trials, self._p, size=size)
        return np.array([self.sample(stream) for _ in range(size)], dtype=np.int64)

    def offspring_total(self, stream: SeededStream, parents: int) -> int:
        """Total children of ``parents`` individuals, drawn as ``m * Bi(N * parents, p)``."""
        return self._multiplier * binomial_draw(stream, self._trials * parents, self._p)

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self._kind.value,
            "N": self._trials,
            "p": self._p,
            "m": self._multiplier,
            "mean": self.mean,
        }

    def __repr__(self) -> str:
        return f"{type(self).__name__}(N={self._trials}, p={self._p:.6g}, m={self._multiplier}, mean={self.mean:.6g})"


class UpperLaw(OffspringLaw):
    """
    Dominates the exploration from above: ``c * Bi(C(n, k - j), p)`` with ``c = C(k, j) - 1``.
    """

    def __init__(self, n: int, k: int, j: int, p: float):
        super().__init__(LawKind.UPPER, comb(n, k - j), p, comb(k, j) - 1)


class LowerLaw(OffspringLaw):
    """
    Dominated by the exploration while every j-set keeps ``(1 - gamma) C(n, k - j)``
    fresh queries: ``c * Bi(ceil((1 - gamma) C(n, k - j)), p)``.

    :raises ValueError: If gamma is outside (0, 1).
    """

    def __init__(self, n: int, k: int, j: int, p: float, gamma: float):
        if not 0.0 < gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
        super().__init__(LawKind.LOWER, ceil((1.0 - gamma) * comb(n, k - j)), p, comb(k, j) - 1)
        self._gamma: float = gamma

    @property
    def gamma(self) -> float:
        return self._gamma

    @override
    def to_dict(self) -> dict[str, Any]:
        result = super().to_dict()
        result["gamma"] = self._gamma
        return result


class PivotLaw(OffspringLaw):
    """
    Search on j-sets containing a fixed l-set: ``(C(k - l, j - l) - 1) * Bi(C(n, k - j), p)``.

    :raises ValueError: Unless ``1 <= ell <= j - 1``.
    """

    def __init__(self, n: int, k: int, j: int, ell: int, p: float):
        if not 1 <= ell <= j - 1:
            raise ValueError(f"Pivot law needs 1 <= ell <= j - 1 = {j - 1}, got {ell}")
        super().__init__(LawKind.PIVOT, comb(n, k - j), p, comb(k - ell, j - ell) - 1)
        self._ell: int = ell

    @property
    def ell(self) -> int:
        return self._ell

    @override
    def to_dict(self) -> dict[str, Any]:
        result = super().to_dict()
        result["ell"] = self._ell
        return result


class DualLaw(OffspringLaw):
    """
    Subcritical dual of the upper law: probability ``(1 - eps) / (c * C(n, k - j))``, mean ``1 - eps``.

    :raises ValueError: If eps is outside (0, 1).
    """

    def __init__(self, n: int, k: int, j: int, eps: float):
        if not 0.0 < eps < 1.0:
            raise ValueError(f"eps must lie in (0, 1), got {eps}")
        c = comb(k, j) - 1
        trials = comb(n, k - j)
        super().__init__(LawKind.DUAL, trials, (1.0 - eps) / (c * trials), c)
        self._eps: float = eps

    @property
    def eps(self) -> float:
        return self._eps

    @override
    def to_dict(self) -> dict[str, Any]:
        result = super().to_dict()
        result["eps"] = self._eps
        return result

import logging
from math import comb

from branching.law import DualLaw, LowerLaw, OffspringLaw, PivotLaw, UpperLaw
from branching.law_types import LawKind

logger = logging.getLogger("hypergiant.branching")


def make_law(
        kind: LawKind | str,
        n: int,
        k: int,
        j: int,
        p: float | None = None,
        *,
        ell: int | None = None,
        gamma: float | None = None,
        eps: float | None = None,
) -> OffspringLaw:
    """
    Builds one of the four offspring laws for j-sets of an n-vertex k-uniform hypergraph.

    The dual law is fixed by eps; when only p is given, eps is read off ``p = (1 + eps) p_g``.

    :raises ValueError: On an unknown kind or missing or inconsistent parameters.
    """
    if k < 2 or not 1 <= j <= k - 1 or k > n:
        raise ValueError(f"Need 1 <= j <= k - 1 and k <= n, got n={n}, k={k}, j={j}")
    match kind:
        case LawKind.UPPER | LawKind.LOWER | LawKind.PIVOT if p is None:
            raise ValueError(f"The {LawKind(kind).value} law needs p")
        case LawKind.UPPER:
            law = UpperLaw(n, k, j, p)
        case LawKind.LOWER:
            if gamma is None:
                raise ValueError("The lower law needs gamma")
            law = LowerLaw(n, k, j, p, gamma)
        case LawKind.PIVOT:
            if ell is None:
                raise ValueError("The pivot law needs ell")
            law = PivotLaw(n, k, j, ell, p)
        case LawKind.DUAL:
            if eps is None:
                if p is None:
                    raise ValueError("The dual law needs eps or p")
                eps = p * (comb(k, j) - 1) * comb(n, k - j) - 1.0
            law = DualLaw(n, k, j, eps)
        case _:
            raise ValueError(f"Unknown law kind {kind}")
    logger.debug(f"Built {law!r}")
    return law

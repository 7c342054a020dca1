import config.env  # noqa: F401  # load_dotenv side effect
import os
import logging
from dataclasses import dataclass, field
from math import comb, exp, factorial, log, log1p, sqrt
from typing import Any

from scipy.special import gammaln

from explorer.params import StopMode, StopParams

DEFAULT_DELTA: float = float(os.getenv("DEFAULT_DELTA", 0.15))
# Subcritical size constant: bound = C_SUB * eps^-2 * log C(n, j)
C_SUB: float = float(os.getenv("C_SUB", 1.5))
FIXED_POINT_TOL: float = float(os.getenv("FIXED_POINT_TOL", 1e-13))
MAX_FIXED_POINT_ITERATIONS: int = int(os.getenv("MAX_FIXED_POINT_ITERATIONS", 1_000_000))
# Below this, eps^3 n^j and eps^2 n^(1-delta) are not "large" and a warning is logged
WINDOW_SANITY_MIN: float = float(os.getenv("WINDOW_SANITY_MIN", 10.0))
# alpha is irrelevant when j = 1 (no l-sets with 1 <= l <= j - 1)
TRIVIAL_ALPHA: float = 0.5

logger = logging.getLogger("hypergiant.theory")


class ConvergenceError(RuntimeError):
    """Raised when the extinction fixed-point iteration does not converge."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


def _check_orders(k: int, j: int) -> None:
    if k < 2 or not 1 <= j <= k - 1:
        raise ValueError(f"Need k >= 2 and 1 <= j <= k - 1, got k={k}, j={j}")


def c_of(k: int, j: int) -> int:
    """``C(k, j) - 1``: new j-sets per discovered edge."""
    _check_orders(k, j)
    return comb(k, j) - 1


def log_binom(n: float, r: float) -> float:
    """Natural log of C(n, r) through log-gamma, for huge arguments."""
    return float(gammaln(n + 1) - gammaln(r + 1) - gammaln(n - r + 1))


def critical_p(n: int, k: int, j: int) -> float:
    """
    Critical edge probability ``1 / ((C(k, j) - 1) * C(n, k - j))``, correctly rounded.

    :raises ValueError: Unless ``1 <= j <= k - 1 <= n - 1``.
    """
    _check_orders(k, j)
    if k > n:
        raise ValueError(f"Need k <= n, got k={k}, n={n}")
    return 1 / (c_of(k, j) * comb(n, k - j))


@dataclass
class TheoryConstants:
    """
    The degree-bound constants. Keys of the per-l maps run over ``1 <= l <= j - 1``;
    ``big_c`` also holds ``big_c[0] = 1``.
    """
    k: int
    j: int
    eps: float
    alpha: float
    c: int
    c_ell: dict[int, int] = field(default_factory=dict)
    w0: dict[int, int] = field(default_factory=dict)
    r: dict[int, float] = field(default_factory=dict)
    r_prime: dict[int, float] = field(default_factory=dict)
    big_c_prime: dict[int, float] = field(default_factory=dict)
    big_c: dict[int, float] = field(default_factory=lambda: {0: 1.0})

    @property
    def ells(self) -> range:
        return range(1, self.j)

    def pivot_factor(self, ell: int) -> float:
        """``r'_l * C_l + 2 c_l + 1``, the pivot-part constant."""
        return self.r_prime[ell] * self.big_c[ell] + 2 * self.c_ell[ell] + 1

    def kappas(self) -> list[float]:
        """Default Corollary-style constants kappa_1..kappa_{j-1}, taken as C_1..C_{j-1}."""
        return [self.big_c[ell] for ell in self.ells]

    def to_rows(self) -> list[dict[str, Any]]:
        rows = [{"ell": 0, "c_ell": self.c, "w0": 0, "r": 1.0, "r_prime": None, "C_prime": None, "C": 1.0}]
        for ell in self.ells:
            rows.append({
                "ell": ell,
                "c_ell": self.c_ell[ell],
                "w0": self.w0[ell],
                "r": self.r[ell],
                "r_prime": self.r_prime[ell],
                "C_prime": self.big_c_prime[ell],
                "C": self.big_c[ell],
            })
        return rows


def build_constants(k: int, j: int, eps: float, alpha: float | None = None) -> TheoryConstants:
    """
    Builds C_0 = 1 and, for 1 <= l <= j - 1,

    ``C'_l = C(k-l, j-l) * max{(1+alpha)(1+eps)(k-j)!/c * sum_{w=w0}^{l-1} C(l, w) C_w / (k-j-l+w)!, 3}``

    ``C_l = (C'_l + 2 c_l + 1) / (1 - r'_l)``

    When alpha is omitted it is half the headroom to the ``r'_l < 1`` boundary.

    :raises ValueError: If eps is outside (0, 1), alpha is not positive, or some r'_l >= 1.
    """
    _check_orders(k, j)
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    c = c_of(k, j)
    ells = range(1, j)
    r = {ell: (comb(k - ell, j - ell) - 1) / c for ell in ells}
    if alpha is None:
        if ells:
            alpha = 0.5 * (1.0 / ((1.0 + eps) * max(r.values())) - 1.0)
        else:
            alpha = TRIVIAL_ALPHA
    if alpha <= 0.0:
        raise ValueError(f"alpha must be positive, got {alpha:.6g} (eps={eps} leaves no room below r'_l < 1)")
    constants = TheoryConstants(k=k, j=j, eps=eps, alpha=alpha, c=c)
    growth = (1.0 + alpha) * (1.0 + eps)
    for ell in ells:
        r_prime = growth * r[ell]
        if r_prime >= 1.0:
            raise ValueError(f"alpha={alpha} gives r'_{ell} = {r_prime:.6g} >= 1")
        w0 = max(0, j + ell - k)
        total = sum(
            comb(ell, w) * constants.big_c[w] / factorial(k - j - ell + w)
            for w in range(w0, ell)
        )
        inner = growth * factorial(k - j) / c * total
        c_ell = comb(k - ell, j - ell) - 1
        constants.c_ell[ell] = c_ell
        constants.w0[ell] = w0
        constants.r[ell] = r[ell]
        constants.r_prime[ell] = r_prime
        constants.big_c_prime[ell] = comb(k - ell, j - ell) * max(inner, 3.0)
        constants.big_c[ell] = (constants.big_c_prime[ell] + 2 * c_ell + 1) / (1.0 - r_prime)
    return constants


@dataclass(frozen=True)
class FixedPointResult:
    extinction: float
    survival: float
    # Vertices of the process are j-sets, so this already is the per-j-set survival
    jset_survival: float
    residual: float
    iterations: int
    mean: float


def extinction_fixed_point(
        trials: int | float,
        p: float,
        c: int,
        zeta: float = 0.0,
        damping: float = 1.0,
        tol: float = FIXED_POINT_TOL,
        max_iterations: int = MAX_FIXED_POINT_ITERATIONS,
) -> FixedPointResult:
    """
    Minimal solution of ``rho = (1 - p (1 - rho^c))^((1 - zeta) N)``: the death probability
    of the process with offspring ``c * Bi((1 - zeta) N, p)``.

    Iterates ``rho <- (1 - damping) rho + damping f(rho)`` from 0, which increases to the
    minimal fixed point. Subcritical and critical means return rho = 1 directly.

    :param trials: N, the number of queries per vertex.
    :param float p: Edge probability.
    :param int c: Children per success.
    :param float zeta: Fraction of queries removed, in [0, 1).
    :param float damping: Relaxation in (0, 1].
    :return: The fixed point and its residual.
    :rtype: FixedPointResult

    :raises ValueError: On out-of-range inputs.
    :raises ConvergenceError: If the residual is still above ``tol`` after ``max_iterations``.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    if not 0.0 <= zeta < 1.0:
        raise ValueError(f"zeta must lie in [0, 1), got {zeta}")
    if c < 1 or trials < 0:
        raise ValueError(f"Need c >= 1 and N >= 0, got c={c}, N={trials}")
    if not 0.0 < damping <= 1.0:
        raise ValueError(f"damping must lie in (0, 1], got {damping}")
    exponent = (1.0 - zeta) * float(trials)
    mean = exponent * c * p
    if mean <= 1.0:
        return FixedPointResult(1.0, 0.0, 0.0, 0.0, 0, mean)

    def step(rho: float) -> float:
        inner = -p * (1.0 - rho ** c)
        if inner <= -1.0:
            return 0.0
        return exp(exponent * log1p(inner))

    rho = 0.0
    residual = abs(step(rho) - rho)
    iterations = 0
    while residual >= tol:
        if iterations >= max_iterations:
            raise ConvergenceError(
                f"Fixed point did not converge in {max_iterations} iterations (residual {residual:.3g})",
                residual,
            )
        rho = (1.0 - damping) * rho + damping * step(rho)
        residual = abs(step(rho) - rho)
        iterations += 1
    logger.debug(f"Extinction fixed point {rho:.15g} after {iterations} iterations (mean {mean:.6g})")
    return FixedPointResult(rho, 1.0 - rho, 1.0 - rho, residual, iterations, mean)


@dataclass(frozen=True)
class GiantPrediction:
    p: float
    survival: float
    asymptotic_size: float
    solver_size: float


def giant_prediction(n: int, k: int, j: int, eps: float) -> GiantPrediction:
    """
    Largest j-component predictions at ``p = (1 + eps) p_g``: ``(2 eps / c) C(n, j)`` and
    the fixed-point survival times ``C(n, j)``.

    :raises ValueError: If eps is outside (0, 1).
    """
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    c = c_of(k, j)
    p = (1.0 + eps) * critical_p(n, k, j)
    result = extinction_fixed_point(comb(n, k - j), p, c)
    total = float(comb(n, j))
    return GiantPrediction(p, result.survival, 2.0 * eps / c * total, result.survival * total)


def subcritical_bound(n: int, j: int, eps: float, c_sub: float = C_SUB) -> float:
    """
    ``c_sub * eps^-2 * log C(n, j)``, a concrete instance of the O(eps^-2 log n) bound.

    :raises ValueError: If eps is outside (0, 1) or c_sub is not positive.
    """
    if not 0.0 < eps < 1.0 or c_sub <= 0.0:
        raise ValueError(f"Need eps in (0, 1) and c_sub > 0, got eps={eps}, c_sub={c_sub}")
    return c_sub * eps ** -2 * log_binom(n, j)


def graph_subcritical_bound(n: int, eps: float, c_sub: float = C_SUB) -> float:
    """Graph-case shape ``c_sub * eps^-2 * log(eps^3 n)``."""
    if eps ** 3 * n <= 1.0:
        raise ValueError(f"Need eps^3 n > 1, got {eps ** 3 * n:.4g}")
    return c_sub * eps ** -2 * log(eps ** 3 * n)


def leading_order_survival(eps: float, c: int, zeta: float = 0.0) -> float:
    """``2 eps' / c`` with ``eps' = (1 - zeta)(1 + eps) - 1``; 0 when eps' <= 0."""
    eps_prime = (1.0 - zeta) * (1.0 + eps) - 1.0
    return max(0.0, 2.0 * eps_prime / c)


@dataclass(frozen=True)
class StopBracket:
    lower: float
    upper: float
    survival: float
    markov_term: float


def stop_probability_bracket(n: int, k: int, j: int, eps: float, lam: float, gamma: float) -> StopBracket:
    """
    Two-sided bound on the probability that the exploration stops large: the lower-law
    survival from below; the upper-law survival plus the ``1 / (eps lam n^j)`` Markov term
    of the process conditioned on dying out from above.
    """
    c = c_of(k, j)
    trials = comb(n, k - j)
    p = (1.0 + eps) * critical_p(n, k, j)
    upper = extinction_fixed_point(trials, p, c).survival
    lower = extinction_fixed_point(trials, p, c, zeta=gamma).survival
    markov = 1.0 / (eps * lam * n ** j)
    return StopBracket(lower, upper + markov, upper, markov)


def default_lambda(n: int, j: int, eps: float, delta: float = DEFAULT_DELTA) -> float:
    """
    ``max(n^(-1/2+delta/2), n^(-j/3), 1/sqrt(n^min(j, 1-delta) / eps)) * sqrt(eps)``
    clamped to ``[n^-j, eps/10]``.
    """
    base = max(
        n ** (-0.5 + delta / 2.0),
        n ** (-j / 3.0),
        1.0 / sqrt(n ** min(j, 1.0 - delta) / eps),
    )
    return min(max(base * sqrt(eps), float(n) ** -j), eps / 10.0)


def default_xi(n: int, j: int) -> float:
    return log_binom(n, j) ** 1.5


def default_params(
        n: int,
        k: int,
        j: int,
        eps: float,
        delta: float = DEFAULT_DELTA,
        mode: StopMode = StopMode.RUN_TO_T,
) -> StopParams:
    """
    Desk-scale instance of the exploration parameters: lam per :func:`default_lambda`,
    ``xi = (log C(n, j))^(3/2)`` and ``gamma = sqrt(lam * eps)``.

    Parameter windows that only hold asymptotically are checked and logged, never enforced.
    """
    _check_orders(k, j)
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if eps ** 3 * n ** j < WINDOW_SANITY_MIN or eps ** 2 * n ** (1.0 - delta) < WINDOW_SANITY_MIN:
        logger.warning(
            f"eps={eps} is close to the critical window for n={n}, j={j}: "
            f"eps^3 n^j = {eps ** 3 * n ** j:.3g}, eps^2 n^(1-delta) = {eps ** 2 * n ** (1.0 - delta):.3g}"
        )
    lam = default_lambda(n, j, eps, delta)
    lower_edge = max(n ** (-0.5 + delta / 2.0), n ** (-j / 3.0))
    if not lower_edge < lam < eps:
        logger.warning(f"lam={lam:.4g} lies outside ({lower_edge:.4g}, {eps}) at n={n}; the window is asymptotic")
    gamma = sqrt(lam * eps)
    return StopParams(lam=lam, delta=delta, xi=default_xi(n, j), n=n, j=j, mode=mode, gamma=gamma)

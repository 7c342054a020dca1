from enum import auto, StrEnum


class StopReason(StrEnum):
    S1 = "S1"
    S2 = "S2"
    S3 = "S3"


class StopMode(StrEnum):
    RUN_TO_T = auto()
    RUN_TO_T_LARGE = auto()
    # Stopping disabled: explore until the component is exhausted
    FULL = auto()


class StopParams:
    """
    Stopping rules of the breadth-first exploration on j-sets of an n-vertex hypergraph.

    :param lam: Component threshold: S2 fires at ``lam * n^j`` explored j-sets, S3 at a
        generation of ``lam^2 * n^j`` j-sets.
    :type lam: float
    :param delta: Exponent of the ``n^delta`` slack in the degree bounds, in (0, 1/6).
    :type delta: float
    :param xi: Slack of the degree bound at the stopping generation, positive.
    :type xi: float
    :param n: Number of vertices.
    :type n: int
    :param j: Order of the explored sets.
    :type j: int
    :param mode: How far to run past the stopping time.
    :type mode: StopMode
    :param gamma: Lower-coupling deficit, in (0, 1).
    :type gamma: float | None

    :raises ValueError: If delta is outside (0, 1/6), ``lam * n^j < 1``, xi is not positive,
        or gamma is outside (0, 1).
    """

    def __init__(
            self,
            lam: float,
            delta: float,
            xi: float,
            n: int,
            j: int,
            mode: StopMode = StopMode.RUN_TO_T,
            gamma: float | None = None,
    ):
        if not 0.0 < delta < 1.0 / 6.0:
            raise ValueError(f"delta must lie in (0, 1/6), got {delta}")
        if lam <= 0.0 or lam * n ** j < 1.0:
            raise ValueError(f"lam * n^j must be at least 1, got {lam} * {n}^{j} = {lam * n ** j:.4g}")
        if xi <= 0.0:
            raise ValueError(f"xi must be positive, got {xi}")
        if gamma is not None and not 0.0 < gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
        self._lam: float = lam
        self._delta: float = delta
        self._xi: float = xi
        self._n: int = n
        self._j: int = j
        self._mode: StopMode = StopMode(mode)
        self._gamma: float | None = gamma

    @property
    def lam(self) -> float:
        return self._lam

    @property
    def delta(self) -> float:
        return self._delta

    @property
    def xi(self) -> float:
        return self._xi

    @property
    def n(self) -> int:
        return self._n

    @property
    def j(self) -> int:
        return self._j

    @property
    def mode(self) -> StopMode:
        return self._mode

    @property
    def gamma(self) -> float | None:
        return self._gamma

    @property
    def component_threshold(self) -> float:
        """S2 cutoff ``lam * n^j``."""
        return self._lam * self._n ** self._j

    @property
    def generation_threshold(self) -> float:
        """S3 cutoff ``lam^2 * n^j``."""
        return self._lam ** 2 * self._n ** self._j

    def with_mode(self, mode: StopMode) -> "StopParams":
        return StopParams(self._lam, self._delta, self._xi, self._n, self._j, mode, self._gamma)

    def to_dict(self) -> dict:
        return {
            "lam": self._lam,
            "delta": self._delta,
            "xi": self._xi,
            "n": self._n,
            "j": self._j,
            "mode": self._mode.value,
            "gamma": self._gamma,
        }

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, StopParams):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __repr__(self) -> str:
        return (f"StopParams(lam={self._lam:.6g}, delta={self._delta}, xi={self._xi:.6g}, n={self._n}, "
                f"j={self._j}, mode={self._mode.value}, gamma={self._gamma})")

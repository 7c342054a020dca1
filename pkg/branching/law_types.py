from enum import auto, StrEnum


class LawKind(StrEnum):
    UPPER = auto()
    LOWER = auto()
    PIVOT = auto()
    DUAL = auto()

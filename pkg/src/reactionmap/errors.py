"""Exception hierarchy.

Each class carries the CLI exit code it maps to, so the command layer can
translate any library error without a lookup table.
"""

from __future__ import annotations


class ReactionMapError(Exception):
    exit_code = 2

    @property
    def kind(self) -> str:
        return type(self).__name__

    def to_dict(self) -> dict:
        return {"error": self.kind, "message": str(self)}


class InputError(ReactionMapError):
    """Malformed or out-of-contract input."""


class AllZeroScores(InputError):
    pass


class LengthMismatch(InputError):
    pass


class WindowOutOfRange(InputError):
    pass


class NonUnitTangent(InputError):
    pass


class OutOfDomain(InputError):
    pass


class DegeneratePath(InputError):
    pass


class NotAdmissible(InputError):
    pass


class NotPSD(InputError):
    pass


class TooLarge(InputError):
    pass


class FormatError(InputError):
    pass


class Infeasible(ReactionMapError):
    """No nonnegative flow on the library satisfies the supply vector."""

    exit_code = 3

    def __init__(self, message: str, witness=()):
        super().__init__(message)
        self.witness = tuple(sorted(witness))

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["witness"] = list(self.witness)
        return d


class NoConvergence(ReactionMapError):
    """An iterative solver stopped before meeting its tolerance.

    ``best`` holds the best iterate so callers can still inspect it.
    """

    exit_code = 4

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best


class SingularGramian(ReactionMapError):
    exit_code = 4

"""
Exception hierarchy for the constrained-chain simulation library.

Every error raised on purpose by the library derives from ChainError, so
callers (the CLI, Dagster ops) can separate expected failures from bugs.
"""
from typing import Iterable, Optional


class ChainError(Exception):
    """Base class for all library errors."""


class ConfigError(ChainError, ValueError):
    """
    Invalid configuration.

    Collects every offending key so a single run reports all of them.
    """

    def __init__(self, problems: Iterable[str]):
        self.problems = list(problems)
        super().__init__("Invalid configuration: " + "; ".join(self.problems))


class ProfileError(ChainError, ValueError):
    """Invalid constraint profile or defect parameters."""


class SectorCapacityError(ChainError, RuntimeError):
    """Sector construction exceeded the configured maximum dimension."""


class ExhaustiveLimitError(ChainError, ValueError):
    """Exhaustive component search requested above the configured size."""


class ProfileMismatchError(ChainError, ValueError):
    """A basis (or cached sector) was built from a different profile."""


class DimensionError(ChainError, ValueError):
    """Vector or matrix dimension does not fit the operation."""


class StateNotInSectorError(ChainError, KeyError):
    """A Fock state is not a member of the sector basis."""

    def __init__(self, state: int):
        self.state = int(state)
        super().__init__(f"Fock state {self.state:#x} is not in the sector")


class PropagationError(ChainError, RuntimeError):
    """Time evolution failed; carries the offending initial state when known."""

    def __init__(self, message: str, state: Optional[int] = None):
        self.state = state
        if state is not None:
            message = f"{message} (initial state {int(state):#x})"
        super().__init__(message)


class InsufficientLevelsError(ChainError, ValueError):
    """Fewer than three distinct levels remain for spacing ratios."""


class MissingEigenvectorsError(ChainError, ValueError):
    """Eigenvectors were not retained by the diagonalization."""


class GridMismatchError(ChainError, ValueError):
    """Series or partial results were produced on different grids or criteria."""


class SelftestFailure(ChainError, AssertionError):
    """One or more analytic-oracle checks failed."""

    def __init__(self, failures: Iterable[str]):
        self.failures = list(failures)
        super().__init__("Selftest failed: " + "; ".join(self.failures))

"""Exception taxonomy shared across the package.

CLI exit-code mapping: InputError -> 1, everything else numerical -> 2.
"""


class MaglabError(Exception):
    """Base class for package errors."""


class InputError(MaglabError):
    """Bad user input: malformed words, configs, domain violations."""


class ConstructionError(MaglabError):
    """A geometric object could not be built to its stated invariants."""


class ResourceError(MaglabError):
    """A configured cap (enumeration size, iteration budget) was exceeded."""


class NumericalError(MaglabError):
    """Numerical failure: integrator blowup, singular solve."""


class StagnationError(NumericalError):
    """Descent failed to decrease the objective for too many iterations."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class RefinementError(NumericalError):
    """Newton orbit refinement diverged."""

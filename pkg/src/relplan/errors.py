"""Exception taxonomy shared across the package.

The CLI maps these onto its exit-code contract, so new error conditions
should subclass one of the existing categories rather than raising bare
exceptions.
"""


class RelplanError(Exception):
    """Base class for all package errors."""


class InstanceError(RelplanError):
    """A domain object violates its invariants or two objects do not match
    (wrong shapes, unknown ids, inconsistent indexing)."""


class SolverError(RelplanError):
    """Numerical failure inside the LP engine (cycling past the pivot cap,
    singular basis, post-solve feasibility check failed)."""

    def __init__(self, message, iterations=None, phase=None):
        super().__init__(message)
        self.iterations = iterations
        self.phase = phase


class ResourceLimitError(RelplanError):
    """An iteration/node/sample cap was reached.  ``partial`` carries the
    best result obtained before the cap, when one exists."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class NodeLimitError(ResourceLimitError):
    """Branch-and-bound ran out of nodes; ``partial`` is the incumbent."""


class StateSpaceError(ResourceLimitError):
    """A state grid is too large for exhaustive treatment."""


class UnsatisfiableCriterionError(RelplanError):
    """No investment plan can meet the reliability criterion with the
    available candidates."""

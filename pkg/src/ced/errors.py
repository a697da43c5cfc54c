"""Exception types shared across the package."""


class CedError(Exception):
    """Base class for all package-specific errors."""


class ParseError(CedError):
    """Scenario file is not valid JSON / cannot be read."""


class SchemaError(CedError):
    """Scenario file parses but misses required fields or has wrong shapes."""


class InvariantError(CedError):
    """A domain invariant is violated; message names the entity and invariant."""


class SynthesisError(CedError):
    """Synthetic-scenario spec cannot be satisfied."""


class DimensionMismatch(CedError):
    """Dispatch values do not match the scenario dimensions."""


class MissingDuals(CedError):
    """Boundary-equality duals are absent from a solution."""


class NotPSD(CedError):
    """A matrix expected to be positive semidefinite is not, beyond tolerance."""


class DegenerateActiveSet(CedError):
    """Active set is ambiguous (active constraint with ~zero dual); sensitivity
    via the reduced KKT system is unreliable here."""


class BadPartition(CedError):
    """Requested subproblem count is incompatible with the horizon."""


class PartitionMismatch(CedError):
    """Subproblem index is outside the partition."""


class StitchInconsistent(CedError):
    """Duplicated-period values disagree beyond 10x the consensus tolerance."""


class SubproblemInfeasible(CedError):
    """A horizon subproblem came back infeasible during coordination."""

    def __init__(self, n: int, message: str = ""):
        self.n = n
        super().__init__(message or f"subproblem {n} infeasible")


class AgentError(CedError):
    """A distribution-network agent failed while serving a proposal."""

    def __init__(self, k: str, message: str = ""):
        self.k = k
        super().__init__(message or f"DN agent {k} failed")

"""Exception types shared across the package."""


class ChainflowError(Exception):
    """Base class for all package errors."""


class CapacityExceeded(ChainflowError):
    """A link flow or CPU workload reached the domain limit of its cost function."""


class LoopDetected(ChainflowError):
    """A forwarding strategy has a directed cycle within a single stage."""


class NoFeasibleStrategy(ChainflowError):
    """No forwarding strategy with finite total cost could be constructed."""


class LocalComputationInfeasible(ChainflowError):
    """Pure local computation at the data sources is impossible (missing CPU or capacity)."""


class NotConverged(ChainflowError):
    """An iterative solver hit its iteration budget before reaching its tolerance."""


class ZeroTrafficNode(ChainflowError):
    """An operation that requires strictly positive traffic found a zero-traffic node."""


class TooLarge(ChainflowError):
    """Instance exceeds the size limits of the brute-force enumerator."""

"""Exception hierarchy shared by every module."""


class NLCError(Exception):
    """Base class for all library errors."""


class SpecError(NLCError, ValueError):
    """A graph, signal or scenario spec could not be parsed."""


class IsolatedVertexError(NLCError, ValueError):
    pass


class DisconnectedSampleError(NLCError, RuntimeError):
    """Random graph generation exhausted its retry budget."""


class ConnectivityError(NLCError, ValueError):
    """An operation that needs a connected graph received a disconnected one."""


class DomainError(NLCError, ValueError):
    """A signal was evaluated outside [-1, 1]."""


class NotAFixedPointError(NLCError, ValueError):
    pass


class DimensionError(NLCError, ValueError):
    pass


class InvarianceViolation(NLCError, RuntimeError):
    """The integrator left the state box by more than the projection tolerance."""

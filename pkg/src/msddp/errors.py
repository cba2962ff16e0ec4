"""Exception hierarchy shared by all msddp modules."""


class MsddpError(Exception):
    """Base class for every error raised by msddp."""


# Model

class ModelError(MsddpError):
    """Invalid scenario tree or node data."""


class DuplicateNodeId(ModelError):
    pass


class OrphanNode(ModelError):
    pass


class BadProbability(ModelError):
    pass


class NegativeCost(ModelError):
    pass


class BadTreeShape(ModelError):
    """Leaves at different stages or an unreachable node."""


class NotStagewiseIndependent(ModelError):
    pass


class NotFiniteState(ModelError):
    pass


class BadDualBounds(ModelError):
    pass


class InconsistentPenalty(ModelError):
    """Children of one node use different penalty norms."""


# Approximations

class ApproxError(MsddpError):
    pass


class DimensionMismatch(ApproxError):
    pass


class DualBoundViolation(ApproxError):
    pass


class WeightMismatch(ApproxError):
    pass


class NonFiniteValue(ApproxError):
    pass


class EmptyOverApprox(ApproxError):
    pass


# Oracles

class OracleError(MsddpError):
    pass


class InfeasibleNode(OracleError):
    pass


class GridTooLarge(OracleError):
    pass


# Instances

class InstanceError(MsddpError):
    pass


class BadParams(InstanceError):
    pass


class BadDepth(InstanceError):
    pass


class CandidateSetTooSparse(InstanceError):
    pass


# Harness

class HarnessError(MsddpError):
    pass


class SchemaError(HarnessError):
    """Instance document does not match the schema; `path` names the field."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


class UnknownCostFamily(HarnessError):
    pass


class VersionMismatch(HarnessError):
    pass


class UnsupportedAlgorithm(HarnessError):
    pass


class BadConfig(MsddpError):
    """Solver configuration violates a precondition."""

"""Exception hierarchy shared by all modules."""


class FundGapError(Exception):
    pass


class PoleError(FundGapError, ValueError):
    """Model tangent evaluated at or beyond its focal distance."""


class DomainError(FundGapError, ValueError):
    pass


class ChartExit(FundGapError):
    pass


class StepError(FundGapError):
    pass


class NoConvergence(FundGapError):
    pass


class AmbiguousGeodesic(FundGapError):
    pass


class ConjugatePoint(FundGapError):
    pass


class SingularBasis(FundGapError):
    pass


class BracketFail(FundGapError):
    pass


class HypothesisFail(FundGapError):
    pass


class MeshFail(FundGapError):
    pass


class SolverFail(FundGapError):
    pass


class DegenerateMesh(FundGapError):
    pass


class BoundaryTooClose(FundGapError):
    pass

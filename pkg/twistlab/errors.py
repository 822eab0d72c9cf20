###############################################################################
### Error Hierarchy
###############################################################################
class TwistlabError(ValueError):
    """Base class for every error raised by twistlab."""


# linalg_paths
class NonCommutingError(TwistlabError):
    pass


class ClusterAmbiguityError(TwistlabError):
    pass


class DimensionTooSmallError(TwistlabError):
    pass


class DimensionTooLargeError(TwistlabError):
    pass


class PathDegenerateError(TwistlabError):
    pass


class GridMismatchError(TwistlabError):
    pass


class NotSymplecticError(TwistlabError):
    pass


# spin_lift
class NotUnitError(TwistlabError):
    pass


class NotSpecialOrthogonalError(TwistlabError):
    pass


class StepTooLargeError(TwistlabError):
    pass


class NotClosedError(TwistlabError):
    pass


# local_flows
class NegativeRadiusError(TwistlabError):
    pass


class LeftDomainError(TwistlabError):
    pass


class IntegratorFailureError(TwistlabError):
    pass


class NotEmbeddingError(TwistlabError):
    pass


# complete_intersections
class PolynomialSyntaxError(TwistlabError):
    def __init__(self, message, position):
        super().__init__(f"{message} at position {position}")
        self.message = message
        self.position = position


class NotHomogeneousError(TwistlabError):
    def __init__(self, message, term=None):
        super().__init__(message)
        self.term = term


class ZeroPolynomialError(TwistlabError):
    pass


class BadDegreesError(TwistlabError):
    pass


class SingularChartBlockError(TwistlabError):
    pass


class NewtonDivergenceError(TwistlabError):
    pass


class NoConvergentSamplesError(TwistlabError):
    pass


class BadShapeError(TwistlabError):
    pass


class UnknownFamilyError(TwistlabError):
    pass


# pipeline / cli
class ConfigError(TwistlabError):
    pass

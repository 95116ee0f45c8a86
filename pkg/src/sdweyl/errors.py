"""Exception types raised by the verification engine."""


class SdweylError(Exception):
    """Base class for all engine errors."""


class PointOutsideChart(SdweylError):
    """A sample point violates the chart's declared validity domain."""


class UnsupportedOrder(SdweylError):
    """A jet order above the supported cap was requested."""


class NonPositiveConformalFactor(SdweylError):
    """A conformal factor is not strictly positive on the chart domain."""


class InsufficientJetOrder(SdweylError):
    """The supplied metric jet is too shallow for the requested curvature depth."""


class DegenerateMetric(SdweylError):
    """The metric is numerically singular or indefinite at a sample point."""


class DegenerateEigenvalue(SdweylError):
    """The top self-dual Weyl eigenvalue is not simple within tolerance."""


class ZeroLambda3(SdweylError):
    """The top self-dual Weyl eigenvalue vanishes where a nonzero value is required."""


class StencilOutsideChart(SdweylError):
    """A finite-difference stencil leg leaves the chart validity domain."""


class StencilOutsideValidity(SdweylError):
    """A curve-parameter stencil leg leaves the declared family validity range."""


class HypothesisViolated(SdweylError):
    """A curve fails the Einstein-deformation hypothesis needed by a check."""


class ConfigParseError(SdweylError):
    """A run configuration file or flag set cannot be parsed."""

"""Exception types shared across the package."""


class FarField2dError(Exception):
    """Base class for errors raised by this package."""


class ExpressionSyntaxError(FarField2dError, ValueError):
    """Malformed expression text.  Carries the offending position."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class UnknownIdentifierError(ExpressionSyntaxError):
    """Identifier other than xi1, xi2, kappa or i."""


class DegenerateGradientError(FarField2dError, ValueError):
    """Gradient of a defining function vanishes on its zero curve."""


class AmbiguousBridgeError(FarField2dError, ValueError):
    """The regularising derivative gives no indentation rule."""


class TangentDirectionError(FarField2dError, ValueError):
    """A probe direction is tangent to the singular curve."""


class BoundaryDirectionError(FarField2dError, ValueError):
    """Observation direction sits on an activity boundary."""


class DegenerateSaddleError(FarField2dError, ValueError):
    """Curvature coefficient vanishes; no quadratic local model."""


class NonSingularExponentError(FarField2dError, ValueError):
    """Exponent is a non-positive integer: the factor is not singular
    there, so the point does not contribute."""


class UnsupportedConfigurationError(FarField2dError, ValueError):
    """Geometric configuration the closed forms do not cover
    (tangential-touch contribution, coincident special points, ...)."""


class PatchConstructionError(FarField2dError, RuntimeError):
    """A local surface patch could not be built."""


class SurfaceVerificationError(FarField2dError, RuntimeError):
    """A deformation field failed verification."""


class CutProximityError(FarField2dError, ValueError):
    """A factor was evaluated on (or too close to) its branch cut."""

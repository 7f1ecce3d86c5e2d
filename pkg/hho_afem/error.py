from typing import Optional


class HHOError(Exception):
    def __init__(self, message: str = "", details: Optional[dict] = None):
        super(HHOError, self).__init__(message)

        self._message = message
        self.details = details or {}

    def __str__(self):
        msg = self._message or "<empty message>"
        return msg

    def __repr__(self):
        return (
            f"{self.__class__.__name__}(message={self._message}, "
            f"details={self.details})"
        )


# -- MESH ERRORS --


class MeshError(HHOError):
    pass


class NonConformingMeshError(MeshError):
    """Hanging vertex, over-shared side or inconsistent boundary markers."""

    pass


class DegenerateElementError(MeshError):
    """Triangle with zero area."""

    pass


class OrientationError(MeshError):
    """Triangle with clockwise vertex order."""

    pass


class MeshMismatchError(MeshError):
    """Mesh pair that is not related by refinement."""

    pass


# -- NUMERICAL ERRORS --


class QuadratureError(HHOError):
    """Requested exactness degree is not supported."""

    pass


class ConvergenceError(HHOError):
    def __init__(
        self,
        message: str = "",
        details: Optional[dict] = None,
        best_value=None,
        iterations: Optional[int] = None,
    ):
        super().__init__(message=message, details=details)

        self.best_value = best_value
        self.iterations = iterations


class ConfigurationError(HHOError):
    """Missing or invalid run configuration."""

    pass


# -- SDK ERRORS --


class ValidationError(Exception):
    pass

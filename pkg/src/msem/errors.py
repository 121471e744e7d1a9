"""Exception types raised across the package."""


class MsemError(Exception):
    """Base class for all package errors."""


class InvalidOrderError(MsemError, ValueError):
    pass


class InvalidMeshError(MsemError, ValueError):
    pass


class DegenerateGeometryError(MsemError, ValueError):
    """A chart has a non-positive Jacobian determinant."""


class DataEvaluationError(MsemError, ValueError):
    """A user-supplied field returned non-finite values."""


class TopDegreeError(MsemError, ValueError):
    pass


class ConfigurationError(MsemError, ValueError):
    """Boundary-condition or problem setup is inconsistent."""


class IllPosedError(MsemError, RuntimeError):
    """The assembled system is singular; ``nullspace`` names the likely cause."""

    def __init__(self, message: str, nullspace: str | None = None) -> None:
        super().__init__(message)
        self.nullspace = nullspace

"""Exception types raised across the package."""


class SqFitError(Exception):
    """Base class for all package errors."""


class DegeneratePoint(SqFitError):
    """A point coincides with the superquadric center."""


class NonPositiveDepth(SqFitError):
    pass


class BehindCamera(SqFitError):
    """A point lies on or behind the image plane of a camera."""


class InsufficientViews(SqFitError):
    pass


class DegenerateGeometry(SqFitError):
    """Triangulation rays are (nearly) parallel."""


class DegenerateInput(SqFitError):
    """Point set is collinear or otherwise spans no area."""


class DegenerateCloud(SqFitError):
    """Back-projected point cloud has rank < 3."""


class NonFiniteResidual(SqFitError):
    pass


class SingularNormalMatrix(SqFitError):
    pass


class ExhaustedRejection(SqFitError):
    """Scene generation gave up after too many rejected draws."""


class EmptyInput(SqFitError):
    pass


class UnknownStage(SqFitError):
    def __init__(self, token: str):
        super().__init__(token)
        self.token = token


class SceneParseError(SqFitError):
    pass

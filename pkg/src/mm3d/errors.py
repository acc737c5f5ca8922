"""Exception hierarchy shared by all mm3d modules."""


class MM3DError(Exception):
    """Base class for every error raised by this package."""


class GeometryError(MM3DError, ValueError):
    """Invalid camera, transform or box geometry."""


class BehindCamera(GeometryError):
    pass


class FrameMismatch(GeometryError):
    pass


class SchemaError(MM3DError, ValueError):
    """A scene or prediction document is missing or mistypes a field."""

    def __init__(self, path: str, reason: str):
        super().__init__(f"{path}: {reason}")
        self.path = path
        self.reason = reason


class EmptySource(MM3DError, ValueError):
    pass


class InvalidSpec(MM3DError, ValueError):
    pass


class InvalidFactor(MM3DError, ValueError):
    pass


class InvalidShape(MM3DError, ValueError):
    pass


class ShapeMismatch(MM3DError, ValueError):
    pass


class EmptyGroundTruth(MM3DError, ValueError):
    pass


class UnknownSample(MM3DError, KeyError):
    """A prediction references a sample id absent from the ground truth."""

    def __str__(self) -> str:
        return Exception.__str__(self)


class NoGroundTruth(MM3DError, ValueError):
    """AP is undefined for a class without ground-truth boxes."""

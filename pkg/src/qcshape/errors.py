class QCShapeError(Exception):
    """Base class for library errors."""


class MeshError(QCShapeError, ValueError):
    """Malformed mesh, landmark, or manifest input."""


class TopologyError(MeshError):
    """Non-manifold or wrong-topology mesh."""


class NumericalError(QCShapeError, RuntimeError):
    """A numerical step failed (singular system, collapse, empty overlap)."""

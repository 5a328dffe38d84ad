"""Exception types shared across the package.

Every error carries a stable ``code`` string so the CLI can emit
machine-readable diagnostics without string matching on messages.
"""


class DiffeoflowError(Exception):
    code = "Error"


class MeshError(DiffeoflowError, ValueError):
    code = "MeshError"


class IndexOutOfRange(MeshError):
    code = "IndexOutOfRange"


class DegenerateFace(MeshError):
    code = "DegenerateFace"


class NonManifoldEdge(MeshError):
    code = "NonManifoldEdge"


class NonManifoldOrientation(MeshError):
    code = "NonManifoldOrientation"


class NotClosed(MeshError):
    code = "NotClosed"


class EmptyMesh(MeshError):
    code = "EmptyMesh"


class ConnectivityMismatch(MeshError):
    code = "ConnectivityMismatch"


class GridError(DiffeoflowError, ValueError):
    code = "GridError"


class UnknownKind(DiffeoflowError, ValueError):
    code = "UnknownKind"


class NonFiniteInput(DiffeoflowError, ValueError):
    code = "NonFiniteInput"


class OracleUnavailable(DiffeoflowError, ValueError):
    code = "OracleUnavailable"


class FrameMismatch(DiffeoflowError, ValueError):
    code = "FrameMismatch"


class SpecMismatch(DiffeoflowError, ValueError):
    code = "SpecMismatch"


class MeshOutsideGrid(DiffeoflowError, ValueError):
    code = "MeshOutsideGrid"


class EmptyInput(DiffeoflowError, ValueError):
    code = "EmptyInput"


class DegenerateExtent(DiffeoflowError, ValueError):
    code = "DegenerateExtent"


class IsoOutOfRange(DiffeoflowError, ValueError):
    code = "IsoOutOfRange"


class TopologyFailure(DiffeoflowError):
    code = "TopologyFailure"


class ContainmentFailure(DiffeoflowError):
    code = "ContainmentFailure"


class EmptyCloud(DiffeoflowError, ValueError):
    code = "EmptyCloud"


class NonUnitNormal(DiffeoflowError, ValueError):
    code = "NonUnitNormal"


class EmptyTarget(DiffeoflowError, ValueError):
    code = "EmptyTarget"


class MissingForwardTape(DiffeoflowError, ValueError):
    code = "MissingForwardTape"


class DivergenceDetected(DiffeoflowError):
    code = "DivergenceDetected"

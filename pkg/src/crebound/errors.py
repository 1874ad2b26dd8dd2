"""Exception hierarchy.

Every error raised by the toolkit derives from :class:`CREError`, so callers
(notably the CLI driver) can attribute failures to a stage without catching
unrelated bugs.
"""


class CREError(Exception):
    """Base class for all toolkit errors."""


# mesh topology
class MeshError(CREError):
    pass


class NonManifoldEdge(MeshError):
    pass


class UntaggedBorderEdge(MeshError):
    pass


class DisconnectedMesh(MeshError):
    pass


class ElementWithTwoBorderEdges(MeshError):
    pass


class DegenerateEdge(MeshError):
    pass


class DegenerateTriangle(MeshError):
    pass


class HoleLoopNotFound(MeshError):
    pass


# finite element solve
class SingularSystem(CREError):
    pass


class NegativeRadicand(CREError):
    pass


# prolongation system
class AlphaNotPartition(CREError):
    pass


class RankDeficiencyUnexpected(CREError):
    pass


class InconsistentRHS(CREError):
    pass


# kernel optimisation
class IndefiniteNormMatrix(CREError):
    pass


class SingularReducedSystem(CREError):
    pass


# element recovery
class InconsistentWorks(CREError):
    pass


class UnbalancedElement(CREError):
    pass


# classical EET
class InconsistentPatch(CREError):
    pass

"""Guaranteed energy-norm error bounds for plane-stress P1 finite elements.

Equilibrated element stresses are rebuilt from edge works obtained either by a
single global sparse system (with a choice of criteria closing its kernel) or
by the classical vertex-patch equilibration.
"""

from .errors import CREError
from .fem import LoadCase, Material, solve
from .mesh import Mesh, build_mesh, read_mesh, write_mesh
from .pipeline import RunConfig, run
from .problems import make_problem

__all__ = [
    "CREError",
    "LoadCase",
    "Material",
    "Mesh",
    "RunConfig",
    "build_mesh",
    "make_problem",
    "read_mesh",
    "run",
    "solve",
    "write_mesh",
]
__version__ = "0.1.0"

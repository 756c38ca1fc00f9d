"""Numerical laboratory for Brownian motion, Green functions and
thermodynamic formalism on universal covers of finite metric graphs."""

from __future__ import annotations

from .errors import NumericalError, TreelabError, ValidationError
from .graph_core import (
    BoundaryRay,
    QuotientGraph,
    TreePoint,
    TreeVertex,
    load_quotient_graph,
    reference_graph,
    tree_distance,
)
from .resolvent import WeylTable, green, hitting_transform, lambda0_resolvent, solve_weyl

__version__ = "0.1.0"

__all__ = [
    "BoundaryRay",
    "NumericalError",
    "QuotientGraph",
    "TreePoint",
    "TreeVertex",
    "TreelabError",
    "ValidationError",
    "WeylTable",
    "green",
    "hitting_transform",
    "lambda0_resolvent",
    "load_quotient_graph",
    "reference_graph",
    "solve_weyl",
    "tree_distance",
]

"""Strip geometry: potentials, Galerkin reduction and gluing."""

from .assembly import (
    block_coefficient,
    build_assembly,
    owner_of,
    sample_glued_potential,
    seam_jumps,
)
from .potentials import (
    ExpressionPotential,
    TablePotential,
    constant_potential,
    galerkin_project,
    parse_expression,
)

__all__ = [
    "ExpressionPotential",
    "TablePotential",
    "block_coefficient",
    "build_assembly",
    "constant_potential",
    "galerkin_project",
    "owner_of",
    "parse_expression",
    "sample_glued_potential",
    "seam_jumps",
]

"""Spectral data of periodic backgrounds and single-perturbation blocks."""

from .bound_states import (
    BlockMatcher,
    DecayingFrame,
    check_window,
    decaying_frame,
    discrete_eigenvalues,
    matching_determinant,
    select_lambda0,
    tail_coefficients,
    truncated_dense_eigenvalues,
)
from .floquet import (
    band_derivative,
    band_structure,
    cell_hamiltonian,
    cell_spectrum,
    classify_directions,
    essential_spectrum_edges,
    locate_energy,
    quasimomentum_continue,
    zone_width,
)
from .pencil import (
    chain_residual,
    conjugacy_defect,
    decay_scale,
    exponents_from_monodromy,
    floquet_exponents,
    floquet_states,
    level_exponents,
    reciprocity_defect,
    rescale_chain,
    shift_coefficients,
)
from .propagation import CellPropagator, CorePropagator, monodromy, segment_propagator

__all__ = [
    "BlockMatcher",
    "CellPropagator",
    "CorePropagator",
    "DecayingFrame",
    "band_derivative",
    "band_structure",
    "cell_hamiltonian",
    "cell_spectrum",
    "chain_residual",
    "check_window",
    "classify_directions",
    "conjugacy_defect",
    "decay_scale",
    "decaying_frame",
    "discrete_eigenvalues",
    "essential_spectrum_edges",
    "exponents_from_monodromy",
    "floquet_exponents",
    "floquet_states",
    "level_exponents",
    "locate_energy",
    "matching_determinant",
    "monodromy",
    "quasimomentum_continue",
    "reciprocity_defect",
    "rescale_chain",
    "segment_propagator",
    "select_lambda0",
    "shift_coefficients",
    "tail_coefficients",
    "truncated_dense_eigenvalues",
    "zone_width",
]

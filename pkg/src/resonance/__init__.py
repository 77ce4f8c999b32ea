"""Interaction matrices, predicted resonances and the direct resonance solver."""

from .analysis import predicted_resonances, prediction_report, rate_fit, residual_ratios
from .direct import ScatteringSolver, argument_principle, locate_resonances
from .interaction import (
    assemble_interaction,
    collect_tails,
    coupling_pairing,
    coupling_table,
    eigen_clusters,
    gauge_check,
    interaction_scales,
    shift_polynomial,
    translate_spread,
)

__all__ = [
    "ScatteringSolver",
    "argument_principle",
    "assemble_interaction",
    "collect_tails",
    "coupling_pairing",
    "coupling_table",
    "eigen_clusters",
    "gauge_check",
    "interaction_scales",
    "locate_resonances",
    "predicted_resonances",
    "prediction_report",
    "rate_fit",
    "residual_ratios",
    "shift_polynomial",
    "translate_spread",
]

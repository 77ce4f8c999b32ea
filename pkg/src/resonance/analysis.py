"""Predicted resonances, prediction residuals and exponential rate fits."""

import logging
from typing import Sequence

import numpy as np

from ..errors import InsufficientData
from ..models import InteractionMatrix, Prediction, RateFit, ResonanceResult

logger = logging.getLogger(__name__)


def predicted_resonances(interaction: InteractionMatrix) -> list[Prediction]:
    """lambda0 + Lambda_j with cluster labels and the remainder scale as error bar."""
    error_bar = interaction.scales.remainder(interaction.size)
    label = {j: c for c, members in enumerate(interaction.clusters) for j in members}
    return [
        Prediction(value=interaction.lambda0 + value, cluster=label[j], error_bar=error_bar)
        for j, value in enumerate(interaction.eigenvalues)
    ]


def prediction_report(
    result: ResonanceResult, predictions: Sequence[Prediction], lambda0: float
) -> ResonanceResult:
    """Attach predictions and per-root residuals min_j |lambda - lambda0 - Lambda_j|."""
    result.predicted = list(predictions)
    result.residuals = []
    for root in result.located:
        if predictions:
            residual = min(abs(root.value - p.value) for p in predictions)
        else:
            residual = abs(root.value - lambda0)
        result.residuals.append(float(residual))
    return result


def residual_ratios(
    result: ResonanceResult, predictions: Sequence[Prediction], lambda0: float
) -> list[float]:
    """|lambda - lambda0 - Lambda| / |Lambda| for each root against its nearest prediction."""
    ratios = []
    for root in result.located:
        nearest = min(predictions, key=lambda p: abs(root.value - p.value))
        shift = abs(nearest.value - lambda0)
        ratios.append(abs(root.value - nearest.value) / shift if shift > 0 else np.inf)
    return ratios


def rate_fit(
    shortest: Sequence[float], longest: Sequence[float], deviations: Sequence[float]
) -> RateFit:
    """Least-squares fit of log|lambda - lambda0| = c + slope <l> + exponent log||l||."""
    shortest = np.asarray(shortest, dtype=float)
    longest = np.asarray(longest, dtype=float)
    deviations = np.abs(np.asarray(deviations, dtype=complex))
    if shortest.size < 3:
        raise InsufficientData(f"a rate fit needs at least 3 spacings, got {shortest.size}")
    if np.any(np.diff(shortest) <= 0):
        raise InsufficientData("spacing minima must be strictly increasing for a rate fit")
    if np.any(deviations <= 0) or not np.all(np.isfinite(deviations)):
        raise InsufficientData("rate fit needs finite nonzero deviations")
    logs = np.log(deviations)
    if np.ptp(logs) <= 1e-12 * max(1.0, float(np.max(np.abs(logs)))):
        raise InsufficientData("deviation series is constant; no rate can be fitted")

    design = np.column_stack([np.ones_like(shortest), shortest, np.log(longest)])
    (prefactor, slope, exponent), *_ = np.linalg.lstsq(design, logs, rcond=None)
    logger.info(f"Rate fit: slope={slope:.6g}, exponent={exponent:.4g} over {shortest.size} points")
    return RateFit(
        slope=float(slope),
        exponent=float(exponent),
        prefactor=float(prefactor),
        points=int(shortest.size),
    )

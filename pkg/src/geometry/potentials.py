"""Potential parsing and transverse Galerkin reduction."""

import logging
from typing import Callable

import numpy as np
import sympy as sp
from sympy.parsing.sympy_parser import convert_xor, parse_expr, standard_transformations

from ..errors import ConfigError, QuadratureFailure
from ..models import CrossSection, MatrixPotential

logger = logging.getLogger(__name__)

X1, XP = sp.symbols("x1 xp", real=True)

_TRANSFORMATIONS = standard_transformations + (convert_xor,)

_NAMES = {
    "x1": X1,
    "xp": XP,
    "pi": sp.pi,
    "E": sp.E,
    "sin": sp.sin,
    "cos": sp.cos,
    "tan": sp.tan,
    "exp": sp.exp,
    "sqrt": sp.sqrt,
    "abs": sp.Abs,
    "tanh": sp.tanh,
    "cosh": sp.cosh,
    "sinh": sp.sinh,
    "step": lambda z: sp.Heaviside(z, sp.S.Half),
    "min": sp.Min,
    "max": sp.Max,
}

_ALLOWED_FUNCTIONS = (
    sp.sin,
    sp.cos,
    sp.tan,
    sp.exp,
    sp.Abs,
    sp.tanh,
    sp.cosh,
    sp.sinh,
    sp.Heaviside,
)

GAUSS_NODES = 64

ScalarPotential = Callable[[np.ndarray, np.ndarray], np.ndarray]


def parse_expression(text: str) -> sp.Expr:
    """Parse a potential expression in x1 (longitudinal) and xp (transverse)."""
    try:
        expr = parse_expr(text, local_dict=dict(_NAMES), transformations=_TRANSFORMATIONS)
    except Exception as e:
        raise ConfigError(f"cannot parse potential '{text}': {e}") from e

    if not isinstance(expr, sp.Expr):
        raise ConfigError(f"potential '{text}' is not an arithmetic expression")

    unknown = expr.free_symbols - {X1, XP}
    if unknown:
        names = ", ".join(sorted(str(s) for s in unknown))
        raise ConfigError(f"potential '{text}' uses unknown symbols: {names}")

    for func in expr.atoms(sp.Function):
        if not isinstance(func, _ALLOWED_FUNCTIONS):
            raise ConfigError(f"potential '{text}' uses unsupported function {func.func}")

    return expr


class ExpressionPotential:
    """Scalar potential V(x1, xp) compiled from a sympy expression."""

    def __init__(self, text: str):
        self.text = text
        self.expr = parse_expression(text)
        self._func = sp.lambdify((X1, XP), self.expr, modules="numpy")

    @property
    def depends_on_transverse(self) -> bool:
        return XP in self.expr.free_symbols

    def __call__(self, x1: np.ndarray, xp: np.ndarray) -> np.ndarray:
        x1, xp = np.broadcast_arrays(np.asarray(x1, dtype=float), np.asarray(xp, dtype=float))
        values = np.asarray(self._func(x1, xp), dtype=float)
        return np.broadcast_to(values, x1.shape).copy()


class TablePotential:
    """Scalar potential V(x1) tabulated on nodes, linearly interpolated."""

    depends_on_transverse = False

    def __init__(self, x: list[float], values: list[float], period: float | None = None):
        self.x = np.asarray(x, dtype=float)
        self.values = np.asarray(values, dtype=float)
        self.period = period
        if self.x.shape != self.values.shape or self.x.size < 2:
            raise ConfigError("table potential needs matching x and values with >= 2 entries")
        if np.any(np.diff(self.x) <= 0):
            raise ConfigError("table potential x nodes must be strictly increasing")

    def __call__(self, x1: np.ndarray, xp: np.ndarray) -> np.ndarray:
        x1, _ = np.broadcast_arrays(np.asarray(x1, dtype=float), np.asarray(xp, dtype=float))
        return np.interp(x1, self.x, self.values, period=self.period)


def galerkin_project(
    potential: ScalarPotential, cross_section: CrossSection, nodes: int = GAUSS_NODES
) -> MatrixPotential:
    """Reduce V(x1, xp) to an M x M matrix potential in the Dirichlet sine basis.

    Entry (m, n) is the integral of chi_m V chi_n over the cross-section plus the
    transverse eigenvalue on the diagonal.
    """
    width = cross_section.width
    modes = cross_section.modes
    transverse = np.diag(cross_section.transverse_eigenvalues)

    if not getattr(potential, "depends_on_transverse", True):

        def separable(x1: np.ndarray) -> np.ndarray:
            x1 = np.atleast_1d(np.asarray(x1, dtype=float))
            values = potential(x1, np.zeros_like(x1))
            _check_finite(values)
            return values[:, None, None] * np.eye(modes) + transverse

        return separable

    t, w = np.polynomial.legendre.leggauss(nodes)
    xp = 0.5 * width * (t + 1.0)
    weights = 0.5 * width * w
    j = np.arange(1, modes + 1)
    chi = np.sqrt(2.0 / width) * np.sin(np.outer(j, xp) * np.pi / width)  # (M, Q)

    def projected(x1: np.ndarray) -> np.ndarray:
        x1 = np.atleast_1d(np.asarray(x1, dtype=float))
        values = potential(x1[:, None], xp[None, :])  # (K, Q)
        _check_finite(values)
        matrix = np.einsum("mq,kq,nq->kmn", chi * weights, values, chi)
        matrix = 0.5 * (matrix + np.swapaxes(matrix, 1, 2))
        return matrix + transverse

    return projected


def _check_finite(values: np.ndarray) -> None:
    if not np.all(np.isfinite(values)):
        raise QuadratureFailure("potential produced non-finite values during projection")


def constant_potential(value: float, cross_section: CrossSection) -> MatrixPotential:
    """Matrix potential of a constant scalar V; used for free and flat backgrounds."""
    diagonal = np.diag(value + cross_section.transverse_eigenvalues)

    def flat(x1: np.ndarray) -> np.ndarray:
        x1 = np.atleast_1d(np.asarray(x1, dtype=float))
        return np.broadcast_to(diagonal, (x1.size,) + diagonal.shape).copy()

    return flat

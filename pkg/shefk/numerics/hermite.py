"""
Hermite Module
Probabilists' Hermite polynomials and the orthonormal Hermite functions e_j
(1-based: e_j is the Hermite function of order j - 1)
"""

import logging
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy.integrate import trapezoid

from ..config import QUADRATURE_LOWER, QUADRATURE_STEP, QUADRATURE_UPPER
from ..errors import DomainError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

PI_QUARTER = np.pi ** -0.25


@dataclass(frozen=True)
class HermiteBasisSpec:
    """Truncation level K of the basis e_1..e_K"""
    max_index: int

    def __post_init__(self):
        if int(self.max_index) < 1:
            raise DomainError(f"max_index must be >= 1, got {self.max_index}")


@dataclass(frozen=True)
class QuadratureSpec:
    """Composite trapezoid over [lower, upper] with the given step"""
    lower: float = QUADRATURE_LOWER
    upper: float = QUADRATURE_UPPER
    step: float = QUADRATURE_STEP

    def __post_init__(self):
        if not self.step > 0:
            raise DomainError(f"quadrature step must be positive, got {self.step}")
        if not self.upper > self.lower:
            raise DomainError(f"empty quadrature window [{self.lower}, {self.upper}]")

    def nodes(self) -> np.ndarray:
        """Equispaced nodes covering the window, endpoints included"""
        n = int(round((self.upper - self.lower) / self.step))
        return np.linspace(self.lower, self.upper, max(n, 1) + 1)


def hermite_polynomial_prob(n: int, z: ArrayLike) -> ArrayLike:
    """
    Probabilists' Hermite polynomial He_n(z)

    He_{n+1}(z) = z He_n(z) - n He_{n-1}(z), He_0 = 1, He_1 = z.
    """
    if n < 0:
        raise DomainError(f"Hermite degree must be nonnegative, got {n}")
    z = np.asarray(z, dtype=float)
    previous = np.ones_like(z)
    if n == 0:
        return previous if previous.ndim else float(previous)
    current = z.copy()
    for k in range(1, n):
        previous, current = current, z * current - k * previous
    return current if current.ndim else float(current)


def hermite_functions(count: int, x: ArrayLike) -> np.ndarray:
    """
    Evaluate e_1..e_count at x

    Uses the normalized recurrence
        psi_0 = pi^{-1/4} exp(-x^2/2),
        psi_n = x sqrt(2/n) psi_{n-1} - sqrt((n-1)/n) psi_{n-2},
    which stays bounded by pi^{-1/4}; in the far tail the Gaussian start
    underflows to zero instead of overflowing.

    Returns:
        Array of shape (count,) + shape(x)
    """
    if count < 1:
        raise DomainError(f"need at least one Hermite function, got {count}")
    x = np.asarray(x, dtype=float)
    out = np.empty((count,) + x.shape)
    out[0] = PI_QUARTER * np.exp(-0.5 * x * x)
    if count > 1:
        out[1] = np.sqrt(2.0) * x * out[0]
    for n in range(2, count):
        out[n] = np.sqrt(2.0 / n) * x * out[n - 1] - np.sqrt((n - 1) / n) * out[n - 2]
    return out


def hermite_function(j: int, x: ArrayLike) -> ArrayLike:
    """
    Orthonormal Hermite function e_j(x), j >= 1

    Args:
        j: 1-based index
        x: Evaluation point(s)

    Returns:
        e_j(x) with the shape of x
    """
    if j < 1:
        raise DomainError(f"Hermite function index must be >= 1, got {j}")
    x = np.asarray(x, dtype=float)
    previous = PI_QUARTER * np.exp(-0.5 * x * x)
    if j == 1:
        return previous if previous.ndim else float(previous)
    current = np.sqrt(2.0) * x * previous
    for n in range(2, j):
        previous, current = current, np.sqrt(2.0 / n) * x * current - np.sqrt((n - 1) / n) * previous
    return current if current.ndim else float(current)


def _row_sums(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    return np.sum(values * weights, axis=-1)


def weighted_hermite_sums(count: int, x: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """
    Sums S_j = sum_m weights[m] e_j(x[..., m]) for j = 1..count

    Runs the recurrence once and reduces each order immediately, so memory
    stays O(x.size) for any count. Each row is reduced on its own, so a
    row's sums do not depend on how many rows are passed together.

    Args:
        count: Number of basis functions K
        x: Points, shape (..., M)
        weights: Quadrature weights, shape (M,)

    Returns:
        Array of shape x.shape[:-1] + (count,)
    """
    if count < 1:
        raise DomainError(f"need at least one Hermite function, got {count}")
    x = np.asarray(x, dtype=float)
    sums = np.empty(x.shape[:-1] + (count,))
    previous = PI_QUARTER * np.exp(-0.5 * x * x)
    sums[..., 0] = _row_sums(previous, weights)
    if count == 1:
        return sums
    current = np.sqrt(2.0) * x * previous
    sums[..., 1] = _row_sums(current, weights)
    for n in range(2, count):
        previous, current = current, np.sqrt(2.0 / n) * x * current - np.sqrt((n - 1) / n) * previous
        sums[..., n] = _row_sums(current, weights)
    return sums


def sup_norm(j: int) -> float:
    """
    Upper bound for sup_x |e_j(x)|

    Uses the Cramer-type bound |e_j| <= pi^{-1/4}.
    """
    if j < 1:
        raise DomainError(f"Hermite function index must be >= 1, got {j}")
    return float(PI_QUARTER)


def project_coefficients(f: Callable[[np.ndarray], ArrayLike], spec: HermiteBasisSpec,
                         quadrature: QuadratureSpec = QuadratureSpec()) -> np.ndarray:
    """
    Hermite coefficients <f, e_j>, j = 1..K, by composite trapezoid

    Args:
        f: Real function on the line; called once on the node array when it
           vectorizes, otherwise point by point
        spec: Truncation level K
        quadrature: Window and step

    Returns:
        Vector of K coefficients; sum_j c_j e_j is A_K f
    """
    nodes = quadrature.nodes()
    try:
        values = np.asarray(f(nodes), dtype=float)
        if values.shape != nodes.shape:
            values = np.broadcast_to(values, nodes.shape).astype(float)
    except (TypeError, ValueError):
        values = np.array([float(f(v)) for v in nodes])
    basis = hermite_functions(spec.max_index, nodes)
    coeffs = trapezoid(basis * values, nodes, axis=-1)
    logger.debug(f"Projected onto {spec.max_index} Hermite functions with {nodes.size} nodes")
    return coeffs


def reconstruct(coeffs: np.ndarray, x: ArrayLike) -> ArrayLike:
    """Evaluate sum_j coeffs[j-1] e_j(x)"""
    coeffs = np.asarray(coeffs, dtype=float)
    basis = hermite_functions(coeffs.size, x)
    value = np.tensordot(coeffs, basis, axes=(0, 0))
    return value if np.ndim(value) else float(value)

"""
Brownian Paths Module
Path sampling and per-path functionals: Hermite time integrals c_j, the
occupation-time (local time) histogram and the two estimators of
alpha_t = int L_a(t)^2 da
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..config import DEFAULT_BATCH_SIZE, DEFAULT_BIN_PADDING, DEFAULT_BIN_WIDTH, DEFAULT_DT
from ..errors import DomainError
from ..parallel import concat, map_batches
from ..results import FieldEstimate
from .hermite import weighted_hermite_sums
from .rng import RngStream, StreamRole

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid s_m = m dt on [0, horizon], m = 0..steps"""
    horizon: float
    steps: int

    def __post_init__(self):
        if not self.horizon > 0:
            raise DomainError(f"time horizon must be positive, got {self.horizon}")
        if int(self.steps) < 1:
            raise DomainError(f"need at least one time step, got {self.steps}")

    @classmethod
    def from_dt(cls, horizon: float, dt: float = DEFAULT_DT) -> 'TimeGrid':
        """Grid with step as close to dt as divides the horizon"""
        if not dt > 0:
            raise DomainError(f"time step must be positive, got {dt}")
        return cls(horizon=float(horizon), steps=max(1, int(round(horizon / dt))))

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    def points(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.steps + 1)

    def trapezoid_weights(self) -> np.ndarray:
        """Composite trapezoid weights on the grid"""
        weights = np.full(self.steps + 1, self.dt)
        weights[0] = weights[-1] = 0.5 * self.dt
        return weights


@dataclass(frozen=True)
class BinSpec:
    """
    Occupation histogram bins of width Δa

    The window is fitted to the path range and padded by `padding` bins;
    explicit bounds are widened when the path leaves them. Bin edges always
    lie on the lattice Δa·Z.
    """
    width: float = DEFAULT_BIN_WIDTH
    padding: int = DEFAULT_BIN_PADDING
    lower: Optional[float] = None
    upper: Optional[float] = None

    def __post_init__(self):
        if not self.width > 0:
            raise DomainError(f"bin width must be positive, got {self.width}")

    def window(self, values: np.ndarray) -> Tuple[int, int]:
        """Lattice indices (first, last+1) of the bins covering values"""
        low = float(np.min(values)) if self.lower is None else min(self.lower, float(np.min(values)))
        high = float(np.max(values)) if self.upper is None else max(self.upper, float(np.max(values)))
        first = int(np.floor(low / self.width)) - self.padding
        last = int(np.floor(high / self.width)) + self.padding
        return first, last + 1


@dataclass(frozen=True)
class BrownianPath:
    """A discretized Brownian trajectory started at `start`"""
    start: float
    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (self.grid.steps + 1,):
            raise DomainError(
                f"path has {self.values.shape} values, grid needs {self.grid.steps + 1}"
            )

    @property
    def terminal(self) -> float:
        return float(self.values[-1])


@dataclass(frozen=True)
class LocalTimeHistogram:
    """Occupation density estimate L̂ at bin centers"""
    centers: np.ndarray
    width: float
    values: np.ndarray

    @property
    def mass(self) -> float:
        """Total occupation time sum L̂ Δa"""
        return float(np.sum(self.values) * self.width)

    @property
    def alpha(self) -> float:
        """int L̂^2 da"""
        return float(np.sum(self.values ** 2) * self.width)


@dataclass(frozen=True)
class PathFunctionals:
    """Derived quantities of one path"""
    coeffs: np.ndarray
    local_time: LocalTimeHistogram
    alpha_hist: float
    alpha_parseval: float
    terminal: float


def _increments_to_path(x: float, increments: np.ndarray) -> np.ndarray:
    path = np.empty(increments.shape[:-1] + (increments.shape[-1] + 1,))
    path[..., 0] = 0.0
    np.cumsum(increments, axis=-1, out=path[..., 1:])
    path += x
    return path


def sample_path(x: float, grid: TimeGrid, stream: RngStream) -> BrownianPath:
    """
    Sample a Brownian path on the grid started at x

    Args:
        x: Starting point
        grid: Time grid
        stream: Seeded stream; the path is a function of its key only

    Returns:
        BrownianPath with independent N(0, dt) increments
    """
    increments = np.sqrt(grid.dt) * stream.standard_normal(grid.steps)
    values = _increments_to_path(x, increments)
    values[0] = x
    return BrownianPath(start=float(x), grid=grid, values=values)


def sample_paths(x: float, grid: TimeGrid, seed: int, start: int, stop: int,
                 role: StreamRole = StreamRole.PATHS) -> np.ndarray:
    """
    Paths with indices start..stop-1 as rows; row i equals
    sample_path(x, grid, RngStream(seed, role, i)).values
    """
    rows = np.empty((stop - start, grid.steps + 1))
    scale = np.sqrt(grid.dt)
    for row, index in enumerate(range(start, stop)):
        increments = scale * RngStream(seed, role, index).standard_normal(grid.steps)
        rows[row] = _increments_to_path(x, increments)
        rows[row, 0] = x
    return rows


def frozen_path(x: float, grid: TimeGrid) -> BrownianPath:
    """Degenerate path B ≡ x (test fixture only)"""
    return BrownianPath(start=float(x), grid=grid, values=np.full(grid.steps + 1, float(x)))


def basis_time_integrals(path: BrownianPath, K: int) -> np.ndarray:
    """
    c_j = int_0^t e_j(B_s) ds, j = 1..K, by composite trapezoid on the grid
    """
    if K < 1:
        raise DomainError(f"K must be >= 1, got {K}")
    return weighted_hermite_sums(K, path.values, path.grid.trapezoid_weights())


def batch_time_integrals(values: np.ndarray, grid: TimeGrid, K: int) -> np.ndarray:
    """c_j for a batch of paths (rows); shape (n_paths, K)"""
    if K < 1:
        raise DomainError(f"K must be >= 1, got {K}")
    return weighted_hermite_sums(K, values, grid.trapezoid_weights())


def local_time_histogram(path: BrownianPath, bins: BinSpec = BinSpec()) -> LocalTimeHistogram:
    """
    Occupation-time histogram L̂_a = (time spent in bin a) / Δa

    Left-endpoint rule: samples s_0..s_{M-1} each contribute dt to the bin
    holding B_{s_m}, so the total mass is exactly M·dt = t.
    """
    samples = path.values[:-1]
    first, stop = bins.window(path.values)
    index = np.floor(samples / bins.width).astype(np.int64) - first
    occupation = np.bincount(index, minlength=stop - first) * path.grid.dt
    centers = (np.arange(first, stop) + 0.5) * bins.width
    return LocalTimeHistogram(centers=centers, width=bins.width, values=occupation / bins.width)


def batch_alpha_hist(values: np.ndarray, grid: TimeGrid, bins: BinSpec = BinSpec()) -> np.ndarray:
    """Histogram estimator of alpha_t for each row of a path batch"""
    out = np.empty(values.shape[0])
    for row in range(values.shape[0]):
        cells = np.floor(values[row, :-1] / bins.width).astype(np.int64)
        counts = np.bincount(cells - cells.min())
        occupation = counts * grid.dt
        out[row] = float(np.sum(occupation ** 2) / bins.width)
    return out


def alpha(path: BrownianPath, K: int, bins: BinSpec = BinSpec()) -> Tuple[float, float]:
    """
    Both estimators of alpha_t

    Returns:
        (alpha_parseval, alpha_hist) with alpha_parseval = sum_{j<=K} c_j^2
        and alpha_hist = sum_i L̂_i^2 Δa
    """
    coeffs = basis_time_integrals(path, K)
    return float(np.sum(coeffs ** 2)), local_time_histogram(path, bins).alpha


def path_functionals(path: BrownianPath, K: int, bins: BinSpec = BinSpec()) -> PathFunctionals:
    """All per-path functionals in one record"""
    coeffs = basis_time_integrals(path, K)
    histogram = local_time_histogram(path, bins)
    return PathFunctionals(
        coeffs=coeffs,
        local_time=histogram,
        alpha_hist=histogram.alpha,
        alpha_parseval=float(np.sum(coeffs ** 2)),
        terminal=path.terminal,
    )


def parseval_gaps(path: BrownianPath, K_list, bins: BinSpec = BinSpec()) -> np.ndarray:
    """|sum_{j<=K} c_j^2 - alpha_hist| / alpha_hist for every K in K_list"""
    K_list = sorted(int(k) for k in K_list)
    coeffs = basis_time_integrals(path, K_list[-1])
    partial = np.cumsum(coeffs ** 2)
    reference = local_time_histogram(path, bins).alpha
    return np.array([abs(partial[k - 1] - reference) / reference for k in K_list])


def alpha_exponential_moment(lam: float, x: float, grid: TimeGrid, n_paths: int,
                             bins: BinSpec = BinSpec(), seed: int = 0) -> FieldEstimate:
    """
    Empirical E^B[exp(lam · alpha_t)] with the histogram estimator of alpha_t
    """
    values = sample_paths(x, grid, seed, 0, n_paths)
    alphas = batch_alpha_hist(values, grid, bins)
    logger.info(f"Exponential moment of alpha_t at lam={lam} from {n_paths} paths")
    return FieldEstimate.from_samples(np.exp(lam * alphas))


def simulate_functionals(x: float, grid: TimeGrid, K: int, n_paths: int, seed: int,
                         bins: Optional[BinSpec] = None, first_index: int = 0,
                         threads: Optional[int] = None,
                         batch_size: int = DEFAULT_BATCH_SIZE) -> Tuple[np.ndarray, Optional[np.ndarray], np.ndarray]:
    """
    Per-path functionals for paths first_index..first_index+n_paths-1

    Batches run on the worker pool; each path is keyed by its own index, so
    the result does not depend on threads or batch_size.

    Args:
        x: Starting point
        grid: Time grid
        K: Number of basis time integrals
        n_paths: Number of paths
        seed: Global seed
        bins: Histogram bins; alpha_hist is skipped when None
        first_index: Index of the first path
        threads: Worker count
        batch_size: Paths per batch

    Returns:
        (coeffs (n_paths, K), alpha_hist (n_paths,) or None, terminal (n_paths,))
    """
    if n_paths < 1:
        raise DomainError(f"need at least one path, got {n_paths}")

    def work(start: int, stop: int):
        values = sample_paths(x, grid, seed, first_index + start, first_index + stop)
        coeffs = batch_time_integrals(values, grid, K)
        alphas = batch_alpha_hist(values, grid, bins) if bins is not None else None
        return coeffs, alphas, values[:, -1].copy()

    logger.info(f"Simulating {n_paths} paths ({grid.steps} steps, K={K}) from x={x}")
    parts = map_batches(work, n_paths, batch_size, threads)
    coeffs = concat([p[0] for p in parts])
    alphas = concat([p[1] for p in parts]) if bins is not None else None
    terminal = concat([p[2] for p in parts])
    return coeffs, alphas, terminal


def parseval_study(x: float, grid: TimeGrid, K_list, n_paths: int, seed: int,
                   bins: BinSpec = BinSpec(), threads: Optional[int] = None,
                   batch_size: int = DEFAULT_BATCH_SIZE) -> Tuple[np.ndarray, np.ndarray]:
    """
    parseval_gaps for paths 0..n_paths-1 on the worker pool

    Returns:
        (gaps of shape (n_paths, len(K_list)), alpha_hist of shape (n_paths,))
    """
    K_list = sorted(int(k) for k in K_list)
    if not K_list or K_list[0] < 1:
        raise DomainError(f"K list must hold positive integers, got {K_list}")

    def work(start: int, stop: int):
        values = sample_paths(x, grid, seed, start, stop)
        partial = np.cumsum(batch_time_integrals(values, grid, K_list[-1]) ** 2, axis=1)
        reference = batch_alpha_hist(values, grid, bins)
        gaps = np.abs(partial[:, [k - 1 for k in K_list]] - reference[:, None]) / reference[:, None]
        return gaps, reference

    logger.info(f"Parseval study over K={K_list} with {n_paths} paths")
    parts = map_batches(work, n_paths, batch_size, threads)
    return concat([p[0] for p in parts]), concat([p[1] for p in parts])

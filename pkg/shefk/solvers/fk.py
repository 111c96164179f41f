"""
Feynman-Kac Solvers
Monte Carlo solvers for u^K_{t,x} = E^B[u0(B_t^x) exp(Psi^K)] and its
local-time limit, the moment formula, the S-transform mild-equation
residual and convergence in the truncation level K
"""

import logging
from dataclasses import asdict, dataclass, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats
from scipy.integrate import cumulative_trapezoid, simpson, trapezoid
from scipy.interpolate import CubicSpline

from ..config import (
    DEFAULT_BATCH_SIZE,
    DEFAULT_BIN_WIDTH,
    DEFAULT_DEGREE,
    DEFAULT_DT,
    DEFAULT_K,
    DEFAULT_PATHS,
    DEFAULT_SAMPLES,
    DEFAULT_SEED,
    DEFAULT_T,
    DEFAULT_X,
    GAUSS_NODES,
    STANDARD_ERRORS,
    STRANSFORM_SPACE_MAX,
    STRANSFORM_SPACE_NODES,
    STRANSFORM_TIME_NODES,
)
from ..errors import ConfigurationError, DomainError
from ..numerics.hermite import hermite_functions
from ..numerics.kernels import (
    as_initial_condition,
    coefficients_from_functionals,
    gauss_hermite_rule,
    heat_semigroup,
)
from ..numerics.paths import BinSpec, BrownianPath, TimeGrid, basis_time_integrals, sample_paths, simulate_functionals
from ..numerics.rng import RngStream, StreamRole
from ..numerics.wick import NoiseRealization, chaos_eval_many, sample_noise
from ..parallel import concat, map_batches
from ..results import FieldEstimate, combined_se

logger = logging.getLogger(__name__)

NoiseLike = Union[NoiseRealization, Sequence[float], np.ndarray]

# Minimum W-side draws for the conditional-law check
MIN_LAW_DRAWS = 10_000
NOISE_BATCH = 64
# Stream index of the median-gap bootstrap (role RESAMPLE)
BOOTSTRAP_STREAM = 1 << 20


@dataclass(frozen=True)
class SolverConfig:
    """
    One Feynman-Kac evaluation point and its Monte Carlo sizes

    Attributes:
        t: Time horizon (t = 0 returns u0(x) without sampling)
        x: Space point
        K: Truncation level of the noise
        n_paths: Brownian (B-side) sample size
        n_noise: W-side sample size
        dt: Path time step
        bin_width: Local-time histogram bin width
        degree: Chaos degree bound N
        seed: Global 64-bit seed
        u0: Initial condition (registry name or InitialCondition)
        threads: Worker count (None: available parallelism)
        batch_size: Paths per worker batch
    """
    t: float = DEFAULT_T
    x: float = DEFAULT_X
    K: int = DEFAULT_K
    n_paths: int = DEFAULT_PATHS
    n_noise: int = DEFAULT_SAMPLES
    dt: float = DEFAULT_DT
    bin_width: float = DEFAULT_BIN_WIDTH
    degree: int = DEFAULT_DEGREE
    seed: int = DEFAULT_SEED
    u0: Any = 'one'
    threads: Optional[int] = None
    batch_size: int = DEFAULT_BATCH_SIZE

    def __post_init__(self):
        object.__setattr__(self, 'u0', as_initial_condition(self.u0))
        problems = []
        if not self.t >= 0:
            problems.append(f"t must be >= 0 (got {self.t})")
        if self.K < 1:
            problems.append(f"K must be >= 1 (got {self.K})")
        if self.n_paths < 1:
            problems.append(f"n_paths must be >= 1 (got {self.n_paths})")
        if self.n_noise < 1:
            problems.append(f"n_noise must be >= 1 (got {self.n_noise})")
        if not self.dt > 0:
            problems.append(f"dt must be positive (got {self.dt})")
        if not self.bin_width > 0:
            problems.append(f"bin_width must be positive (got {self.bin_width})")
        if self.degree < 0:
            problems.append(f"degree must be >= 0 (got {self.degree})")
        if problems:
            raise ConfigurationError("Invalid solver configuration: " + "; ".join(problems))

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid.from_dt(self.t, self.dt)

    @property
    def bins(self) -> BinSpec:
        return BinSpec(width=self.bin_width)

    def replace(self, **changes) -> 'SolverConfig':
        return replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        """Serializable view; threads do not change results, batch_size is kept"""
        data = {k: v for k, v in asdict(self).items() if k not in ('u0', 'threads')}
        data['u0'] = self.u0.describe()
        return data


@dataclass
class PathEnsemble:
    """
    Functionals of one set of Brownian paths, shared by every solver call
    on a configuration (common random numbers)

    Attributes:
        coeffs: c_j per path, shape (n_paths, K)
        alpha_hist: Histogram alpha_t per path (None when not computed)
        terminal: B_t^x per path
        weights: u0(B_t^x) per path
    """
    coeffs: np.ndarray
    alpha_hist: Optional[np.ndarray]
    terminal: np.ndarray
    weights: np.ndarray

    @property
    def n_paths(self) -> int:
        return int(self.coeffs.shape[0])

    @property
    def K(self) -> int:
        return int(self.coeffs.shape[1])

    def truncated(self, K: int) -> np.ndarray:
        if K > self.K:
            raise DomainError(f"ensemble holds K={self.K} integrals, {K} requested")
        return self.coeffs[:, :K]

    def sigma2(self, K: int) -> np.ndarray:
        """sum_{j<=K} c_j^2 per path"""
        c = self.truncated(K)
        return np.einsum('ij,ij->i', c, c)


def build_ensemble(cfg: SolverConfig, K: Optional[int] = None, n_paths: Optional[int] = None,
                   first_index: int = 0, with_alpha: bool = True) -> PathEnsemble:
    """
    Simulate the shared path functionals for cfg

    Args:
        cfg: Solver configuration
        K: Number of time integrals (default cfg.K)
        n_paths: Number of paths (default cfg.n_paths)
        first_index: Index of the first path stream
        with_alpha: Also compute the histogram alpha_t
    """
    if cfg.t == 0:
        raise DomainError("no paths are needed at t = 0")
    K = K or cfg.K
    n_paths = n_paths or cfg.n_paths
    coeffs, alphas, terminal = simulate_functionals(
        cfg.x, cfg.grid, K, n_paths, cfg.seed,
        bins=cfg.bins if with_alpha else None, first_index=first_index,
        threads=cfg.threads, batch_size=cfg.batch_size,
    )
    return PathEnsemble(coeffs=coeffs, alpha_hist=alphas, terminal=terminal, weights=cfg.u0(terminal))


def _noise_vector(z: NoiseLike, K: int) -> np.ndarray:
    values = z.z if isinstance(z, NoiseRealization) else np.atleast_1d(np.asarray(z, dtype=float))
    if values.size != K:
        raise DomainError(f"noise realization has length {values.size}, K={K}")
    return values


def noise_matrix(K: int, seed: int, n: int, first: int = 0) -> np.ndarray:
    """Rows are sample_noise(K, seed, index) for index = first..first+n-1"""
    return np.vstack([sample_noise(K, seed, first + i).z for i in range(n)])


@dataclass
class PsiSample:
    """
    Psi functionals per path at one noise realization

    Attributes:
        psi_k: sum_{j<=K} z_j c_j - sigma2 / 2
        psi_limit: sum_{j<=K} z_j c_j - alpha_hist / 2
        sigma2: sum_{j<=K} c_j^2
    """
    psi_k: np.ndarray
    psi_limit: Optional[np.ndarray]
    sigma2: np.ndarray

    @property
    def linear(self) -> np.ndarray:
        return self.psi_k + 0.5 * self.sigma2


def psi_samples(ensemble: PathEnsemble, z: NoiseLike, K: Optional[int] = None) -> PsiSample:
    """Evaluate Psi^K and the limit-drift Psi on every path of the ensemble"""
    K = K or ensemble.K
    z = _noise_vector(z, K)
    linear = ensemble.truncated(K) @ z
    sigma2 = ensemble.sigma2(K)
    limit = None if ensemble.alpha_hist is None else linear - 0.5 * ensemble.alpha_hist
    return PsiSample(psi_k=linear - 0.5 * sigma2, psi_limit=limit, sigma2=sigma2)


def _ensemble_for(cfg: SolverConfig, ensemble: Optional[PathEnsemble], with_alpha: bool = False) -> PathEnsemble:
    if ensemble is not None:
        if with_alpha and ensemble.alpha_hist is None:
            raise DomainError("the limit solver needs an ensemble with alpha_hist")
        return ensemble
    return build_ensemble(cfg, with_alpha=with_alpha)


def solve_fk_truncated(cfg: SolverConfig, z: NoiseLike,
                       ensemble: Optional[PathEnsemble] = None) -> FieldEstimate:
    """
    u^K_{t,x} = E^B[u0(B_t^x) exp(Psi^K)] at a fixed noise realization

    Args:
        cfg: Solver configuration
        z: (Z_1..Z_K); its length must equal cfg.K
        ensemble: Shared paths (built from cfg when omitted)

    Returns:
        FieldEstimate over the Brownian paths
    """
    if cfg.t == 0:
        return FieldEstimate.exact(float(cfg.u0(np.array(cfg.x))))
    _noise_vector(z, cfg.K)
    ensemble = _ensemble_for(cfg, ensemble)
    psi = psi_samples(ensemble, z, cfg.K)
    return FieldEstimate.from_samples(ensemble.weights * np.exp(psi.psi_k))


def solve_fk_limit(cfg: SolverConfig, z: NoiseLike,
                   ensemble: Optional[PathEnsemble] = None) -> FieldEstimate:
    """
    u_{t,x} with the drift upgraded to -alpha_t / 2 (histogram local time)

    The stochastic-integral part stays truncated at K.
    """
    if cfg.t == 0:
        return FieldEstimate.exact(float(cfg.u0(np.array(cfg.x))))
    _noise_vector(z, cfg.K)
    ensemble = _ensemble_for(cfg, ensemble, with_alpha=True)
    psi = psi_samples(ensemble, z, cfg.K)
    return FieldEstimate.from_samples(ensemble.weights * np.exp(psi.psi_limit))


def fk_over_noise(ensemble: PathEnsemble, K: int, noise: np.ndarray, limit: bool = False,
                  threads: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    u^K estimates at many noise rows on shared paths

    Args:
        ensemble: Shared paths
        K: Truncation level (noise rows may be longer; their prefix is used)
        noise: Noise matrix, shape (n_draws, >= K)
        limit: Use the histogram drift instead of sum c_j^2
        threads: Worker count

    Returns:
        (estimates, within-draw standard errors), each of shape (n_draws,)
    """
    if limit and ensemble.alpha_hist is None:
        raise DomainError("the limit solver needs an ensemble with alpha_hist")
    coeffs = ensemble.truncated(K)
    drift = 0.5 * (ensemble.alpha_hist if limit else ensemble.sigma2(K))
    n = ensemble.n_paths

    def work(start: int, stop: int):
        values = ensemble.weights[:, None] * np.exp(coeffs @ noise[start:stop, :K].T - drift[:, None])
        mean = values.mean(axis=0)
        se = values.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(stop - start)
        return mean, se

    parts = map_batches(work, noise.shape[0], NOISE_BATCH, threads)
    return concat([p[0] for p in parts]), concat([p[1] for p in parts])


def psi_conditional_law_check(cfg: SolverConfig, path: BrownianPath, m: int = 20000,
                              index: int = 0) -> Tuple[bool, Dict[str, Any]]:
    """
    Check Psi^K | B ~ N(-sigma^2/2, sigma^2) on one fixed path

    Draws m noise vectors from stream (seed, AUXILIARY, index) and compares
    the sample mean, variance and skewness of Psi^K with the Gaussian law.

    Returns:
        Tuple of (passed, report with z-scores)
    """
    if m < MIN_LAW_DRAWS:
        raise DomainError(f"the conditional-law check needs m >= {MIN_LAW_DRAWS}, got {m}")
    c = basis_time_integrals(path, cfg.K)
    sigma2 = float(np.sum(c ** 2))
    z = RngStream(cfg.seed, StreamRole.AUXILIARY, index).standard_normal((m, cfg.K))
    psi = z @ c - 0.5 * sigma2
    mean = float(np.mean(psi))
    var = float(np.var(psi, ddof=1))
    report: Dict[str, Any] = {'sigma2': sigma2, 'mean': mean, 'variance': var, 'm': m,
                              'mean_std_error': float(np.sqrt(var / m)),
                              'drift_inequality': bool(np.all(psi <= z @ c))}
    if sigma2 == 0.0:
        report.update({'z_mean': 0.0, 'z_variance': 0.0, 'z_skewness': 0.0, 'z_kurtosis': 0.0})
        return True, report
    report['z_mean'] = (mean + 0.5 * sigma2) / np.sqrt(sigma2 / m)
    report['z_variance'] = (var - sigma2) / (sigma2 * np.sqrt(2.0 / (m - 1)))
    report['z_skewness'] = float(stats.skew(psi)) / np.sqrt(6.0 / m)
    report['z_kurtosis'] = float(stats.kurtosis(psi, fisher=True)) / np.sqrt(24.0 / m)
    report['mean_vs_half_variance'] = mean + 0.5 * var
    passed = all(abs(report[k]) <= STANDARD_ERRORS for k in ('z_mean', 'z_variance', 'z_skewness'))
    logger.debug(f"Conditional law check: {report}")
    return passed and report['drift_inequality'], report


def moment_fk(q: int, cfg: SolverConfig) -> FieldEstimate:
    """
    E^W[(u^K)^q] by the moment formula

    Tuple k uses paths q k .. q k + q - 1; the exponent is the truncated
    mutual intersection local time sum_{i<j} sum_{k<=K} c_k^(i) c_k^(j).
    """
    if q < 2:
        raise DomainError(f"moment formula needs q >= 2, got {q}")
    if cfg.t == 0:
        return FieldEstimate.exact(float(cfg.u0(np.array(cfg.x))) ** q)
    ensemble = build_ensemble(cfg, n_paths=q * cfg.n_paths, with_alpha=False)
    c = ensemble.coeffs.reshape(cfg.n_paths, q, cfg.K)
    total = c.sum(axis=1)
    exponent = 0.5 * (np.einsum('ij,ij->i', total, total) - np.einsum('ikj,ikj->i', c, c))
    weights = ensemble.weights.reshape(cfg.n_paths, q).prod(axis=1)
    logger.info(f"Moment formula q={q} over {cfg.n_paths} path tuples")
    return FieldEstimate.from_samples(weights * np.exp(exponent))


def empirical_moment(q: int, cfg: SolverConfig, ensemble: Optional[PathEnsemble] = None) -> FieldEstimate:
    """
    Direct W-side estimate of E^W[(u^K)^q] over cfg.n_noise noise draws

    For q = 2 the nested-sampling bias is removed by subtracting the
    within-draw variance of the path average.
    """
    if q < 1:
        raise DomainError(f"moment order must be >= 1, got {q}")
    if cfg.t == 0:
        return FieldEstimate.exact(float(cfg.u0(np.array(cfg.x))) ** q)
    ensemble = _ensemble_for(cfg, ensemble)
    noise = noise_matrix(cfg.K, cfg.seed, cfg.n_noise)
    estimates, se = fk_over_noise(ensemble, cfg.K, noise, threads=cfg.threads)
    samples = estimates ** q
    if q == 2:
        bias = se ** 2
        samples = samples - bias
        logger.info(f"Nested sampling bias for q=2: {float(np.mean(bias)):.3e} removed")
    return FieldEstimate.from_samples(samples)


def mean_field_check(cfg: SolverConfig, ensemble: Optional[PathEnsemble] = None,
                     budget: float = 1e-6) -> Tuple[bool, Dict[str, Any]]:
    """
    E^W[u^K] against (P_t u0)(x) by quadrature

    The W-average uses cfg.n_noise draws; the B-side error of the shared
    paths is added to the standard error.
    """
    ensemble = _ensemble_for(cfg, ensemble)
    noise = noise_matrix(cfg.K, cfg.seed, cfg.n_noise)
    estimates, _ = fk_over_noise(ensemble, cfg.K, noise, threads=cfg.threads)
    w_side = FieldEstimate.from_samples(estimates)
    b_side = FieldEstimate.from_samples(ensemble.weights)
    se = combined_se(w_side, b_side)
    reference = float(heat_semigroup(cfg.u0, cfg.t, cfg.x))
    passed = abs(w_side.value - reference) <= STANDARD_ERRORS * se + budget
    return passed, {'estimate': w_side.value, 'std_error': se, 'semigroup': reference,
                    'n_noise': cfg.n_noise}


def chaos_fk_agreement(cfg: SolverConfig, n_draws: int = 20,
                       ensemble: Optional[PathEnsemble] = None) -> Tuple[bool, Dict[str, Any]]:
    """
    Pointwise equality of the chaos expansion and the Feynman-Kac estimate

    Both use the same paths; at every noise draw the gap must stay below
    3 standard errors plus the truncation tail.
    """
    ensemble = _ensemble_for(cfg, ensemble)
    coefficients = coefficients_from_functionals(ensemble.truncated(cfg.K), ensemble.weights,
                                                 cfg.degree, cfg.t, cfg.x)
    noise = noise_matrix(cfg.K, cfg.seed, n_draws)
    fk, se = fk_over_noise(ensemble, cfg.K, noise, threads=cfg.threads)
    chaos = chaos_eval_many(coefficients.x_alpha, noise)
    gaps = np.abs(chaos - fk)
    limits = STANDARD_ERRORS * se + coefficients.tail
    return bool(np.all(gaps <= limits)), {
        'max_gap': float(np.max(gaps)),
        'max_ratio': float(np.max(gaps / limits)),
        'tail': coefficients.tail,
        'terms': len(coefficients.x_alpha),
    }


def s_transform(xi: Sequence[float], cfg: SolverConfig,
                ensemble: Optional[PathEnsemble] = None) -> FieldEstimate:
    """S_{t,x}(xi) = E^B[u0(B_t^x) exp(sum_j xi_j c_j)] for xi_j = <e_j, xi>"""
    xi = np.asarray(xi, dtype=float)
    if cfg.t == 0:
        return FieldEstimate.exact(float(cfg.u0(np.array(cfg.x))))
    ensemble = _ensemble_for(cfg, ensemble)
    return FieldEstimate.from_samples(ensemble.weights * np.exp(ensemble.truncated(xi.size) @ xi))


def s_transform_derivative(j: int, cfg: SolverConfig, eps: float = 1e-3,
                           ensemble: Optional[PathEnsemble] = None) -> FieldEstimate:
    """Central difference of S_{t,x}(eps e_j) at eps = 0 on shared paths"""
    ensemble = _ensemble_for(cfg, ensemble)
    c = ensemble.truncated(j)[:, j - 1]
    samples = ensemble.weights * (np.exp(eps * c) - np.exp(-eps * c)) / (2.0 * eps)
    return FieldEstimate.from_samples(samples)


@dataclass
class ResidualReport:
    """Mild-equation residual of the S-transform on a space-time grid"""
    times: np.ndarray
    space: np.ndarray
    s_values: np.ndarray
    residual: np.ndarray
    budget: np.ndarray
    n_paths: int

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.residual)))

    @property
    def mean_abs(self) -> float:
        return float(np.mean(np.abs(self.residual)))

    @property
    def mean_budget(self) -> float:
        return float(np.mean(self.budget))

    @property
    def passed(self) -> bool:
        return self.mean_abs <= self.mean_budget

    def rows(self) -> List[Dict[str, Any]]:
        out = []
        for i, t in enumerate(self.times):
            for k, y in enumerate(self.space):
                out.append({'t': float(t), 'x': float(y), 'estimate': float(self.s_values[i, k]),
                            'residual': float(self.residual[i, k]), 'budget': float(self.budget[i, k])})
        return out

    def summary(self) -> Dict[str, Any]:
        return {'max_abs': self.max_abs, 'mean_abs': self.mean_abs,
                'mean_budget': self.mean_budget, 'passed': self.passed, 'n_paths': self.n_paths}


def s_transform_residual(xi: Sequence[float], cfg: SolverConfig,
                         time_nodes: int = STRANSFORM_TIME_NODES,
                         space_nodes: int = STRANSFORM_SPACE_NODES,
                         space_max: float = STRANSFORM_SPACE_MAX,
                         sub_steps: int = 10) -> ResidualReport:
    """
    Residual of S_{t,x} = (P_t u0)(x) + int_0^t int p_{t-s}(x-y) S_{s,y} V(y) dy ds

    S is estimated by Monte Carlo on a fine time grid and every space node
    (shared Brownian increments), V = sum_j xi_j e_j. The right side uses a
    cubic spline in space, Gauss-Hermite for the heat kernel and Simpson in
    time; the residual is reported at the coarse (time_nodes x space_nodes)
    grid with a budget of 3 standard errors plus the Simpson-trapezoid gap.

    Args:
        xi: Coefficients <e_j, xi>, j = 1..len(xi)
        cfg: Solver configuration (t, u0, n_paths, dt, seed)
        time_nodes: Coarse time nodes t_i = t i / time_nodes, i >= 1
        space_nodes: Space nodes on [-space_max, space_max]
        space_max: Half-width of the space window
        sub_steps: Quadrature sub-intervals per coarse time interval
    """
    xi = np.asarray(xi, dtype=float)
    if not cfg.t > 0:
        raise DomainError("the residual check needs t > 0")
    per_node = max(1, int(np.ceil(cfg.t / cfg.dt / (time_nodes * sub_steps))))
    grid = TimeGrid(cfg.t, time_nodes * sub_steps * per_node)
    fine = np.arange(0, grid.steps + 1, per_node)
    s_fine = grid.points()[fine]
    space = np.linspace(-space_max, space_max, space_nodes)
    potential = xi @ hermite_functions(xi.size, space) if xi.size else np.zeros_like(space)
    u0 = cfg.u0

    def work(start: int, stop: int):
        increments = sample_paths(0.0, grid, cfg.seed, start, stop)
        total = np.zeros((fine.size, space.size))
        total_sq = np.zeros_like(total)
        for k, y in enumerate(space):
            path = y + increments
            if xi.size:
                v = np.tensordot(xi, hermite_functions(xi.size, path), axes=1)
                integral = cumulative_trapezoid(v, dx=grid.dt, axis=-1, initial=0.0)
                samples = u0(path[:, fine]) * np.exp(integral[:, fine])
            else:
                samples = u0(path[:, fine])
            total[:, k] = samples.sum(axis=0)
            total_sq[:, k] = (samples ** 2).sum(axis=0)
        return total, total_sq

    logger.info(f"S-transform residual on {time_nodes}x{space_nodes} nodes with {cfg.n_paths} paths")
    parts = map_batches(work, cfg.n_paths, cfg.batch_size, cfg.threads)
    n = cfg.n_paths
    total = np.sum([p[0] for p in parts], axis=0)
    total_sq = np.sum([p[1] for p in parts], axis=0)
    field_mean = total / n
    variance = np.maximum(total_sq / n - field_mean ** 2, 0.0) * n / max(n - 1, 1)
    field_se = np.sqrt(variance / n)

    nodes, weights = gauss_hermite_rule(GAUSS_NODES)
    splines = [CubicSpline(space, field_mean[f] * potential, extrapolate=False) for f in range(fine.size)]
    coarse = np.arange(sub_steps, fine.size, sub_steps)
    residual = np.empty((coarse.size, space.size))
    budget = np.empty_like(residual)
    source_se = np.max(np.abs(potential)[None, :] * field_se, axis=1)
    for i, f_end in enumerate(coarse):
        t_end = s_fine[f_end]
        inner = np.empty((f_end + 1, space.size))
        for f in range(f_end + 1):
            points = space[:, None] + np.sqrt(t_end - s_fine[f]) * nodes[None, :]
            inner[f] = np.nan_to_num(splines[f](points)) @ weights
        s_axis = s_fine[:f_end + 1]
        duhamel = simpson(inner, x=s_axis, axis=0)
        quadrature_gap = np.abs(duhamel - trapezoid(inner, x=s_axis, axis=0))
        rhs = heat_semigroup(u0, t_end, space) + duhamel
        residual[i] = field_mean[f_end] - rhs
        propagated = trapezoid(source_se[:f_end + 1], x=s_axis)
        budget[i] = STANDARD_ERRORS * (field_se[f_end] + propagated) + quadrature_gap + 1e-12
    return ResidualReport(times=s_fine[coarse], space=space, s_values=field_mean[coarse],
                          residual=residual, budget=budget, n_paths=n)


@dataclass
class ConvergenceStudy:
    """u^K along an increasing K list with prefix-nested noise"""
    K_list: List[int]
    estimates: np.ndarray
    std_errors: np.ndarray
    n_paths: int

    @property
    def gaps(self) -> np.ndarray:
        """|u^{K_{i+1}} - u^{K_i}| per draw, shape (n_draws, len(K_list) - 1)"""
        return np.abs(np.diff(self.estimates, axis=1))

    def median_gaps(self) -> np.ndarray:
        return np.median(self.gaps, axis=0)

    def median_gap_errors(self, seed: int, n_boot: int = 400) -> np.ndarray:
        """Bootstrap standard errors of median_gaps over the noise draws"""
        gaps = self.gaps
        rng = RngStream(seed, StreamRole.RESAMPLE, BOOTSTRAP_STREAM).generator
        picks = rng.integers(0, gaps.shape[0], size=(n_boot, gaps.shape[0]))
        return np.median(gaps[picks], axis=1).std(axis=0, ddof=1)

    def gaps_decrease(self, seed: int, n_std: float = STANDARD_ERRORS) -> bool:
        """
        The last median gap is below the first and no step rises by more
        than n_std bootstrap errors
        """
        medians = self.median_gaps()
        if medians.size < 2:
            return True
        errors = self.median_gap_errors(seed)
        rises = np.diff(medians) - n_std * np.hypot(errors[:-1], errors[1:])
        return bool(medians[-1] < medians[0] and np.all(rises <= 0))

    def mean_field(self) -> List[FieldEstimate]:
        return [FieldEstimate.from_samples(self.estimates[:, i]) for i in range(len(self.K_list))]

    def rows(self) -> List[Dict[str, Any]]:
        medians = self.median_gaps()
        out = []
        for i, (K, estimate) in enumerate(zip(self.K_list, self.mean_field())):
            out.append({
                'K': K,
                'estimate': estimate.value,
                'std_error': estimate.std_error,
                'n': estimate.n,
                'median_gap': float(medians[i - 1]) if i else None,
            })
        return out


def convergence_study(cfg: SolverConfig, K_list: Sequence[int], n_draws: Optional[int] = None,
                      ensemble: Optional[PathEnsemble] = None) -> ConvergenceStudy:
    """
    u^K for every K in K_list on shared paths, the noise for K' < K being
    the prefix of the noise for K (same W)

    Args:
        cfg: Solver configuration (cfg.K is ignored)
        K_list: Nondecreasing truncation levels
        n_draws: Noise draws (default cfg.n_noise)
        ensemble: Shared paths holding at least max(K_list) integrals
    """
    K_list = [int(k) for k in K_list]
    if not K_list or any(b < a for a, b in zip(K_list, K_list[1:])) or K_list[0] < 1:
        raise DomainError(f"K list must be nondecreasing positive integers, got {K_list}")
    n_draws = n_draws or cfg.n_noise
    K_max = K_list[-1]
    if ensemble is None:
        ensemble = build_ensemble(cfg, K=K_max, with_alpha=False)
    noise = noise_matrix(K_max, cfg.seed, n_draws)
    estimates = np.empty((n_draws, len(K_list)))
    std_errors = np.empty_like(estimates)
    for i, K in enumerate(K_list):
        estimates[:, i], std_errors[:, i] = fk_over_noise(ensemble, K, noise, threads=cfg.threads)
    logger.info(f"Convergence study over K={K_list} with {n_draws} noise draws")
    return ConvergenceStudy(K_list=K_list, estimates=estimates, std_errors=std_errors,
                            n_paths=ensemble.n_paths)


def limit_gap_study(cfg: SolverConfig, K_list: Sequence[int], n_draws: int = 20) -> np.ndarray:
    """Median over draws of |u_limit - u^K| at each K (shared paths, prefix noise)"""
    K_max = max(K_list)
    ensemble = build_ensemble(cfg, K=K_max, with_alpha=True)
    noise = noise_matrix(K_max, cfg.seed, n_draws)
    medians = []
    for K in K_list:
        truncated, _ = fk_over_noise(ensemble, K, noise, threads=cfg.threads)
        limit, _ = fk_over_noise(ensemble, K, noise, limit=True, threads=cfg.threads)
        medians.append(float(np.median(np.abs(limit - truncated))))
    return np.array(medians)


def _paired_check(direct: np.ndarray, theory: np.ndarray) -> Tuple[bool, Dict[str, Any]]:
    difference = FieldEstimate.from_samples(direct - theory)
    passed = abs(difference.value) <= STANDARD_ERRORS * difference.std_error + 1e-12
    return passed, {
        'direct': FieldEstimate.from_samples(direct).to_dict(),
        'formula': FieldEstimate.from_samples(theory).to_dict(),
        'difference': difference.to_dict(),
    }


def psi_cauchy_gap(cfg: SolverConfig, M: int, N: int,
                   ensemble: Optional[PathEnsemble] = None) -> Tuple[bool, Dict[str, Any]]:
    """
    E|Psi^N - Psi^M|^2 by sampling against E^B[S + S^2/4], S = sum_{M<j<=N} c_j^2
    """
    if not 0 <= M < N:
        raise DomainError(f"need 0 <= M < N, got M={M}, N={N}")
    if ensemble is None:
        ensemble = build_ensemble(cfg, K=N, with_alpha=False)
    tail = ensemble.truncated(N)[:, M:]
    S = np.einsum('ij,ij->i', tail, tail)
    z = RngStream(cfg.seed, StreamRole.AUXILIARY, 1).standard_normal(tail.shape)
    direct = (np.einsum('ij,ij->i', z, tail) - 0.5 * S) ** 2
    return _paired_check(direct, S + 0.25 * S ** 2)


def exp_psi_moment(p: float, cfg: SolverConfig,
                   ensemble: Optional[PathEnsemble] = None) -> Tuple[bool, Dict[str, Any]]:
    """
    E[exp(p Psi^K)] by sampling against E^B[exp(p(p-1)/2 sum c_j^2)]
    """
    ensemble = _ensemble_for(cfg, ensemble)
    c = ensemble.truncated(cfg.K)
    sigma2 = ensemble.sigma2(cfg.K)
    z = RngStream(cfg.seed, StreamRole.AUXILIARY, 2).standard_normal(c.shape)
    psi = np.einsum('ij,ij->i', z, c) - 0.5 * sigma2
    return _paired_check(np.exp(p * psi), np.exp(0.5 * p * (p - 1.0) * sigma2))


def weak_pairing(xi: Sequence[float], cfg: SolverConfig,
                 ensemble: Optional[PathEnsemble] = None) -> Tuple[bool, Dict[str, Any]]:
    """
    E^W[u^K E^xi] (W-side Monte Carlo) against the S-transform S_{t,x}(xi)

    E^xi = exp(sum_j xi_j Z_j - |xi|^2 / 2) is the stochastic exponential test
    functional; xi is padded with zeros to length K.
    """
    xi = np.asarray(xi, dtype=float)
    if xi.size > cfg.K:
        raise DomainError(f"xi has {xi.size} coefficients, K={cfg.K}")
    padded = np.zeros(cfg.K)
    padded[:xi.size] = xi
    ensemble = _ensemble_for(cfg, ensemble)
    noise = noise_matrix(cfg.K, cfg.seed, cfg.n_noise)
    estimates, _ = fk_over_noise(ensemble, cfg.K, noise, threads=cfg.threads)
    exponential = np.exp(noise @ padded - 0.5 * padded @ padded)
    pairing = FieldEstimate.from_samples(estimates * exponential)
    transform = s_transform(padded, cfg, ensemble)
    se = combined_se(pairing, transform)
    passed = abs(pairing.value - transform.value) <= STANDARD_ERRORS * se + 1e-12
    return passed, {'pairing': pairing.to_dict(), 's_transform': transform.to_dict()}

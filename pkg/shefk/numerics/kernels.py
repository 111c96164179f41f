"""
Kernels Module
Heat kernel and semigroup, the chaos kernels f_n of the solution (time-simplex
quadrature), their projected Hermite coefficients and the Monte Carlo route
x_alpha = E^B[u0(B_t^x) prod_j c_j^{alpha_j} / alpha_j!]
"""

import json
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import permutations
from typing import Any, Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import simpson
from scipy.special import erfc, ndtr, roots_hermitenorm, roots_legendre

from ..config import (
    DEFAULT_BATCH_SIZE,
    DEFAULT_DT,
    GAUSS_NODES,
    KERNEL_TIME_NODES,
    LEGENDRE_NODES,
    NESTED_NODES,
    POLAR_NODES,
    SIMPLEX_SAMPLES,
    SIMPSON_NODES,
    WINDOW_SIGMAS,
)
from ..errors import DomainError
from ..results import FieldEstimate
from .hermite import hermite_function
from .paths import TimeGrid, simulate_functionals
from .rng import RngStream, StreamRole
from .wick import ChaosExpansion, MultiIndex, exponential_tail, multi_indices

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

# Work arrays are chunked to roughly this many doubles
CHUNK_ELEMENTS = 4_000_000


@dataclass(frozen=True, eq=False)
class InitialCondition:
    """
    Bounded deterministic initial datum u0

    Attributes:
        name: Registry name (or 'custom')
        func: Vectorized function on numpy arrays
        sup_bound: Bound on |u0|
        breakpoints: Discontinuities; the semigroup switches to piecewise
            Gauss-Legendre when present
        constant: Set for constant data (semigroup is then exact)
        exact_semigroup: Closed form (t, x) -> (P_t u0)(x), used as an oracle
        nonnegative: u0 >= 0 everywhere
        params: Parameters the datum was built with
    """
    name: str
    func: Callable[[np.ndarray], np.ndarray]
    sup_bound: float = float('inf')
    breakpoints: Tuple[float, ...] = ()
    constant: Optional[float] = None
    exact_semigroup: Optional[Callable[[float, np.ndarray], np.ndarray]] = None
    nonnegative: bool = False
    params: Dict[str, float] = field(default_factory=dict)

    def __call__(self, y: ArrayLike) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self.constant is not None:
            return np.full(y.shape, self.constant)
        try:
            values = np.asarray(self.func(y), dtype=float)
            if values.shape != y.shape:
                values = np.broadcast_to(values, y.shape).astype(float)
        except (TypeError, ValueError):
            values = np.vectorize(lambda v: float(self.func(v)))(y)
        return values

    def check_bound(self, samples: np.ndarray) -> bool:
        """True when |u0| <= sup_bound at every sample point"""
        return bool(np.all(np.abs(self(samples)) <= self.sup_bound + 1e-12))

    def describe(self) -> Dict[str, Any]:
        return {'name': self.name, **self.params}

    @classmethod
    def from_callable(cls, func: Callable, name: str = 'custom',
                      sup_bound: float = float('inf')) -> 'InitialCondition':
        """Wrap a user callable (library use only)"""
        return cls(name=name, func=func, sup_bound=sup_bound)


def _one(**_) -> InitialCondition:
    return InitialCondition('one', lambda y: np.ones_like(y), sup_bound=1.0, constant=1.0,
                            exact_semigroup=lambda t, x: np.ones_like(np.asarray(x, dtype=float)),
                            nonnegative=True)


def _zero(**_) -> InitialCondition:
    return InitialCondition('zero', lambda y: np.zeros_like(y), sup_bound=0.0, constant=0.0,
                            exact_semigroup=lambda t, x: np.zeros_like(np.asarray(x, dtype=float)),
                            nonnegative=True)


def _indicator(a: float = 0.0, b: float = 1.0) -> InitialCondition:
    if not b > a:
        raise DomainError(f"indicator needs a < b, got [{a}, {b}]")

    def exact(t, x):
        if t == 0:
            return ((x >= a) & (x <= b)).astype(float)
        root = np.sqrt(t)
        return ndtr((b - x) / root) - ndtr((a - x) / root)

    return InitialCondition('indicator', lambda y: ((y >= a) & (y <= b)).astype(float),
                            sup_bound=1.0, breakpoints=(a, b), exact_semigroup=exact,
                            nonnegative=True, params={'a': a, 'b': b})


def _gauss_bump(width: float = 1.0) -> InitialCondition:
    if not width > 0:
        raise DomainError(f"gauss-bump width must be positive, got {width}")
    w2 = width * width

    def exact(t, x):
        return np.sqrt(w2 / (w2 + t)) * np.exp(-0.5 * np.asarray(x) ** 2 / (w2 + t))

    return InitialCondition('gauss-bump', lambda y: np.exp(-0.5 * y * y / w2), sup_bound=1.0,
                            exact_semigroup=exact, nonnegative=True, params={'width': width})


def _cosine_bounded(amplitude: float = 0.5, frequency: float = 1.0) -> InitialCondition:
    def exact(t, x):
        return 1.0 + amplitude * np.exp(-0.5 * frequency ** 2 * t) * np.cos(frequency * np.asarray(x))

    return InitialCondition('cosine-bounded', lambda y: 1.0 + amplitude * np.cos(frequency * y),
                            sup_bound=1.0 + abs(amplitude), exact_semigroup=exact,
                            nonnegative=abs(amplitude) <= 1.0,
                            params={'amplitude': amplitude, 'frequency': frequency})


INITIAL_CONDITIONS: Dict[str, Callable[..., InitialCondition]] = {
    'one': _one,
    'zero': _zero,
    'indicator': _indicator,
    'gauss-bump': _gauss_bump,
    'cosine-bounded': _cosine_bounded,
}


def initial_condition(name: str, **params: float) -> InitialCondition:
    """
    Look up an initial condition by registry name

    Args:
        name: One of one, zero, indicator, gauss-bump, cosine-bounded
        **params: Shape parameters (a, b for indicator; width; amplitude, frequency)
    """
    try:
        factory = INITIAL_CONDITIONS[name]
    except KeyError:
        raise DomainError(f"Unknown initial condition {name!r}; choose from {sorted(INITIAL_CONDITIONS)}")
    return factory(**params)


def as_initial_condition(u0: Union[str, InitialCondition, Callable]) -> InitialCondition:
    """Coerce a registry name, InitialCondition or callable"""
    if isinstance(u0, InitialCondition):
        return u0
    if isinstance(u0, str):
        return initial_condition(u0)
    if callable(u0):
        return InitialCondition.from_callable(u0)
    raise DomainError(f"Cannot use {u0!r} as an initial condition")


def heat_kernel(tau: ArrayLike, y: ArrayLike) -> ArrayLike:
    """
    p_tau(y) = (2 pi tau)^{-1/2} exp(-y^2 / (2 tau))

    Raises:
        DomainError: tau <= 0 (the t = 0 delta is left to callers)
    """
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0):
        raise DomainError(f"heat kernel needs tau > 0, got {tau}")
    y = np.asarray(y, dtype=float)
    value = np.exp(-0.5 * y * y / tau) / np.sqrt(2.0 * np.pi * tau)
    return value if np.ndim(value) else float(value)


@lru_cache(maxsize=8)
def gauss_hermite_rule(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes/weights for E[f(G)], G ~ N(0, 1)"""
    nodes, weights = roots_hermitenorm(n)
    return nodes, weights / np.sqrt(2.0 * np.pi)


@lru_cache(maxsize=8)
def _gauss_legendre(n: int) -> Tuple[np.ndarray, np.ndarray]:
    return roots_legendre(n)


def window_tail_bound(u0: InitialCondition) -> float:
    """Error bound sup|u0| P(|G| > W) of the truncated piecewise window"""
    return float(u0.sup_bound * erfc(WINDOW_SIGMAS / np.sqrt(2.0)))


def _piecewise_value(u0: InitialCondition, t: float, x: float) -> float:
    if t == 0:
        return float(u0(np.array(x)))
    sigma = np.sqrt(t)
    lower, upper = x - WINDOW_SIGMAS * sigma, x + WINDOW_SIGMAS * sigma
    edges = np.linspace(lower, upper, 2 * int(WINDOW_SIGMAS) + 1)
    inside = [b for b in u0.breakpoints if lower < b < upper]
    edges = np.unique(np.concatenate([edges, inside]))
    nodes, weights = _gauss_legendre(LEGENDRE_NODES)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    y = mid[:, None] + half[:, None] * nodes
    integrand = np.exp(-0.5 * (y - x) ** 2 / t) / np.sqrt(2.0 * np.pi * t) * u0(y)
    return float(np.sum(half * (integrand @ weights)))


def heat_semigroup(u0: InitialCondition, t: ArrayLike, x: ArrayLike) -> ArrayLike:
    """
    (P_t u0)(x) = int p_t(x - y) u0(y) dy

    Gauss-Hermite with GAUSS_NODES nodes for continuous data; piecewise
    Gauss-Legendre split at the breakpoints otherwise. t and x broadcast.

    Args:
        u0: Initial condition
        t: Time(s) >= 0; t = 0 returns u0(x)
        x: Point(s)

    Returns:
        Semigroup values with the broadcast shape of (t, x)
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(t < 0):
        raise DomainError("heat semigroup needs t >= 0")
    t_b, x_b = np.broadcast_arrays(t, x)
    if u0.constant is not None:
        out = np.full(t_b.shape, u0.constant)
    elif u0.breakpoints:
        out = np.array([_piecewise_value(u0, tt, xx) for tt, xx in zip(t_b.ravel(), x_b.ravel())])
        out = out.reshape(t_b.shape)
    else:
        nodes, weights = gauss_hermite_rule(GAUSS_NODES)
        flat_t = np.sqrt(t_b.ravel())
        flat_x = x_b.ravel()
        out = np.empty(flat_x.size)
        step = max(1, CHUNK_ELEMENTS // nodes.size)
        for start in range(0, flat_x.size, step):
            stop = start + step
            y = flat_x[start:stop, None] + flat_t[start:stop, None] * nodes
            out[start:stop] = u0(y) @ weights
        out = out.reshape(t_b.shape)
        # exact identity at t = 0
        zero = t_b == 0
        if np.any(zero):
            out[zero] = u0(x_b[zero])
    return out if out.ndim else float(out)


def _gauss_factor(d: np.ndarray, u: np.ndarray) -> np.ndarray:
    """exp(-d^2 / (2 u^2)) extended by continuity to u = 0"""
    with np.errstate(divide='ignore', invalid='ignore'):
        ratio = np.where(d == 0.0, 0.0, d * d / (2.0 * u * u))
    return np.exp(-ratio)


def _visit_order(points: Sequence[ArrayLike], orientation: str) -> list:
    if orientation == 'kernels':
        return list(points)[::-1]
    if orientation == 'path':
        return list(points)
    raise DomainError(f"orientation must be 'kernels' or 'path', got {orientation!r}")


def _chain_one(t: float, x: float, visit: list, u0: InitialCondition, nodes: int) -> np.ndarray:
    # tau = u^2 removes the p_tau(0) singularity
    v1 = np.asarray(visit[0], dtype=float)
    u = np.linspace(0.0, np.sqrt(t), nodes)
    semigroup = heat_semigroup(u0, np.maximum(t - u * u, 0.0), v1[..., None])
    integrand = np.sqrt(2.0 / np.pi) * _gauss_factor((v1 - x)[..., None], u) * semigroup
    return simpson(integrand, x=u, axis=-1)


def _chain_two(t: float, x: float, visit: list, u0: InitialCondition, nodes: int) -> np.ndarray:
    # gaps tau_k = u_k^2, then polar (rho, theta) on the quarter disc
    v1, v2 = np.broadcast_arrays(np.asarray(visit[0], dtype=float), np.asarray(visit[1], dtype=float))
    rho = np.linspace(0.0, np.sqrt(t), nodes)
    theta = np.linspace(0.0, 0.5 * np.pi, nodes)
    u1 = rho[:, None] * np.cos(theta)[None, :]
    u2 = rho[:, None] * np.sin(theta)[None, :]
    flat1, flat2 = v1.ravel(), v2.ravel()
    out = np.empty(flat1.size)
    step = max(1, CHUNK_ELEMENTS // (nodes * nodes))
    for start in range(0, flat1.size, step):
        a = flat1[start:start + step, None, None]
        b = flat2[start:start + step, None, None]
        semigroup = heat_semigroup(u0, np.maximum(t - rho * rho, 0.0), b[:, :, 0])
        integrand = (2.0 / np.pi) * _gauss_factor(a - x, u1) * _gauss_factor(b - a, u2)
        integrand = integrand * semigroup[:, :, None] * rho[None, :, None]
        inner = simpson(integrand, x=theta, axis=-1)
        out[start:start + step] = simpson(inner, x=rho, axis=-1)
    return out.reshape(v1.shape)


def chaos_kernel_quadrature(n: int, t: float, x: float, points: Sequence[ArrayLike],
                            u0: InitialCondition, orientation: str = 'kernels',
                            nodes: Optional[int] = None) -> ArrayLike:
    """
    Chaos kernel f_n(t, x; x_1..x_n) by time-simplex quadrature

    With orientation 'kernels' the points enter as
        int_{0<s_1<..<s_n<t} p_{t-s_n}(x - x_n) .. p_{s_2-s_1}(x_2 - x_1) (P_{s_1} u0)(x_1) ds;
    with orientation 'path' the path from x visits x_1 first, so
    f_n(x_1..x_n) equals the 'path' kernel at (x_n..x_1).

    n = 1 uses Simpson in u = sqrt(tau); n = 2 uses iterated Simpson in polar
    coordinates of (sqrt(tau_1), sqrt(tau_2)); n = 3 falls back to
    simplex_kernel_mc.

    Args:
        n: Kernel order, 0..3
        t: Time horizon (> 0 for n >= 1)
        x: Base point
        points: n evaluation points (scalars or broadcastable arrays)
        u0: Initial condition
        orientation: 'kernels' or 'path'
        nodes: Simpson nodes per axis

    Returns:
        Kernel value(s) with the broadcast shape of the points
    """
    if n == 0:
        return heat_semigroup(u0, t, x)
    if not 1 <= n <= 3:
        raise DomainError(f"chaos kernels are supported for n <= 3, got n={n}")
    if len(points) != n:
        raise DomainError(f"f_{n} needs {n} points, got {len(points)}")
    if not t > 0:
        raise DomainError(f"chaos kernels need t > 0, got {t}")
    visit = _visit_order(points, orientation)
    if n == 1:
        value = _chain_one(t, x, visit, u0, nodes or SIMPSON_NODES)
    elif n == 2:
        value = _chain_two(t, x, visit, u0, nodes or POLAR_NODES)
    else:
        value = simplex_kernel_mc(n, t, x, points, u0, orientation=orientation).value
    value = np.asarray(value, dtype=float)
    return value if value.ndim else float(value)


def symmetrized_kernel(n: int, t: float, x: float, points: Sequence[float],
                       u0: InitialCondition, nodes: Optional[int] = None) -> float:
    """Average of f_n over all orderings of the points"""
    values = [chaos_kernel_quadrature(n, t, x, list(p), u0, nodes=nodes)
              for p in permutations(points)]
    return float(np.mean(values))


def simplex_kernel_mc(n: int, t: float, x: float, points: Sequence[float], u0: InitialCondition,
                      n_samples: int = SIMPLEX_SAMPLES, seed: int = 0,
                      orientation: str = 'kernels') -> FieldEstimate:
    """
    Monte Carlo f_n over the time simplex

    Samples u uniformly on {u >= 0, |u|^2 <= t} (the gaps are tau_k = u_k^2),
    where the integrand (2/pi)^{n/2} prod_k exp(-d_k^2 / (2 u_k^2)) P u0 is bounded.
    """
    if n < 1:
        raise DomainError(f"simplex sampling needs n >= 1, got {n}")
    if len(points) != n:
        raise DomainError(f"f_{n} needs {n} points, got {len(points)}")
    visit = [float(v) for v in _visit_order(points, orientation)]
    stream = RngStream(seed, StreamRole.SIMPLEX, n)
    direction = np.abs(stream.standard_normal((n_samples, n)))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    radius = np.sqrt(t) * stream.uniform(n_samples) ** (1.0 / n)
    u = direction * radius[:, None]
    volume = (np.pi * t) ** (n / 2.0) / math.gamma(n / 2.0 + 1.0) / 2 ** n
    previous = np.concatenate([[x], visit[:-1]])
    gaps = np.asarray(visit) - previous
    integrand = (2.0 / np.pi) ** (n / 2.0) * np.prod(_gauss_factor(gaps[None, :], u), axis=1)
    integrand *= heat_semigroup(u0, np.maximum(t - np.sum(u * u, axis=1), 0.0), visit[-1])
    return FieldEstimate.from_samples(volume * integrand)


def _ordered_coefficient(order: Tuple[int, ...], t: float, x: float, u0: InitialCondition,
                         gh_nodes: int, time_nodes: int) -> float:
    """int_{s_1<..<s_n<t} E[u0(B_t^x) prod_k e_{i_k}(B_{s_k}^x)] ds for n <= 2"""
    xi, w = gauss_hermite_rule(gh_nodes)
    if len(order) == 1:
        s = np.linspace(0.0, t, 4 * time_nodes + 1)
        y = x + np.sqrt(s)[:, None] * xi[None, :]
        inner = hermite_function(order[0], y) * heat_semigroup(u0, (t - s)[:, None], y)
        return float(simpson(inner @ w, x=s))
    # s_2 = t a, s_1 = s_2 b; Jacobian t s_2
    a = np.linspace(0.0, 1.0, time_nodes)
    b = np.linspace(0.0, 1.0, time_nodes)
    s2 = t * a[:, None]
    s1 = s2 * b[None, :]
    y1 = x + np.sqrt(s1)[..., None, None] * xi[:, None]
    y2 = y1 + np.sqrt(np.maximum(s2 - s1, 0.0))[..., None, None] * xi[None, :]
    tail = heat_semigroup(u0, np.broadcast_to((t - s2)[..., None, None], y2.shape), y2)
    integrand = hermite_function(order[0], y1) * hermite_function(order[1], y2) * tail
    expectation = np.einsum('abij,i,j->ab', integrand, w, w)
    inner = simpson(expectation, x=b, axis=1)
    return float(simpson(inner * t * s2[:, 0], x=a))


def projected_kernel_coefficient(alpha: MultiIndex, t: float, x: float, u0: InitialCondition,
                                 gh_nodes: int = NESTED_NODES,
                                 time_nodes: int = KERNEL_TIME_NODES) -> float:
    """
    Deterministic chaos coefficient x_alpha for |alpha| <= 2

    Sum over the distinct orderings (i_1..i_n) of alpha of the ordered
    simplex integral of E[u0(B_t^x) prod_k e_{i_k}(B_{s_k}^x)], computed by
    nested Gauss-Hermite expectations and Simpson in time.
    """
    if alpha.order > 2:
        raise DomainError(f"projected coefficients are available for |alpha| <= 2, got {alpha}")
    if alpha.order == 0:
        return float(heat_semigroup(u0, t, x))
    if t == 0:
        return 0.0
    total = sum(_ordered_coefficient(order, t, x, u0, gh_nodes, time_nodes)
                for order in alpha.orderings())
    logger.debug(f"Projected coefficient {alpha} at t={t}, x={x}: {total}")
    return float(total)


def kernel_projection(alpha: MultiIndex, t: float, x: float, u0: InitialCondition,
                      half_width: Optional[float] = None, points: int = 121,
                      nodes: Optional[int] = None) -> float:
    """
    x_alpha from the quadrature kernel f_n, |alpha| = n <= 2

    Integrates f_n against the Hermite tensors of every distinct ordering
    (i_1..i_n) of alpha: the path meets x_n at its earliest time, so the
    ordering pairs e_{i_1} with x_n and e_{i_n} with x_1. Simpson on a
    square window of half-width `half_width` (default 6 sqrt(t)) around x.
    """
    if alpha.order > 2:
        raise DomainError(f"kernel projection is available for |alpha| <= 2, got {alpha}")
    if alpha.order == 0:
        return float(heat_semigroup(u0, t, x))
    if t == 0:
        return 0.0
    if points < 3 or points % 2 == 0:
        raise DomainError(f"kernel projection needs an odd node count >= 3, got {points}")
    width = 6.0 * math.sqrt(t) if half_width is None else half_width
    y = x + np.linspace(-width, width, points)
    total = 0.0
    if alpha.order == 1:
        kernel = chaos_kernel_quadrature(1, t, x, [y], u0, nodes=nodes)
        for (i,) in alpha.orderings():
            total += float(simpson(kernel * hermite_function(i, y), x=y))
    else:
        y1, y2 = np.meshgrid(y, y, indexing='ij')
        kernel = chaos_kernel_quadrature(2, t, x, [y1, y2], u0, nodes=nodes)
        for i, j in alpha.orderings():
            tensor = hermite_function(j, y)[:, None] * hermite_function(i, y)[None, :]
            total += float(simpson(simpson(kernel * tensor, x=y, axis=1), x=y))
    logger.debug(f"Kernel projection {alpha} at t={t}, x={x}: {total}")
    return total


@dataclass
class KernelCoefficients:
    """
    Monte Carlo chaos coefficients of u^K(t, x)

    Attributes:
        t, x: Evaluation point
        K, N: Basis and degree bounds
        x_alpha: The coefficients as an expansion
        std_errors: Standard error per multi-index
        n_paths: Brownian paths used
        tail: Mean over paths of |u0| times the L^2 truncation tail
    """
    t: float
    x: float
    K: int
    N: int
    x_alpha: ChaosExpansion
    std_errors: Dict[MultiIndex, float]
    n_paths: int
    tail: float = 0.0

    def estimate(self, alpha: MultiIndex) -> FieldEstimate:
        return FieldEstimate(value=self.x_alpha.coefficient(alpha),
                             std_error=self.std_errors.get(alpha, 0.0), n=self.n_paths)

    def sidecar(self) -> Dict[str, Any]:
        """JSON sidecar accompanying the expansion text"""
        return {
            't': self.t,
            'x': self.x,
            'K': self.K,
            'N': self.N,
            'n_paths': self.n_paths,
            'tail': self.tail,
            'std_errors': {alpha.to_text(): se for alpha, se in self.std_errors.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.sidecar(), indent=2, sort_keys=True) + '\n'

    def dump_to_files(self, stem: str) -> Tuple[str, str]:
        """Write <stem>.chaos and <stem>.json; returns the two paths"""
        text_path, json_path = f"{stem}.chaos", f"{stem}.json"
        with open(text_path, 'w') as f:
            f.write(self.x_alpha.to_text())
        with open(json_path, 'w') as f:
            f.write(self.to_json())
        logger.info(f"Chaos coefficients written to {text_path} and {json_path}")
        return text_path, json_path

    @classmethod
    def load_from_files(cls, stem: str) -> 'KernelCoefficients':
        with open(f"{stem}.chaos", 'r') as f:
            expansion = ChaosExpansion.from_text(f.read())
        with open(f"{stem}.json", 'r') as f:
            data = json.load(f)
        return cls(
            t=float(data['t']), x=float(data['x']), K=int(data['K']), N=int(data['N']),
            x_alpha=expansion,
            std_errors={MultiIndex.from_text(k): float(v) for k, v in data['std_errors'].items()},
            n_paths=int(data['n_paths']), tail=float(data.get('tail', 0.0)),
        )


def coefficients_from_functionals(coeffs: np.ndarray, weights: np.ndarray, N: int,
                                  t: float, x: float) -> KernelCoefficients:
    """
    x_alpha = mean over paths of weights * prod_j c_j^{alpha_j} / alpha_j!

    Args:
        coeffs: Path time integrals, shape (n_paths, K)
        weights: u0(B_t) per path
        N: Degree bound
        t, x: Evaluation point (metadata)
    """
    n_paths, K = coeffs.shape
    powers = [[None] * (N + 1) for _ in range(K)]
    for j in range(K):
        powers[j][0] = np.ones(n_paths)
        for a in range(1, N + 1):
            powers[j][a] = powers[j][a - 1] * coeffs[:, j] / a
    terms: Dict[MultiIndex, float] = {}
    std_errors: Dict[MultiIndex, float] = {}
    for alpha in multi_indices(K, N):
        samples = weights.copy()
        for j, a in enumerate(alpha.entries):
            if a:
                samples = samples * powers[j][a]
        estimate = FieldEstimate.from_samples(samples)
        terms[alpha] = estimate.value
        std_errors[alpha] = estimate.std_error
    tails = np.array([exponential_tail(row, N) for row in coeffs])
    tail = float(np.mean(np.abs(weights) * np.sqrt(tails)))
    expansion = ChaosExpansion(terms, basis_bound=K, degree_bound=N, tail_mass=float(np.mean(weights ** 2 * tails)))
    return KernelCoefficients(t=t, x=x, K=K, N=N, x_alpha=expansion, std_errors=std_errors,
                              n_paths=n_paths, tail=tail)


def chaos_coefficients_mc(t: float, x: float, K: int, N: int, u0: InitialCondition,
                          n_paths: int, dt: float = DEFAULT_DT, seed: int = 0,
                          threads: Optional[int] = None,
                          batch_size: int = DEFAULT_BATCH_SIZE) -> KernelCoefficients:
    """
    Monte Carlo chaos coefficients x_alpha of u^K(t, x), |alpha| <= N

    All coefficients share the same paths (common random numbers).
    """
    if K < 1 or N < 0:
        raise DomainError(f"need K >= 1 and N >= 0, got K={K}, N={N}")
    if t == 0:
        value = float(u0(np.array(x)))
        return KernelCoefficients(t=0.0, x=x, K=K, N=N,
                                  x_alpha=ChaosExpansion({MultiIndex(): value}, K, N),
                                  std_errors={MultiIndex(): 0.0}, n_paths=1)
    grid = TimeGrid.from_dt(t, dt)
    coeffs, _, terminal = simulate_functionals(x, grid, K, n_paths, seed,
                                               threads=threads, batch_size=batch_size)
    logger.info(f"Estimating chaos coefficients K={K}, N={N} from {n_paths} paths")
    return coefficients_from_functionals(coeffs, u0(terminal), N, t, x)

"""
Reduced PDE Module
Explicit finite differences for
    d_t v = 1/2 d_xx v - sum_j e_j(x) d_{z_j} v,   v(0, x, z) = u0(x) exp(-|z|^2/2)
and its Feynman-Kac representation v(t, x, z) = E^B[u0(B_t^x) exp(-|z - c|^2/2)],
with u = v exp(|z|^2/2) the noise-substituted solution u^K(t, x, Z)
"""

import csv
import io
import itertools
import logging
from dataclasses import dataclass, replace
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from ..config import PDE_H_X, PDE_H_Z, PDE_SAFETY, PDE_X_MAX, PDE_Z_MAX, STANDARD_ERRORS
from ..errors import ConfigurationError, DomainError
from ..numerics.hermite import hermite_functions, sup_norm
from ..numerics.kernels import InitialCondition, heat_semigroup
from ..results import FieldEstimate
from .fk import PathEnsemble, SolverConfig, build_ensemble

logger = logging.getLogger(__name__)

MAX_PDE_K = 2


@dataclass(frozen=True)
class PdeGrid:
    """
    Box [-x_max, x_max] x [-z_max, z_max]^K with steps h_x, h_z

    The explicit step must satisfy dt (1/h_x^2 + sum_j sup|e_j| / h_z) <= safety,
    which keeps the scheme monotone and implies
    dt <= safety min(h_x^2, h_z / max_j sup|e_j|).
    """
    K: int = 1
    x_max: float = PDE_X_MAX
    z_max: float = PDE_Z_MAX
    h_x: float = PDE_H_X
    h_z: float = PDE_H_Z
    dt: Optional[float] = None
    safety: float = PDE_SAFETY

    def __post_init__(self):
        if not 1 <= self.K <= MAX_PDE_K:
            raise ConfigurationError(f"reduced PDE supports K in 1..{MAX_PDE_K}, got K={self.K}")
        if not (self.h_x > 0 and self.h_z > 0 and self.x_max > 0 and self.z_max > 0):
            raise ConfigurationError("PDE grid steps and box half-widths must be positive")
        if self.dt is not None and self.dt > self.stable_dt():
            raise ConfigurationError(
                f"PDE time step {self.dt} violates the stability bound {self.stable_dt():.6g}"
            )

    def stable_dt(self) -> float:
        """Largest admissible explicit time step"""
        advection = sum(sup_norm(j) for j in range(1, self.K + 1)) / self.h_z
        return self.safety / (1.0 / self.h_x ** 2 + advection)

    @property
    def x_nodes(self) -> np.ndarray:
        n = int(round(self.x_max / self.h_x))
        return np.linspace(-n * self.h_x, n * self.h_x, 2 * n + 1)

    @property
    def z_nodes(self) -> np.ndarray:
        n = int(round(self.z_max / self.h_z))
        return np.linspace(-n * self.h_z, n * self.h_z, 2 * n + 1)

    def refined(self) -> 'PdeGrid':
        """Halve h_x and h_z; dt is re-derived from the stability bound"""
        return replace(self, h_x=0.5 * self.h_x, h_z=0.5 * self.h_z, dt=None)

    def steps_for(self, t: float) -> Tuple[int, float]:
        """(number of steps, step) covering [0, t] within the bound"""
        if t == 0:
            return 0, 0.0
        bound = self.dt if self.dt is not None else self.stable_dt()
        n = max(1, int(np.ceil(t / bound - 1e-12)))
        return n, t / n


@dataclass
class PdeSolution:
    """v^K and u^K on the grid at time t"""
    grid: PdeGrid
    t: float
    v: np.ndarray
    u: np.ndarray
    steps: int

    def _interpolator(self, values: np.ndarray) -> RegularGridInterpolator:
        axes = (self.grid.x_nodes,) + (self.grid.z_nodes,) * self.grid.K
        return RegularGridInterpolator(axes, values)

    def u_at(self, x: float, z: Sequence[float]) -> float:
        """u^K(t, x, z) by multilinear interpolation"""
        point = np.array([[x, *np.atleast_1d(z)]])
        return float(self._interpolator(self.u)(point)[0])

    def v_at(self, x: float, z: Sequence[float]) -> float:
        point = np.array([[x, *np.atleast_1d(z)]])
        return float(self._interpolator(self.v)(point)[0])

    def to_csv(self) -> str:
        """Rows x, z_1[, z_2], v, u with a header"""
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator='\n')
        writer.writerow(['x'] + [f"z_{j}" for j in range(1, self.grid.K + 1)] + ['v', 'u'])
        axes = [self.grid.x_nodes] + [self.grid.z_nodes] * self.grid.K
        for index in itertools.product(*(range(a.size) for a in axes)):
            coords = [axes[d][i] for d, i in enumerate(index)]
            writer.writerow([repr(float(c)) for c in coords] + [repr(float(self.v[index])), repr(float(self.u[index]))])
        return buffer.getvalue()

    def dump_to_file(self, filename: str) -> None:
        with open(filename, 'w', newline='') as f:
            f.write(self.to_csv())
        logger.info(f"PDE field written to {filename}")


def _gaussian_weight(z_nodes: np.ndarray, K: int) -> np.ndarray:
    """exp(-|z|^2 / 2) on the z-grid, shape (Nz,)*K"""
    w = np.exp(-0.5 * z_nodes ** 2)
    return w if K == 1 else np.multiply.outer(w, w)


def _upwind(v: np.ndarray, speed: np.ndarray, axis: int, h: float) -> np.ndarray:
    """speed * d_z v with first-order upwinding and zero far-field values"""
    padded = np.pad(v, [(1, 1) if a == axis else (0, 0) for a in range(v.ndim)])
    centre = [slice(None)] * v.ndim
    lower = list(centre)
    upper = list(centre)
    centre[axis] = slice(1, -1)
    lower[axis] = slice(0, -2)
    upper[axis] = slice(2, None)
    backward = (padded[tuple(centre)] - padded[tuple(lower)]) / h
    forward = (padded[tuple(upper)] - padded[tuple(centre)]) / h
    return np.where(speed > 0, speed * backward, speed * forward)


def solve_reduced_pde(u0: InitialCondition, grid: PdeGrid, t: float, potential: bool = True) -> PdeSolution:
    """
    March v^K from 0 to t with the explicit scheme

    Centered second differences in x with reflecting ends, first-order upwind
    in each z_j along the speed e_j(x), homogeneous Dirichlet beyond the z box.

    Args:
        u0: Initial condition
        grid: Discretization (K <= 2)
        t: Final time
        potential: Drop the e_j transport terms when False (pure heat flow)

    Returns:
        PdeSolution holding v and u = v exp(|z|^2/2)
    """
    if t < 0:
        raise DomainError(f"final time must be >= 0, got {t}")
    x = grid.x_nodes
    z = grid.z_nodes
    K = grid.K
    weight = _gaussian_weight(z, K)
    datum = u0(x)
    shape = (x.size,) + (1,) * K
    if t == 0:
        v = datum.reshape(shape) * weight
        u = np.broadcast_to(datum.reshape(shape), v.shape).copy()
        return PdeSolution(grid=grid, t=0.0, v=v, u=u, steps=0)

    n_steps, dt = grid.steps_for(t)
    speeds = [e.reshape(shape) for e in hermite_functions(K, x)]
    v = datum.reshape(shape) * weight
    logger.info(f"Reduced PDE: K={K}, {x.size}x{z.size}^{K} nodes, {n_steps} steps of {dt:.3e}")
    for _ in range(n_steps):
        padded = np.pad(v, [(1, 1)] + [(0, 0)] * K, mode='edge')
        change = 0.5 * (padded[2:] - 2.0 * v + padded[:-2]) / grid.h_x ** 2
        if potential:
            for j in range(K):
                change -= _upwind(v, speeds[j], axis=j + 1, h=grid.h_z)
        v = v + dt * change
    u = v / weight
    return PdeSolution(grid=grid, t=t, v=v, u=u, steps=n_steps)


def fk_pde_point(cfg: SolverConfig, z: Sequence[float],
                 ensemble: Optional[PathEnsemble] = None) -> Tuple[FieldEstimate, FieldEstimate]:
    """
    Feynman-Kac values of the reduced PDE at (t, x, z)

    v = E^B[u0(B_t^x) exp(-|z - c|^2 / 2)] and u = v exp(|z|^2/2) from the
    same samples.

    Returns:
        (v estimate, u estimate)
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if z.size != cfg.K or cfg.K > MAX_PDE_K:
        raise DomainError(f"fk_pde_point needs K <= {MAX_PDE_K} and len(z) = K, got K={cfg.K}, len={z.size}")
    if cfg.t == 0:
        value = float(cfg.u0(np.array(cfg.x)))
        return FieldEstimate.exact(value * np.exp(-0.5 * z @ z)), FieldEstimate.exact(value)
    ensemble = ensemble if ensemble is not None else build_ensemble(cfg, with_alpha=False)
    c = ensemble.truncated(cfg.K)
    v_samples = ensemble.weights * np.exp(-0.5 * np.sum((z - c) ** 2, axis=1))
    u_samples = ensemble.weights * np.exp(c @ z - 0.5 * np.sum(c ** 2, axis=1))
    return FieldEstimate.from_samples(v_samples), FieldEstimate.from_samples(u_samples)


def probe_points(K: int, x_range: float = 1.0, z_range: float = 1.0, n: int = 5):
    """5 x 5 (x, z) probes for K = 1; z on the diagonal for K = 2"""
    xs = np.linspace(-x_range, x_range, n)
    zs = np.linspace(-z_range, z_range, n)
    return [(float(x), np.full(K, z)) for x in xs for z in zs]


def pde_fk_consistency(cfg: SolverConfig, grid: PdeGrid, rel_tol: float = 0.02,
                       solution: Optional[PdeSolution] = None,
                       probes=None) -> Tuple[bool, Dict[str, Any]]:
    """
    Compare u^K from the PDE with the Feynman-Kac value at probe points

    A probe agrees when |u_pde - u_fk| <= rel_tol |u_fk| + 3 SE; the check
    passes when at least 90% of the probes agree.
    """
    if grid.K != cfg.K:
        raise ConfigurationError(f"PDE grid K={grid.K} differs from solver K={cfg.K}")
    solution = solution or solve_reduced_pde(cfg.u0, grid, cfg.t)
    probes = probes or probe_points(cfg.K)
    rows = []
    ensembles: Dict[float, PathEnsemble] = {}
    for x, z in probes:
        point_cfg = cfg.replace(x=x)
        if x not in ensembles:
            ensembles[x] = build_ensemble(point_cfg, with_alpha=False)
        ensemble = ensembles[x]
        _, u_fk = fk_pde_point(point_cfg, z, ensemble)
        u_pde = solution.u_at(x, z)
        gap = abs(u_pde - u_fk.value)
        rows.append({
            'x': x,
            'z': [float(v) for v in z],
            'pde': u_pde,
            'fk': u_fk.value,
            'std_error': u_fk.std_error,
            'relative_gap': gap / abs(u_fk.value) if u_fk.value else gap,
            'agrees': gap <= rel_tol * abs(u_fk.value) + STANDARD_ERRORS * u_fk.std_error,
        })
    share = float(np.mean([r['agrees'] for r in rows]))
    return share >= 0.9, {'rows': rows, 'agreement': share,
                          'median_gap': float(np.median([abs(r['pde'] - r['fk']) for r in rows]))}


def refinement_study(cfg: SolverConfig, grid: PdeGrid, probes=None) -> Tuple[bool, Dict[str, Any]]:
    """
    Halve the grid steps and require the median PDE-vs-FK gap to shrink by 1.5x
    """
    probes = probes or probe_points(cfg.K)
    coarse_ok, coarse = pde_fk_consistency(cfg, grid, probes=probes)
    fine_ok, fine = pde_fk_consistency(cfg, grid.refined(), probes=probes)
    ratio = coarse['median_gap'] / fine['median_gap'] if fine['median_gap'] > 0 else float('inf')
    return ratio >= 1.5, {'coarse_median_gap': coarse['median_gap'],
                          'fine_median_gap': fine['median_gap'], 'ratio': ratio,
                          'coarse_passed': coarse_ok, 'fine_passed': fine_ok,
                          'coarse_agreement': coarse['agreement']}


def heat_control(u0: InitialCondition, grid: PdeGrid, t: float, x_range: float = 2.0) -> float:
    """Max relative error of the potential-free scheme against P_t u0 on |x| <= x_range"""
    solution = solve_reduced_pde(u0, grid, t, potential=False)
    x = grid.x_nodes
    inside = np.abs(x) <= x_range
    centre = (slice(None),) + (grid.z_nodes.size // 2,) * grid.K
    exact = heat_semigroup(u0, t, x[inside])
    scale = np.maximum(np.abs(exact), 1e-12)
    return float(np.max(np.abs(solution.u[centre][inside] - exact) / scale))

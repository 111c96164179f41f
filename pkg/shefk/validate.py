"""
shefk.validate - Property suite run by `shefk validate`

Every check takes (quick, seed, threads) and returns (passed, details), the
same (success, result) convention the solvers use. `quick` shrinks sample
sizes; the tolerances stay the same.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import eval_hermite

from .config import STANDARD_ERRORS
from .numerics.hermite import (
    HermiteBasisSpec,
    QuadratureSpec,
    hermite_function,
    hermite_functions,
    project_coefficients,
    reconstruct,
)
from .numerics.kernels import (
    chaos_coefficients_mc,
    chaos_kernel_quadrature,
    initial_condition,
    simplex_kernel_mc,
)
from .numerics.paths import BinSpec, TimeGrid, parseval_gaps, sample_path
from .numerics.rng import RngStream, StreamRole
from .numerics.wick import (
    MultiIndex,
    NoiseRealization,
    chaos_eval,
    chaos_eval_many,
    conditional_expectation_mc,
    random_sparse_expansion,
    second_quantization,
    wick_exponential,
    wick_product,
)
from .results import FieldEstimate, RunDocument
from .solvers.fk import (
    SolverConfig,
    build_ensemble,
    chaos_fk_agreement,
    convergence_study,
    empirical_moment,
    exp_psi_moment,
    fk_over_noise,
    mean_field_check,
    moment_fk,
    noise_matrix,
    psi_cauchy_gap,
    psi_conditional_law_check,
    s_transform_residual,
    weak_pairing,
)
from .solvers.pde import PdeGrid, heat_control, refinement_study

logger = logging.getLogger(__name__)

CheckResult = Tuple[bool, Dict[str, Any]]
Check = Callable[[bool, int, Optional[int]], CheckResult]

# Path step of the Parseval check (M = 5000 steps on [0, 1])
PARSEVAL_DT = 2e-4


@dataclass
class CheckReport:
    """Outcome of one named check"""
    name: str
    passed: bool
    details: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {'check': self.name, 'passed': self.passed, 'details': self.details}


def _size(quick: bool, full: int, reduced: int) -> int:
    return reduced if quick else full


def check_hermite_basis(quick: bool, seed: int, threads: Optional[int]) -> CheckResult:
    """Gram matrix of e_1..e_20 and agreement with the Rodrigues normalization"""
    count = 20
    quadrature = QuadratureSpec()
    nodes = quadrature.nodes()
    weights = np.full(nodes.size, quadrature.step)
    weights[[0, -1]] *= 0.5
    basis = hermite_functions(count, nodes)
    gram = (basis * weights) @ basis.T
    gram_error = float(np.max(np.abs(gram - np.eye(count))))

    x = np.linspace(-6.0, 6.0, 121)
    worst = 0.0
    for j in range(1, count + 1):
        n = j - 1
        norm = math.sqrt(2.0 ** n * math.factorial(n) * math.sqrt(math.pi))
        oracle = eval_hermite(n, x) * np.exp(-0.5 * x * x) / norm
        error = np.max(np.abs(hermite_function(j, x) - oracle)) / np.max(np.abs(oracle))
        worst = max(worst, float(error))
    return gram_error < 1e-8 and worst < 1e-10, {'gram_error': gram_error, 'oracle_error': worst}


def check_parseval_local_time(quick: bool, seed: int, threads: Optional[int]) -> CheckResult:
    """
    sum_{j<=K} c_j^2 approaches the histogram alpha_t as K grows

    Every sample contributes dt^2 / Δa to its own bin, so the histogram sits
    t·dt/Δa above alpha_t; the path step keeps that term near 1%.
    """
    K_list = [25, 50, 100, 200, 400]
    n_paths = _size(quick, 100, 40)
    grid = TimeGrid.from_dt(1.0, PARSEVAL_DT)
    bins = BinSpec(width=0.02)
    gaps = np.array([
        parseval_gaps(sample_path(0.0, grid, RngStream(seed, StreamRole.PATHS, i)), K_list, bins)
        for i in range(n_paths)
    ])
    medians = np.median(gaps, axis=0)
    decreasing = bool(np.all(np.diff(medians) < 0))
    return decreasing and medians[-1] < 0.05, {
        'K': K_list,
        'median_gaps': medians.tolist(),
        'n_paths': n_paths,
        'self_pair_bias': grid.horizon * grid.dt / bins.width,
    }


def check_conditional_law(quick: bool, seed: int, threads: Optional[int]) -> CheckResult:
    """Psi^K given the path is N(-sigma^2/2, sigma^2)"""
    cfg = SolverConfig(t=1.0, x=0.0, K=50, seed=seed, threads=threads)
    m = _size(quick, 20000, 10000)
    reports = []
    for i in range(_size(quick, 5, 2)):
        path = sample_path(cfg.x, cfg.grid, RngStream(seed, StreamRole.PATHS, i))
        reports.append(psi_conditional_law_check(cfg, path, m=m, index=i))
    return all(ok for ok, _ in reports), {'paths': [r for _, r in reports]}


def check_mean_field(quick: bool, seed: int, threads: Optional[int]) -> CheckResult:
    """E^W[u^K] = (P_t u0)(x) over a (t, x, K) sweep and for an indicator datum"""
    times = [1.0] if quick else [0.5, 1.0, 2.0]
    points = [0.0, 1.0] if quick else [-1.0, 0.0, 1.0]
    levels = [10] if quick else [10, 25]
    n_paths = _size(quick, 2000, 500)
    n_noise = _size(quick, 200, 100)
    rows = []
    for t in times:
        for x in points:
            for K in levels:
                cfg = SolverConfig(t=t, x=x, K=K, n_paths=n_paths, n_noise=n_noise,
                                   seed=seed, threads=threads)
                ok, report = mean_field_check(cfg)
                rows.append({'t': t, 'x': x, 'K': K, 'u0': 'one', 'passed': ok, **report})
    cfg = SolverConfig(t=1.0, x=0.5, K=10, n_paths=n_paths, n_noise=n_noise, seed=seed,
                       threads=threads, u0=initial_condition('indicator', a=0.0, b=1.0))
    ok, report = mean_field_check(cfg, budget=1e-6)
    rows.append({'t': 1.0, 'x': 0.5, 'K': 10, 'u0': 'indicator', 'passed': ok, **report})
    return all(r['passed'] for r in rows), {'rows': rows}


def check_chaos_vs_fk(quick: bool, seed: int, threads: Optional[int]) -> CheckResult:
    """Chaos expansion equals the Feynman-Kac estimate pointwise on shared paths"""
    cfg = SolverConfig(t=1.0, x=0.0, K=4, degree=10, n_paths=_size(quick, 5000, 2000),
                       seed=seed, threads=threads)
    return chaos_fk_agreement(cfg, n_draws=20)


def check_kernel_projection(quick: bool, seed: int, threads: Optional[int]) -> CheckResult:
    """
    First-order coefficients from paths reconstruct f_1(1, 0; .) from quadrature

    The kernel is projected on e_1..e_J by trapezoid; its own truncation gap
    enters the tolerance.
    """
    one = initial_condition('one')
    J = 30
    anchor = float(chaos_kernel_quadrature(1, 1.0, 0.0, [0.0], one))
    projected = project_coefficients(
        lambda y: chaos_kernel_quadrature(1, 1.0, 0.0, [y], one),
        HermiteBasisSpec(J), QuadratureSpec(-10.0, 10.0, 0.01),
    )
    mc = chaos_coefficients_mc(1.0, 0.0, J, 1, one, n_paths=_size(quick, 4000, 1000),
                               seed=seed, threads=threads)
    values = np.array([mc.x_alpha.coefficient(MultiIndex.unit(j)) for j in range(1, J + 1)])
    errors = np.array([mc.std_errors[MultiIndex.unit(j)] for j in range(1, J + 1)])
    rows = []
    for x1 in (-1.0, 0.0, 1.0):
        kernel = float(chaos_kernel_quadrature(1, 1.0, 0.0, [x1], one))
        basis = hermite_functions(J, x1)
        truncation = abs(kernel - float(reconstruct(projected, x1)))
        tolerance = STANDARD_ERRORS * float(np.abs(basis) @ errors) + truncation + 1e-3
        rebuilt = float(values @ basis)
        rows.append({'x1': x1, 'kernel': kernel, 'reconstruction': rebuilt,
                     'tolerance': tolerance, 'passed': abs(rebuilt - kernel) <= tolerance})
    anchor_ok = abs(anchor - math.sqrt(2.0 / math.pi)) < 1e-6
    return anchor_ok and all(r['passed'] for r in rows), {'anchor': anchor, 'rows': rows}


def check_kernel_anchors(quick: bool, seed: int, threads: Optional[int]) -> CheckResult:
    """f_n(t, x; x..x) = (t/2)^{n/2} / Gamma(n/2 + 1) for u0 = 1"""
    one = initial_condition('one')
    expected = {n: 0.5 ** (n / 2.0) / math.gamma(n / 2.0 + 1.0) for n in (1, 2, 3)}
    found = {
        1: float(chaos_kernel_quadrature(1, 1.0, 0.0, [0.0], one)),
        2: float(chaos_kernel_quadrature(2, 1.0, 0.0, [0.0, 0.0], one)),
        3: simplex_kernel_mc(3, 1.0, 0.0, [0.0, 0.0, 0.0], one,
                             n_samples=_size(quick, 200000, 20000), seed=seed).value,
    }
    gaps = {n: abs(found[n] - expected[n]) for n in expected}
    return all(g < 1e-6 for g in gaps.values()), {'expected': expected, 'found': found}


def check_second_quantization(quick: bool, seed: int, threads: Optional[int]) -> CheckResult:
    """Gamma(A_Kp) X equals E[X | Z_1..Z_Kp] by resampling the tail"""
    n_expansions = _size(quick, 25, 10)
    n_points = _size(quick, 20, 10)
    n_samples = _size(quick, 20000, 5000)
    hits, total = 0, 0
    for e in range(n_expansions):
        rng = RngStream(seed, StreamRole.AUXILIARY, 100 + e).generator
        K_big = int(rng.integers(2, 7))
        N = int(rng.integers(1, 5))
        Kp = int(rng.integers(1, K_big))
        X = random_sparse_expansion(K_big, N, n_terms=8, rng=rng)
        projected = second_quantization(X, Kp)
        for p in range(n_points):
            head = rng.standard_normal(Kp)
            index = e * n_points + p
            estimate = conditional_expectation_mc(lambda rows: chaos_eval_many(X, rows), head,
                                                  K_big, n_samples=n_samples, seed=seed, index=index)
            exact = chaos_eval(projected, NoiseRealization(head))
            hits += estimate.agrees_with(exact, STANDARD_ERRORS, 1e-9 * (1.0 + abs(exact)))
            total += 1
    share = hits / total
    return share >= 0.95, {'agreement': share, 'comparisons': total}


def check_wick_algebra(quick: bool, seed: int, threads: Optional[int]) -> CheckResult:
    """Commutativity and associativity of the Wick product; the Wick exponential tail"""
    rng = RngStream(seed, StreamRole.AUXILIARY, 50).generator
    worst = 0.0
    for _ in range(_size(quick, 20, 5)):
        X, Y, W = (random_sparse_expansion(3, 2, 5, rng) for _ in range(3))
        XY, YX = wick_product(X, Y), wick_product(Y, X)
        left, right = wick_product(XY, W), wick_product(X, wick_product(Y, W))
        for a, b in ((XY, YX), (left, right)):
            keys = set(a.terms) | set(b.terms)
            worst = max([worst] + [abs(a.coefficient(k) - b.coefficient(k)) for k in keys])
    c = np.array([0.6, -0.3, 0.2])
    expansion = wick_exponential(c, 12)
    z = noise_matrix(3, seed, 50)
    exact = np.exp(z @ c - 0.5 * c @ c)
    exp_gap = float(np.max(np.abs(chaos_eval_many(expansion, z) - exact)))
    return worst < 1e-12 and exp_gap < 1e-6, {'product_error': worst, 'exponential_gap': exp_gap}


def check_moment_duality(quick: bool, seed: int, threads: Optional[int]) -> CheckResult:
    """
    Moment formula against the debiased W-side moment, q = 2 and q = 1

    The W-side value is a pair average over one set of paths; its B-side
    variance is at most twice that of the formula's independent pairs.
    """
    cfg = SolverConfig(t=1.0, x=0.0, K=_size(quick, 200, 50), n_paths=_size(quick, 4000, 1000),
                       n_noise=_size(quick, 10000, 4000), seed=seed, threads=threads)
    formula = moment_fk(2, cfg)
    ensemble = build_ensemble(cfg, with_alpha=False)
    direct = empirical_moment(2, cfg, ensemble)
    first = empirical_moment(1, cfg, ensemble)
    se = math.sqrt(3.0 * formula.std_error ** 2 + direct.std_error ** 2)
    second_ok = abs(formula.value - direct.value) <= STANDARD_ERRORS * se
    first_ok = first.agrees_with(1.0, STANDARD_ERRORS)
    return second_ok and first_ok, {'moment_formula': formula.to_dict(),
                                    'empirical': direct.to_dict(), 'first_moment': first.to_dict(),
                                    'std_error': se}


def check_pde_crosscheck(quick: bool, seed: int, threads: Optional[int]) -> CheckResult:
    """Reduced PDE against Feynman-Kac at K = 1, with a refinement study"""
    cfg = SolverConfig(t=0.5, x=0.0, K=1, n_paths=_size(quick, 20000, 5000),
                       seed=seed, threads=threads)
    grid = PdeGrid(K=1)
    control = heat_control(cfg.u0, grid, cfg.t)
    ok, report = refinement_study(cfg, grid)
    report['heat_control'] = control
    return control <= 5e-3 and ok and report['coarse_passed'], report


def check_s_transform(quick: bool, seed: int, threads: Optional[int]) -> CheckResult:
    """Mild-equation residual of the S-transform for xi = 0 and xi = 0.5 e_1"""
    cfg = SolverConfig(t=1.0, x=0.0, K=1, n_paths=_size(quick, 4000, 1000), seed=seed, threads=threads)
    time_nodes, space_nodes = (6, 21) if quick else (12, 41)
    flat = s_transform_residual([], cfg, time_nodes, space_nodes)
    bumped = s_transform_residual([0.5], cfg, time_nodes, space_nodes)
    flat_ok = flat.max_abs <= flat.mean_budget
    return flat_ok and bumped.passed, {'xi_zero': flat.summary(), 'xi_half_e1': bumped.summary()}


def check_convergence_in_k(quick: bool, seed: int, threads: Optional[int]) -> CheckResult:
    """
    Median successive gaps |u^{2K} - u^K| shrink along K

    200 noise draws in both modes; a step may rise within the bootstrap
    error of the medians.
    """
    cfg = SolverConfig(t=1.0, x=0.0, n_paths=_size(quick, 4000, 2000), seed=seed, threads=threads)
    study = convergence_study(cfg, [25, 50, 100, 200], n_draws=200)
    medians = study.median_gaps()
    return study.gaps_decrease(seed), {
        'K': study.K_list,
        'median_gaps': medians.tolist(),
        'median_gap_errors': study.median_gap_errors(seed).tolist(),
    }


def check_l2_identities(quick: bool, seed: int, threads: Optional[int]) -> CheckResult:
    """Cauchy gap of Psi^K, the exponential moment of Psi^K and the weak pairing"""
    cfg = SolverConfig(t=1.0, x=0.0, K=20, n_paths=_size(quick, 4000, 1000),
                       n_noise=_size(quick, 400, 200), seed=seed, threads=threads)
    ensemble = build_ensemble(cfg, with_alpha=False)
    cauchy_ok, cauchy = psi_cauchy_gap(cfg, 5, 20, ensemble)
    moment_ok, moment = exp_psi_moment(2.0, cfg, ensemble)
    pairing_ok, pairing = weak_pairing([0.4, -0.2], cfg, ensemble)
    return cauchy_ok and moment_ok and pairing_ok, {'cauchy_gap': cauchy, 'exp_moment': moment,
                                                    'weak_pairing': pairing}


def check_determinism(quick: bool, seed: int, threads: Optional[int]) -> CheckResult:
    """The same run on one and on several workers renders byte-identical JSON"""
    rendered = []
    for workers in (1, max(2, threads or 4)):
        cfg = SolverConfig(t=1.0, x=0.0, K=10, n_paths=600, n_noise=8, seed=seed,
                           threads=workers, batch_size=128)
        ensemble = build_ensemble(cfg)
        estimates, errors = fk_over_noise(ensemble, cfg.K, noise_matrix(cfg.K, seed, cfg.n_noise),
                                          threads=workers)
        document = RunDocument.create(cfg.to_dict(), 'validate')
        for i, (value, se) in enumerate(zip(estimates, errors)):
            document.add_row(draw=i, estimate=value, std_error=se, n=cfg.n_paths)
        document.diagnostics['alpha_hist_mean'] = FieldEstimate.from_samples(ensemble.alpha_hist).value
        rendered.append(document.to_json())
    return rendered[0] == rendered[1], {'bytes': len(rendered[0])}


CHECKS: Dict[str, Check] = {
    'hermite-basis': check_hermite_basis,
    'parseval-local-time': check_parseval_local_time,
    'conditional-law': check_conditional_law,
    'mean-field': check_mean_field,
    'chaos-vs-fk': check_chaos_vs_fk,
    'kernel-projection': check_kernel_projection,
    'kernel-anchors': check_kernel_anchors,
    'second-quantization': check_second_quantization,
    'wick-algebra': check_wick_algebra,
    'moment-duality': check_moment_duality,
    'pde-crosscheck': check_pde_crosscheck,
    's-transform': check_s_transform,
    'convergence-in-k': check_convergence_in_k,
    'l2-identities': check_l2_identities,
    'determinism': check_determinism,
}


def run_check(name: str, quick: bool = False, seed: int = 0,
              threads: Optional[int] = None) -> CheckReport:
    """Run one registered check; an exception counts as a failure"""
    try:
        check = CHECKS[name]
    except KeyError:
        raise KeyError(f"Unknown check {name!r}; choose from {sorted(CHECKS)}")
    logger.info(f"Running check {name}")
    try:
        passed, details = check(quick, seed, threads)
    except Exception as e:
        logger.error(f"Check {name} raised: {e}")
        return CheckReport(name=name, passed=False, details={'error': str(e)})
    if not passed:
        logger.warning(f"Check {name} failed: {details}")
    return CheckReport(name=name, passed=bool(passed), details=details)


def run_suite(quick: bool = False, seed: int = 0, threads: Optional[int] = None,
              names: Optional[Sequence[str]] = None) -> List[CheckReport]:
    """
    Run the property suite

    Args:
        quick: Reduced sample sizes
        seed: Global seed shared by every check
        threads: Worker count
        names: Subset of CHECKS (default: all, in registry order)

    Returns:
        One report per check
    """
    selected = list(names) if names else list(CHECKS)
    reports = [run_check(name, quick, seed, threads) for name in selected]
    failed = [r.name for r in reports if not r.passed]
    logger.info(f"{len(reports) - len(failed)}/{len(reports)} checks passed"
                + (f"; failed: {', '.join(failed)}" if failed else ''))
    return reports

"""
shefk.solvers - Feynman-Kac Monte Carlo solvers and the reduced-PDE cross-check
"""

from .fk import (
    ConvergenceStudy,
    PathEnsemble,
    PsiSample,
    SolverConfig,
    build_ensemble,
    convergence_study,
    empirical_moment,
    moment_fk,
    psi_conditional_law_check,
    s_transform_residual,
    solve_fk_limit,
    solve_fk_truncated,
)
from .pde import PdeGrid, PdeSolution, fk_pde_point, solve_reduced_pde

__all__ = [
    'ConvergenceStudy',
    'PathEnsemble',
    'PsiSample',
    'SolverConfig',
    'build_ensemble',
    'convergence_study',
    'empirical_moment',
    'moment_fk',
    'psi_conditional_law_check',
    's_transform_residual',
    'solve_fk_limit',
    'solve_fk_truncated',
    'PdeGrid',
    'PdeSolution',
    'fk_pde_point',
    'solve_reduced_pde',
]

"""
shefk.numerics - Hermite basis, Brownian paths, Wick calculus and chaos kernels
"""

from .hermite import (
    HermiteBasisSpec,
    QuadratureSpec,
    hermite_function,
    hermite_functions,
    hermite_polynomial_prob,
    project_coefficients,
    reconstruct,
)
from .rng import RngStream, StreamRole
from .paths import (
    BinSpec,
    BrownianPath,
    PathFunctionals,
    TimeGrid,
    alpha,
    basis_time_integrals,
    frozen_path,
    local_time_histogram,
    path_functionals,
    sample_path,
    sample_paths,
)
from .wick import (
    ChaosExpansion,
    MultiIndex,
    NoiseRealization,
    chaos_eval,
    conditional_expectation_mc,
    multi_indices,
    sample_noise,
    second_quantization,
    wick_exponential,
    wick_polynomial,
    wick_product,
)
from .kernels import (
    InitialCondition,
    KernelCoefficients,
    chaos_coefficients_mc,
    chaos_kernel_quadrature,
    heat_kernel,
    heat_semigroup,
    initial_condition,
    projected_kernel_coefficient,
)

__all__ = [
    'HermiteBasisSpec',
    'QuadratureSpec',
    'hermite_function',
    'hermite_functions',
    'hermite_polynomial_prob',
    'project_coefficients',
    'reconstruct',
    'RngStream',
    'StreamRole',
    'BinSpec',
    'BrownianPath',
    'PathFunctionals',
    'TimeGrid',
    'alpha',
    'basis_time_integrals',
    'frozen_path',
    'local_time_histogram',
    'path_functionals',
    'sample_path',
    'sample_paths',
    'ChaosExpansion',
    'MultiIndex',
    'NoiseRealization',
    'chaos_eval',
    'conditional_expectation_mc',
    'multi_indices',
    'sample_noise',
    'second_quantization',
    'wick_exponential',
    'wick_polynomial',
    'wick_product',
    'InitialCondition',
    'KernelCoefficients',
    'chaos_coefficients_mc',
    'chaos_kernel_quadrature',
    'heat_kernel',
    'heat_semigroup',
    'initial_condition',
    'projected_kernel_coefficient',
]

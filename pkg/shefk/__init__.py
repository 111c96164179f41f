"""
shefk - Feynman-Kac, Wiener chaos and reduced-PDE numerics for the
1-D stochastic heat equation driven by space-only white noise
"""

import os
import logging
from pathlib import Path
from dotenv import load_dotenv

__version__ = '0.1.0'

# Configure logging
logging.basicConfig(
    level=os.environ.get('LOG_LEVEL', 'INFO'),
    format=os.environ.get(
        'LOG_FORMAT',
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
)
logger = logging.getLogger(__name__)


def load_env_files():
    """Load environment variables from .env files in project directories."""
    # Try to load from current directory
    if load_dotenv(dotenv_path='.env'):
        logger.debug('Loaded .env from current directory')

    # Try to load from the project root
    parent_env = Path(__file__).parent.parent / '.env'
    if parent_env.exists() and load_dotenv(dotenv_path=parent_env):
        logger.debug(f'Loaded .env from {parent_env}')


# Load environment variables before config reads them
load_env_files()

from shefk.errors import ConfigurationError, DomainError  # noqa: E402
from shefk.results import FieldEstimate, RunDocument  # noqa: E402
from shefk.numerics.hermite import (  # noqa: E402
    hermite_function,
    hermite_polynomial_prob,
    project_coefficients,
)
from shefk.numerics.wick import ChaosExpansion, MultiIndex  # noqa: E402
from shefk.solvers.fk import (  # noqa: E402
    SolverConfig,
    solve_fk_limit,
    solve_fk_truncated,
)

__all__ = [
    'ConfigurationError',
    'DomainError',
    'FieldEstimate',
    'RunDocument',
    'hermite_function',
    'hermite_polynomial_prob',
    'project_coefficients',
    'ChaosExpansion',
    'MultiIndex',
    'SolverConfig',
    'solve_fk_truncated',
    'solve_fk_limit',
]

"""
Configuration module for shefk
Loads numerical defaults from constants.json and environment variables
"""

import json
import logging
import os
from pathlib import Path
from typing import Any, Dict

logger = logging.getLogger(__name__)

# Configuration directory
CONFIG_DIR = Path(__file__).parent
ENV_PREFIX = "SHEFK_"

# ====== Function Definitions ======

_constants_cache = None


def _load_constants() -> Dict[str, Any]:
    """Load constants from JSON file"""
    global _constants_cache
    if _constants_cache is not None:
        return _constants_cache
    try:
        file_path = CONFIG_DIR / 'constants.json'
        if file_path.exists():
            with open(file_path, 'r') as f:
                _constants_cache = json.load(f)
                return _constants_cache
    except Exception as e:
        logger.warning(f"Failed to load constants: {e}")
    _constants_cache = {}
    return _constants_cache


def _convert(value: str, default: Any) -> Any:
    """Convert an environment string to the type of the default"""
    if isinstance(default, bool):
        return value.lower() in ('true', '1', 't', 'y', 'yes')
    if isinstance(default, int):
        try:
            return int(value)
        except (ValueError, TypeError):
            logger.warning(f"Ignoring non-integer value {value!r}")
            return default
    if isinstance(default, float):
        try:
            return float(value)
        except (ValueError, TypeError):
            logger.warning(f"Ignoring non-numeric value {value!r}")
            return default
    return value


def get_section(name: str) -> Dict[str, Any]:
    """Get one section of constants.json (empty dict when absent)"""
    return dict(_load_constants().get(name, {}))


def get_config_value(key: str, default: Any = None, section: str = 'solver') -> Any:
    """
    Get a configuration value with priority:
    1. Environment variable SHEFK_<KEY>
    2. JSON constants (given section)
    3. Default value
    """
    env_key = f"{ENV_PREFIX}{key.upper()}"
    value = os.environ.get(env_key)
    if value is not None:
        return _convert(value, default)

    constants = get_section(section)
    if key in constants:
        return constants[key]

    return default


def default_threads() -> int:
    """Worker count: SHEFK_THREADS or the available parallelism"""
    return int(get_config_value('threads', os.cpu_count() or 1))


# ====== Module-level Constants ======

# Hermite projection quadrature
_quadrature = get_section('quadrature')
QUADRATURE_LOWER = float(_quadrature.get('lower', -30.0))
QUADRATURE_UPPER = float(_quadrature.get('upper', 30.0))
QUADRATURE_STEP = float(_quadrature.get('step', 1e-3))

# Heat semigroup quadrature
_semigroup = get_section('semigroup')
GAUSS_NODES = int(_semigroup.get('gauss_nodes', 200))
WINDOW_SIGMAS = float(_semigroup.get('window_sigmas', 12.0))
LEGENDRE_NODES = int(_semigroup.get('legendre_nodes', 16))

# Chaos kernel quadrature
_kernels = get_section('kernels')
SIMPSON_NODES = int(_kernels.get('simpson_nodes', 2001))
POLAR_NODES = int(_kernels.get('polar_nodes', 201))
NESTED_NODES = int(_kernels.get('nested_nodes', 40))
KERNEL_TIME_NODES = int(_kernels.get('time_nodes', 41))
SIMPLEX_SAMPLES = int(_kernels.get('simplex_samples', 200000))
MAX_CHAOS_TERMS = int(_kernels.get('max_chaos_terms', 200000))

# Path discretization
_paths = get_section('paths')
DEFAULT_DT = float(get_config_value('dt', _paths.get('dt', 1e-3), section='paths'))
DEFAULT_BIN_WIDTH = float(get_config_value('bins', _paths.get('bin_width', 0.02), section='paths'))
DEFAULT_BIN_PADDING = int(_paths.get('bin_padding', 3))
DEFAULT_BATCH_SIZE = int(get_config_value('batch_size', _paths.get('batch_size', 256), section='paths'))

# Solver defaults
DEFAULT_T = float(get_config_value('t', 1.0))
DEFAULT_X = float(get_config_value('x', 0.0))
DEFAULT_K = int(get_config_value('k', 50))
DEFAULT_PATHS = int(get_config_value('paths', 20000))
DEFAULT_SAMPLES = int(get_config_value('samples', 200))
DEFAULT_DEGREE = int(get_config_value('degree', 12))
DEFAULT_Q = int(get_config_value('q', 2))
DEFAULT_SEED = int(get_config_value('seed', 7))

# The chaos command enumerates every |alpha| <= degree over K components
_chaos = get_section('chaos')
CHAOS_K = int(_chaos.get('k', 10))
CHAOS_DEGREE = int(_chaos.get('degree', 4))

# Reduced PDE box
_pde = get_section('pde')
PDE_X_MAX = float(_pde.get('x_max', 8.0))
PDE_Z_MAX = float(_pde.get('z_max', 6.0))
PDE_H_X = float(_pde.get('h_x', 0.05))
PDE_H_Z = float(_pde.get('h_z', 0.05))
PDE_SAFETY = float(_pde.get('safety', 0.9))

# S-transform residual grid
_stransform = get_section('stransform')
STRANSFORM_TIME_NODES = int(_stransform.get('time_nodes', 12))
STRANSFORM_SPACE_NODES = int(_stransform.get('space_nodes', 41))
STRANSFORM_SPACE_MAX = float(_stransform.get('space_max', 6.0))

# Statistical acceptance
STANDARD_ERRORS = float(get_section('tolerances').get('standard_errors', 3.0))

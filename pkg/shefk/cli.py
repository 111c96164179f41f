"""
shefk.cli - Command-line interface for the Feynman-Kac, chaos and PDE studies
"""

import argparse
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from . import __version__
from .config import (
    CHAOS_DEGREE,
    CHAOS_K,
    DEFAULT_BATCH_SIZE,
    DEFAULT_BIN_WIDTH,
    DEFAULT_DEGREE,
    DEFAULT_DT,
    DEFAULT_K,
    DEFAULT_PATHS,
    DEFAULT_Q,
    DEFAULT_SAMPLES,
    DEFAULT_SEED,
    DEFAULT_T,
    DEFAULT_X,
    MAX_CHAOS_TERMS,
    PDE_H_X,
    PDE_H_Z,
    PDE_X_MAX,
    PDE_Z_MAX,
)
from .errors import ConfigurationError, DomainError
from .numerics.kernels import InitialCondition, chaos_coefficients_mc, heat_semigroup, initial_condition
from .numerics.paths import parseval_study
from .results import FieldEstimate, RunDocument
from .solvers.fk import (
    SolverConfig,
    build_ensemble,
    convergence_study,
    empirical_moment,
    fk_over_noise,
    moment_fk,
    noise_matrix,
    s_transform_residual,
)
from .solvers.pde import PdeGrid, heat_control, pde_fk_consistency, solve_reduced_pde
from .validate import run_suite

logger = logging.getLogger(__name__)

COMMANDS = ('solve', 'solve-limit', 'converge-k', 'chaos', 'moments', 'pde-check',
            'stransform', 'localtime', 'validate')

# Keys that never change results; left out of the stored config and its hash
RUNTIME_KEYS = ('threads', 'out', 'format')

REQUIRED_KEYS = {
    'converge-k': ('k_list',),
    'localtime': ('k_list',),
    'stransform': ('xi',),
}

# Defaults that replace the solver defaults for one command
COMMAND_DEFAULTS = {
    'chaos': {'k': CHAOS_K, 'degree': CHAOS_DEGREE},
}

SEED_LIMIT = 1 << 64


@dataclass
class RunConfig:
    """
    Flat run configuration; keys match the JSON config file and the flags

    Precedence: constants/environment < --config file < command-line flags.
    """
    command: str = 'solve'
    t: float = DEFAULT_T
    x: float = DEFAULT_X
    k: int = DEFAULT_K
    paths: int = DEFAULT_PATHS
    samples: int = DEFAULT_SAMPLES
    dt: float = DEFAULT_DT
    bins: float = DEFAULT_BIN_WIDTH
    degree: int = DEFAULT_DEGREE
    seed: int = DEFAULT_SEED
    q: int = DEFAULT_Q
    u0: str = 'one'
    k_list: Optional[List[int]] = None
    xi: Optional[List[float]] = None
    quick: bool = False
    hx: float = PDE_H_X
    hz: float = PDE_H_Z
    x_max: float = PDE_X_MAX
    z_max: float = PDE_Z_MAX
    batch_size: int = DEFAULT_BATCH_SIZE
    threads: Optional[int] = None
    out: Optional[str] = None
    format: str = 'csv'

    @classmethod
    def keys(cls) -> List[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_layers(cls, *layers: Dict[str, Any]) -> 'RunConfig':
        """
        Merge key/value layers, later layers winning

        Raises:
            ConfigurationError: Unknown key, bad value or missing required keys
        """
        known = set(cls.keys())
        values: Dict[str, Any] = {}
        command = next((layer['command'] for layer in reversed(layers) if layer.get('command')), None)
        for layer in (COMMAND_DEFAULTS.get(command, {}),) + layers:
            for key, value in layer.items():
                if key not in known:
                    raise ConfigurationError(f"Unknown configuration key '{key}'")
                if value is not None:
                    values[key] = _coerce(key, value)
        run = cls(**values)
        run.check()
        return run

    def check(self) -> None:
        """Validate command, format, seed, the values the command uses and its required keys"""
        if self.command not in COMMANDS:
            raise ConfigurationError(f"Invalid value for key 'command': {self.command!r}")
        if self.format not in ('csv', 'json'):
            raise ConfigurationError(f"Invalid value for key 'format': {self.format!r} (csv or json)")
        if not 0 <= self.seed < SEED_LIMIT:
            raise ConfigurationError(f"Invalid value for key 'seed': {self.seed} is not a 64-bit unsigned integer")
        if self.threads is not None and self.threads < 1:
            raise ConfigurationError(f"Invalid value for key 'threads': {self.threads}")
        missing = [key for key in REQUIRED_KEYS.get(self.command, ()) if getattr(self, key) is None]
        if missing:
            raise ConfigurationError(f"Missing required keys for {self.command}: {', '.join(missing)}")
        self._check_values()

    def _check_values(self) -> None:
        if self.batch_size < 1:
            raise ConfigurationError(f"Invalid value for key 'batch_size': {self.batch_size}")
        if self.command == 'moments' and self.q < 1:
            raise ConfigurationError(f"Invalid value for key 'q': {self.q} (moment order must be >= 1)")
        if self.k_list is not None and self.command in ('converge-k', 'localtime'):
            if not self.k_list or min(self.k_list) < 1:
                raise ConfigurationError(f"Invalid value for key 'k_list': {self.k_list} (K values must be >= 1)")
            if self.command == 'converge-k' and any(b < a for a, b in zip(self.k_list, self.k_list[1:])):
                raise ConfigurationError(f"Invalid value for key 'k_list': {self.k_list} (must be nondecreasing)")
        if self.command == 'chaos':
            terms = math.comb(max(self.k, 0) + max(self.degree, 0), max(self.degree, 0))
            if terms > MAX_CHAOS_TERMS:
                raise ConfigurationError(
                    f"Invalid value for key 'degree': K={self.k}, degree={self.degree} gives {terms} "
                    f"multi-indices, limit {MAX_CHAOS_TERMS}"
                )

    def to_dict(self) -> Dict[str, Any]:
        """Stored config: everything that determines the results"""
        return {k: v for k, v in asdict(self).items() if k not in RUNTIME_KEYS}

    def initial_condition(self) -> InitialCondition:
        """u0 from 'name' or 'name:key=value,key=value'"""
        name, _, spec = self.u0.partition(':')
        params: Dict[str, float] = {}
        try:
            for item in filter(None, spec.split(',')):
                key, _, value = item.partition('=')
                params[key.strip()] = float(value)
            return initial_condition(name.strip(), **params)
        except (ValueError, TypeError, DomainError) as e:
            raise ConfigurationError(f"Invalid value for key 'u0': {self.u0!r} ({e})")

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            t=self.t, x=self.x, K=self.k, n_paths=self.paths, n_noise=self.samples,
            dt=self.dt, bin_width=self.bins, degree=self.degree, seed=self.seed,
            u0=self.initial_condition(), threads=self.threads, batch_size=self.batch_size,
        )

    def pde_grid(self) -> PdeGrid:
        return PdeGrid(K=self.k, x_max=self.x_max, z_max=self.z_max, h_x=self.hx, h_z=self.hz)


_INT_KEYS = {'k', 'paths', 'samples', 'degree', 'seed', 'q', 'threads', 'batch_size'}
_FLOAT_KEYS = {'t', 'x', 'dt', 'bins', 'hx', 'hz', 'x_max', 'z_max'}


def _split(value: Any) -> List[Any]:
    if isinstance(value, str):
        return [v for v in value.replace(' ', '').split(',') if v]
    if isinstance(value, (list, tuple)):
        return list(value)
    return [value]


def _coerce(key: str, value: Any) -> Any:
    """Convert a config-file or flag value to the field's type"""
    try:
        if key in _INT_KEYS:
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ValueError(f"{value!r} is not an integer")
            return int(value)
        if key in _FLOAT_KEYS:
            if isinstance(value, bool):
                raise ValueError(f"{value!r} is not a number")
            return float(value)
        if key == 'k_list':
            return [int(v) for v in _split(value)]
        if key == 'xi':
            return [float(v) for v in _split(value)]
        if key == 'quick':
            if isinstance(value, str):
                return value.lower() in ('true', '1', 'yes')
            return bool(value)
        if not isinstance(value, str):
            raise ValueError(f"{value!r} is not a string")
        return value
    except (ValueError, TypeError) as e:
        raise ConfigurationError(f"Invalid value for key '{key}': {e}")


def load_config_file(filename: str) -> Dict[str, Any]:
    """Read a flat key/value JSON config file"""
    try:
        with open(filename, 'r') as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigurationError(f"Cannot read config file {filename}: {e}")
    if not isinstance(data, dict):
        raise ConfigurationError(f"Config file {filename} must hold a JSON object")
    nested = [key for key, value in data.items() if isinstance(value, dict)]
    if nested:
        raise ConfigurationError(f"Config file keys must be flat; nested key '{nested[0]}'")
    return data


def setup_parser() -> argparse.ArgumentParser:
    """
    Set up the argument parser for the CLI

    Returns:
        Configured ArgumentParser instance
    """
    parser = argparse.ArgumentParser(
        prog='shefk',
        description='Stochastic heat equation: Feynman-Kac, Wiener chaos and reduced-PDE studies',
    )
    parser.add_argument('--version', action='version', version=f'shefk {__version__}')

    # Options shared by every command; None means "not given" so the
    # config file and the defaults show through
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--t', type=float, help=f'Time horizon (default: {DEFAULT_T})')
    common.add_argument('--x', type=float, help=f'Space point (default: {DEFAULT_X})')
    common.add_argument('--k', type=int, help=f'Noise truncation level K (default: {DEFAULT_K})')
    common.add_argument('--paths', type=int, help=f'Brownian paths (default: {DEFAULT_PATHS})')
    common.add_argument('--samples', type=int, help=f'Noise draws (default: {DEFAULT_SAMPLES})')
    common.add_argument('--dt', type=float, help=f'Path time step (default: {DEFAULT_DT})')
    common.add_argument('--bins', type=float, help=f'Local-time bin width (default: {DEFAULT_BIN_WIDTH})')
    common.add_argument('--degree', type=int, help=f'Chaos degree bound N (default: {DEFAULT_DEGREE})')
    common.add_argument('--seed', type=int, help=f'64-bit unsigned seed (default: {DEFAULT_SEED})')
    common.add_argument('--q', type=int, help=f'Moment order (default: {DEFAULT_Q})')
    common.add_argument('--u0', help="Initial condition, e.g. one, indicator:a=0,b=1 (default: one)")
    common.add_argument('--k-list', dest='k_list', help='Comma-separated K values')
    common.add_argument('--xi', help='Comma-separated coefficients <e_j, xi>')
    common.add_argument('--hx', type=float, help=f'PDE space step (default: {PDE_H_X})')
    common.add_argument('--hz', type=float, help=f'PDE z step (default: {PDE_H_Z})')
    common.add_argument('--x-max', dest='x_max', type=float, help=f'PDE x half-width (default: {PDE_X_MAX})')
    common.add_argument('--z-max', dest='z_max', type=float, help=f'PDE z half-width (default: {PDE_Z_MAX})')
    common.add_argument('--quick', action='store_true', default=None,
                        help='Reduced sample sizes (validate)')
    common.add_argument('--batch-size', dest='batch_size', type=int,
                        help=f'Paths per worker batch (default: {DEFAULT_BATCH_SIZE})')
    common.add_argument('--threads', type=int, help='Worker threads (default: available parallelism)')
    common.add_argument('--out', '-o', help='Output file (default: stdout)')
    common.add_argument('--format', '-f', choices=['csv', 'json'], help='Output format (default: csv)')
    common.add_argument('--config', '-c', help='Flat JSON config file')
    common.add_argument('--replay', help='Rerun the config stored in a JSON result and compare')
    common.add_argument('--verbose', '-v', action='store_true', help='Enable verbose output')

    # Subparsers for different commands
    subparsers = parser.add_subparsers(dest='command', help='Command to execute')
    subparsers.add_parser('solve', parents=[common], help='u^K(t, x) at noise draws')
    subparsers.add_parser('solve-limit', parents=[common], help='u(t, x) with the local-time drift')
    subparsers.add_parser('converge-k', parents=[common], help='u^K along a K list (prefix-nested noise)')
    subparsers.add_parser('chaos', parents=[common], help='Chaos coefficients x_alpha')
    subparsers.add_parser('moments', parents=[common], help='Moment formula against W-side sampling')
    subparsers.add_parser('pde-check', parents=[common], help='Reduced PDE against Feynman-Kac')
    subparsers.add_parser('stransform', parents=[common], help='S-transform mild-equation residual')
    subparsers.add_parser('localtime', parents=[common], help='Parseval local-time identity')
    subparsers.add_parser('validate', parents=[common], help='Run the property suite')

    return parser


def _estimate_row(run: RunConfig, estimate: FieldEstimate, **extra: Any) -> Dict[str, Any]:
    return {'t': run.t, 'x': run.x, 'K': run.k, **extra, 'estimate': estimate.value,
            'std_error': estimate.std_error, 'n': estimate.n}


def _draws(run: RunConfig, limit: bool) -> Tuple[List[FieldEstimate], Dict[str, Any]]:
    """u^K (or the limit) at noise draws 0..samples-1 on shared paths"""
    cfg = run.solver_config()
    if cfg.t == 0:
        exact = FieldEstimate.exact(float(cfg.u0(np.array(cfg.x))))
        return [exact] * run.samples, {}
    ensemble = build_ensemble(cfg, with_alpha=limit)
    noise = noise_matrix(cfg.K, cfg.seed, run.samples)
    estimates, errors = fk_over_noise(ensemble, cfg.K, noise, limit=limit, threads=cfg.threads)
    diagnostics = {
        'sigma2_mean': float(np.mean(ensemble.sigma2(cfg.K))),
        'noise_average': FieldEstimate.from_samples(estimates).to_dict(),
        'semigroup': float(heat_semigroup(cfg.u0, cfg.t, cfg.x)),
    }
    if limit:
        diagnostics['alpha_hist_mean'] = float(np.mean(ensemble.alpha_hist))
    results = [FieldEstimate(value=float(v), std_error=float(s), n=ensemble.n_paths)
               for v, s in zip(estimates, errors)]
    return results, diagnostics


def handle_solve(run: RunConfig, document: RunDocument) -> int:
    """Handle the solve and solve-limit commands"""
    estimates, diagnostics = _draws(run, limit=run.command == 'solve-limit')
    for i, estimate in enumerate(estimates):
        document.add_row(**_estimate_row(run, estimate, draw=i))
    document.diagnostics.update(diagnostics)
    return 0


def handle_converge_k(run: RunConfig, document: RunDocument) -> int:
    """Handle the converge-k command"""
    study = convergence_study(run.solver_config(), run.k_list, n_draws=run.samples)
    for row in study.rows():
        document.add_row(t=run.t, x=run.x, **row)
    document.diagnostics['n_paths'] = study.n_paths
    return 0


def handle_chaos(run: RunConfig, document: RunDocument) -> int:
    """Handle the chaos command"""
    cfg = run.solver_config()
    coefficients = chaos_coefficients_mc(cfg.t, cfg.x, cfg.K, cfg.degree, cfg.u0, cfg.n_paths,
                                         dt=cfg.dt, seed=cfg.seed, threads=cfg.threads,
                                         batch_size=cfg.batch_size)
    for alpha, value in coefficients.x_alpha.items():
        estimate = coefficients.estimate(alpha)
        document.add_row(t=run.t, x=run.x, K=run.k, alpha=alpha.to_text(), order=alpha.order,
                         estimate=value, std_error=estimate.std_error, n=estimate.n)
    document.diagnostics.update({'terms': len(coefficients.x_alpha), 'tail': coefficients.tail,
                                 'tail_mass': coefficients.x_alpha.tail_mass})
    if run.out:
        coefficients.dump_to_files(str(Path(run.out).with_suffix('')) + '.coefficients')
    return 0


def handle_moments(run: RunConfig, document: RunDocument) -> int:
    """Handle the moments command"""
    cfg = run.solver_config()
    if run.q >= 2:
        document.add_row(**_estimate_row(run, moment_fk(run.q, cfg), method='moment-formula', q=run.q))
    document.add_row(**_estimate_row(run, empirical_moment(run.q, cfg), method='empirical', q=run.q))
    if run.q == 1:
        document.diagnostics['semigroup'] = float(heat_semigroup(cfg.u0, cfg.t, cfg.x))
    return 0


def handle_pde_check(run: RunConfig, document: RunDocument) -> int:
    """Handle the pde-check command"""
    cfg = run.solver_config()
    grid = run.pde_grid()
    solution = solve_reduced_pde(cfg.u0, grid, cfg.t)
    passed, report = pde_fk_consistency(cfg, grid, solution=solution)
    for row in report['rows']:
        document.add_row(t=run.t, K=run.k, **row)
    document.diagnostics.update({
        'agreement': report['agreement'],
        'median_gap': report['median_gap'],
        'passed': passed,
        'heat_control': heat_control(cfg.u0, grid, cfg.t),
        'steps': solution.steps,
    })
    if run.out:
        solution.dump_to_file(str(Path(run.out).with_suffix('')) + '.field.csv')
    return 0


def handle_stransform(run: RunConfig, document: RunDocument) -> int:
    """Handle the stransform command"""
    report = s_transform_residual(run.xi, run.solver_config())
    for row in report.rows():
        document.add_row(**row)
    document.diagnostics.update(report.summary())
    return 0


def handle_localtime(run: RunConfig, document: RunDocument) -> int:
    """Handle the localtime command"""
    cfg = run.solver_config()
    K_list = sorted(run.k_list)
    gaps, alphas = parseval_study(cfg.x, cfg.grid, K_list, cfg.n_paths, cfg.seed, cfg.bins,
                                  threads=cfg.threads, batch_size=cfg.batch_size)
    for i, K in enumerate(K_list):
        document.add_row(t=run.t, x=run.x, K=K, median_gap=float(np.median(gaps[:, i])),
                         mean_gap=float(np.mean(gaps[:, i])), n=cfg.n_paths)
    document.diagnostics['alpha_hist'] = FieldEstimate.from_samples(alphas).to_dict()
    return 0


def handle_validate(run: RunConfig, document: RunDocument) -> int:
    """Handle the validate command"""
    reports = run_suite(quick=run.quick, seed=run.seed, threads=run.threads)
    for report in reports:
        document.add_row(check=report.name, passed=report.passed)
        document.diagnostics[report.name] = report.details
    return 0 if all(r.passed for r in reports) else 1


HANDLERS = {
    'solve': handle_solve,
    'solve-limit': handle_solve,
    'converge-k': handle_converge_k,
    'chaos': handle_chaos,
    'moments': handle_moments,
    'pde-check': handle_pde_check,
    'stransform': handle_stransform,
    'localtime': handle_localtime,
    'validate': handle_validate,
}


def execute(run: RunConfig) -> Tuple[int, RunDocument]:
    """Run one command and return its exit code and document"""
    document = RunDocument.create(run.to_dict(), __version__)
    logger.info(f"Running {run.command} (config {document.provenance['config_hash']})")
    code = HANDLERS[run.command](run, document)
    return code, document


def write_output(run: RunConfig, document: RunDocument) -> None:
    """Write the document to --out, or to stdout"""
    if run.out:
        document.dump_to_file(run.out, run.format)
    else:
        sys.stdout.write(document.render(run.format))


def replay(filename: str, overrides: Dict[str, Any]) -> int:
    """
    Rerun the config stored in a JSON result and compare the documents

    Only runtime keys (threads, out, format) may be overridden.
    """
    stored = RunDocument.load_from_file(filename)
    if stored is None:
        raise ConfigurationError(f"Cannot replay {filename}: not a JSON result document")
    runtime = {k: v for k, v in overrides.items() if k in RUNTIME_KEYS}
    run = RunConfig.from_layers(stored.config, runtime)
    code, document = execute(run)
    if run.out:
        write_output(run, document)
    if document.to_json() != stored.to_json():
        logger.error(f"Replay of {filename} differs from the stored result")
        return 1
    logger.info(f"Replay of {filename} reproduced the stored result")
    return code


def _flag_layer(parsed: argparse.Namespace) -> Dict[str, Any]:
    skip = {'config', 'replay', 'verbose'}
    return {k: v for k, v in vars(parsed).items() if k not in skip and v is not None}


def main(args: Optional[List[str]] = None) -> int:
    """
    Main entry point for the CLI

    Args:
        args: Command-line arguments (default: None, uses sys.argv)

    Returns:
        int: Exit code (0 success, 1 runtime failure or failed validation,
        2 configuration error)
    """
    parser = setup_parser()

    if args is None:
        args = sys.argv[1:]

    # If no arguments, show help
    if not args:
        parser.print_help()
        return 0

    try:
        parsed_args = parser.parse_args(args)
    except SystemExit as e:
        return int(e.code or 0)

    if parsed_args.command is None:
        parser.print_help()
        return 2

    # Configure logging
    if parsed_args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)

    try:
        if parsed_args.replay:
            return replay(parsed_args.replay, _flag_layer(parsed_args))
        file_layer = load_config_file(parsed_args.config) if parsed_args.config else {}
        run = RunConfig.from_layers(file_layer, _flag_layer(parsed_args))
        run.solver_config()
        if run.command == 'pde-check':
            run.pde_grid()
        code, document = execute(run)
        write_output(run, document)
        return code
    except ConfigurationError as e:
        print(f"Error: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        logger.error(f"{parsed_args.command} failed: {e}")
        if parsed_args.verbose:
            logger.exception(e)
        return 1


if __name__ == '__main__':
    sys.exit(main())

"""
Tests for solvers.fk - truncated and limit Feynman-Kac estimators and the
checks built on them
"""

import math
import unittest

import numpy as np
import pytest

from shefk.errors import ConfigurationError, DomainError
from shefk.numerics.kernels import heat_semigroup, projected_kernel_coefficient
from shefk.numerics.paths import frozen_path
from shefk.numerics.wick import MultiIndex
from shefk.solvers.fk import (
    ConvergenceStudy,
    SolverConfig,
    build_ensemble,
    chaos_fk_agreement,
    convergence_study,
    empirical_moment,
    exp_psi_moment,
    fk_over_noise,
    limit_gap_study,
    mean_field_check,
    moment_fk,
    noise_matrix,
    psi_cauchy_gap,
    psi_conditional_law_check,
    psi_samples,
    s_transform,
    s_transform_derivative,
    s_transform_residual,
    solve_fk_limit,
    solve_fk_truncated,
    weak_pairing,
)


class TestSolverConfig(unittest.TestCase):
    """Validation and serialization of SolverConfig"""

    def test_defaults(self):
        cfg = SolverConfig()
        self.assertEqual(cfg.u0.name, 'one')
        self.assertEqual(cfg.grid.steps, round(cfg.t / cfg.dt))

    def test_problems_are_collected(self):
        with self.assertRaises(ConfigurationError) as ctx:
            SolverConfig(t=-1.0, K=0, dt=0.0)
        message = str(ctx.exception)
        for fragment in ('t must be', 'K must be', 'dt must be'):
            self.assertIn(fragment, message)

    def test_unknown_initial_condition(self):
        with self.assertRaises(DomainError):
            SolverConfig(u0='triangle')

    def test_to_dict_skips_threads(self):
        data = SolverConfig(u0='gauss-bump', threads=3, batch_size=17).to_dict()
        self.assertNotIn('threads', data)
        self.assertEqual(data['batch_size'], 17)
        self.assertEqual(data['u0'], {'name': 'gauss-bump', 'width': 1.0})


class TestTimeZero(unittest.TestCase):
    """t = 0 returns u0(x) exactly and never samples"""

    def setUp(self):
        self.cfg = SolverConfig(t=0.0, x=0.5, K=3, u0='gauss-bump')

    def test_solvers(self):
        expected = math.exp(-0.125)
        for solver in (solve_fk_truncated, solve_fk_limit):
            estimate = solver(self.cfg, [0.3, -1.0, 2.0])
            self.assertAlmostEqual(estimate.value, expected, places=15)
            self.assertEqual(estimate.std_error, 0.0)

    def test_moments_and_transform(self):
        self.assertAlmostEqual(moment_fk(3, self.cfg).value, math.exp(-0.375))
        self.assertAlmostEqual(empirical_moment(2, self.cfg).value, math.exp(-0.25))
        self.assertAlmostEqual(s_transform([1.0], self.cfg).value, math.exp(-0.125), places=15)

    def test_no_ensemble(self):
        with self.assertRaises(DomainError):
            build_ensemble(self.cfg)


def test_noise_length_must_match(small_cfg):
    with pytest.raises(DomainError):
        solve_fk_truncated(small_cfg, np.zeros(small_cfg.K + 1))


def test_zero_noise_is_damped(small_cfg):
    ensemble = build_ensemble(small_cfg)
    estimate = solve_fk_truncated(small_cfg, np.zeros(small_cfg.K), ensemble)
    assert 0.0 < estimate.value < 1.0
    psi = psi_samples(ensemble, np.zeros(small_cfg.K))
    np.testing.assert_allclose(psi.psi_k, -0.5 * psi.sigma2)
    assert np.all(psi.linear == 0.0)


def test_limit_uses_histogram_drift(small_cfg):
    ensemble = build_ensemble(small_cfg)
    z = noise_matrix(small_cfg.K, small_cfg.seed, 1)[0]
    limit = solve_fk_limit(small_cfg, z, ensemble)
    expected = np.mean(ensemble.weights * np.exp(ensemble.coeffs @ z - 0.5 * ensemble.alpha_hist))
    assert limit.value == pytest.approx(expected, rel=1e-12)


def test_over_noise_matches_single_calls(small_cfg):
    ensemble = build_ensemble(small_cfg)
    noise = noise_matrix(small_cfg.K, small_cfg.seed, 5)
    means, se = fk_over_noise(ensemble, small_cfg.K, noise, threads=2)
    for i in range(5):
        single = solve_fk_truncated(small_cfg, noise[i], ensemble)
        assert means[i] == pytest.approx(single.value, rel=1e-12)
        assert se[i] == pytest.approx(single.std_error, rel=1e-9)


def test_ensemble_does_not_depend_on_threads(small_cfg):
    serial = build_ensemble(small_cfg.replace(threads=1))
    pooled = build_ensemble(small_cfg.replace(threads=4, batch_size=50))
    np.testing.assert_array_equal(serial.coeffs, pooled.coeffs)
    np.testing.assert_array_equal(serial.alpha_hist, pooled.alpha_hist)


def test_estimates_do_not_depend_on_batch_size(small_cfg):
    z = np.linspace(-1.0, 1.0, small_cfg.K)
    one = solve_fk_truncated(small_cfg.replace(batch_size=50), z)
    other = solve_fk_truncated(small_cfg.replace(batch_size=128), z)
    assert one.value == other.value
    assert one.std_error == other.std_error


def test_limit_needs_histogram(small_cfg):
    ensemble = build_ensemble(small_cfg, with_alpha=False)
    with pytest.raises(DomainError):
        solve_fk_limit(small_cfg, np.zeros(small_cfg.K), ensemble)


def test_conditional_law_on_frozen_path(small_cfg):
    passed, report = psi_conditional_law_check(small_cfg, frozen_path(0.0, small_cfg.grid), m=20000)
    assert passed, report
    assert report['drift_inequality']
    assert report['sigma2'] > 0
    with pytest.raises(DomainError):
        psi_conditional_law_check(small_cfg, frozen_path(0.0, small_cfg.grid), m=100)


def test_conditional_law_error_scales_with_draws(small_cfg):
    path = frozen_path(0.0, small_cfg.grid)
    _, small = psi_conditional_law_check(small_cfg, path, m=10_000)
    _, large = psi_conditional_law_check(small_cfg, path, m=40_000)
    assert large['mean_std_error'] / small['mean_std_error'] == pytest.approx(0.5, abs=0.1)


def test_conditional_law_zero_variance():
    cfg = SolverConfig(t=1.0, K=2, dt=1e-2)
    passed, report = psi_conditional_law_check(cfg, frozen_path(50.0, cfg.grid), m=10000)
    assert passed
    assert report['z_mean'] == 0.0


def test_mean_field(small_cfg, indicator):
    passed, report = mean_field_check(small_cfg)
    assert passed, report
    assert report['semigroup'] == 1.0
    passed, report = mean_field_check(small_cfg.replace(u0=indicator, x=0.5))
    assert passed, report
    assert report['semigroup'] == pytest.approx(math.erf(0.5 / math.sqrt(2)), abs=1e-9)


def test_chaos_matches_fk(small_cfg):
    passed, report = chaos_fk_agreement(small_cfg, n_draws=10)
    assert passed, report
    assert report['terms'] == math.comb(small_cfg.K + small_cfg.degree, small_cfg.degree)


def test_moment_formula_matches_sampling(small_cfg):
    formula = moment_fk(2, small_cfg)
    sampled = empirical_moment(2, small_cfg.replace(n_noise=200))
    se = math.hypot(formula.std_error, sampled.std_error)
    assert abs(formula.value - sampled.value) <= 3 * se + 1e-3
    with pytest.raises(DomainError):
        moment_fk(1, small_cfg)


def test_fourth_moment_dominates_squared_second(small_cfg):
    cfg = small_cfg.replace(n_noise=200)
    second = empirical_moment(2, cfg)
    fourth = empirical_moment(4, cfg)
    assert fourth.value >= second.value ** 2 - 3 * fourth.std_error


def test_s_transform_derivative_is_first_coefficient(small_cfg):
    derivative = s_transform_derivative(1, small_cfg)
    exact = projected_kernel_coefficient(MultiIndex.unit(1), 1.0, 0.0, small_cfg.u0)
    assert derivative.agrees_with(exact, budget=2e-3)
    assert s_transform([], small_cfg).value == pytest.approx(1.0)


def test_residual_without_potential(small_cfg):
    report = s_transform_residual([], small_cfg.replace(n_paths=50), time_nodes=3, space_nodes=5)
    assert report.max_abs < 1e-12
    assert report.passed
    assert len(report.rows()) == 15
    assert set(report.summary()) == {'max_abs', 'mean_abs', 'mean_budget', 'passed', 'n_paths'}


def test_residual_with_potential(small_cfg):
    cfg = small_cfg.replace(n_paths=2000)
    report = s_transform_residual([0.5], cfg, time_nodes=6, space_nodes=21)
    assert report.passed, report.summary()
    with pytest.raises(DomainError):
        s_transform_residual([0.5], cfg.replace(t=0.0))


def test_convergence_uses_prefix_noise(small_cfg):
    ensemble = build_ensemble(small_cfg, K=8, with_alpha=False)
    study = convergence_study(small_cfg, [2, 4, 8], n_draws=6, ensemble=ensemble)
    means, _ = fk_over_noise(ensemble, 4, noise_matrix(8, small_cfg.seed, 6))
    np.testing.assert_array_equal(study.estimates[:, 1], means)
    assert study.gaps.shape == (6, 2)
    rows = study.rows()
    assert rows[0]['median_gap'] is None
    assert rows[2]['median_gap'] == pytest.approx(study.median_gaps()[1])


def _study(estimates):
    estimates = np.atleast_2d(np.asarray(estimates, dtype=float))
    return ConvergenceStudy(K_list=[2, 4, 8, 16][:estimates.shape[1]], estimates=estimates,
                            std_errors=np.zeros_like(estimates), n_paths=1)


class TestGapsDecrease(unittest.TestCase):
    """Median-gap trend with bootstrap errors"""

    def test_identical_draws_have_no_error(self):
        study = _study(np.tile([1.0, 1.3, 1.5, 1.6], (10, 1)))
        np.testing.assert_allclose(study.median_gap_errors(seed=1), np.zeros(3), atol=1e-15)
        self.assertTrue(study.gaps_decrease(seed=1))

    def test_rise_beyond_error(self):
        study = _study(np.tile([1.0, 1.1, 1.4, 1.45], (10, 1)))
        self.assertFalse(study.gaps_decrease(seed=1))

    def test_last_gap_must_be_below_first(self):
        study = _study(np.tile([0.0, 0.25, 0.5, 0.75], (10, 1)))
        self.assertFalse(study.gaps_decrease(seed=1))

    def test_rise_within_noise(self):
        rng = np.random.default_rng(4)
        gaps = np.abs(np.column_stack([0.100 + 0.03 * rng.standard_normal(40),
                                       0.101 + 0.03 * rng.standard_normal(40),
                                       np.full(40, 0.05)]))
        study = _study(np.cumsum(np.column_stack([np.ones(40), gaps]), axis=1))
        self.assertTrue(study.gaps_decrease(seed=1))

    def test_errors_are_reproducible(self):
        rng = np.random.default_rng(5)
        study = _study(np.cumsum(rng.random((30, 4)), axis=1))
        np.testing.assert_array_equal(study.median_gap_errors(seed=3), study.median_gap_errors(seed=3))


def test_convergence_rejects_bad_lists(small_cfg):
    for K_list in ([], [4, 2], [0, 3]):
        with pytest.raises(DomainError):
            convergence_study(small_cfg, K_list)


def test_limit_gap_study(small_cfg):
    medians = limit_gap_study(small_cfg.replace(n_paths=200), [2, 8], n_draws=4)
    assert medians.shape == (2,)
    assert np.all(medians >= 0)
    assert medians[1] < medians[0]


def test_paired_identities(small_cfg):
    ensemble = build_ensemble(small_cfg, K=small_cfg.K, with_alpha=False)
    for passed, report in (psi_cauchy_gap(small_cfg, 2, 6, ensemble),
                           exp_psi_moment(2.0, small_cfg, ensemble),
                           weak_pairing([0.3, -0.2], small_cfg, ensemble)):
        assert passed, report
    with pytest.raises(DomainError):
        psi_cauchy_gap(small_cfg, 4, 4, ensemble)
    with pytest.raises(DomainError):
        weak_pairing(np.ones(small_cfg.K + 1), small_cfg, ensemble)


@pytest.mark.slow
def test_mean_field_acceptance():
    cfg = SolverConfig(t=1.0, x=0.0, K=20, n_paths=4000, n_noise=400, dt=1e-3, seed=1)
    passed, report = mean_field_check(cfg)
    assert passed, report
    assert report['semigroup'] == heat_semigroup(cfg.u0, 1.0, 0.0)


@pytest.mark.slow
def test_convergence_in_k_acceptance():
    cfg = SolverConfig(t=1.0, x=0.0, n_paths=4000, dt=1e-3, seed=2)
    study = convergence_study(cfg, [5, 10, 20, 40, 80], n_draws=50)
    medians = study.median_gaps()
    assert medians[-1] < medians[0]


@pytest.mark.slow
def test_limit_gap_decreases_in_k():
    cfg = SolverConfig(t=1.0, x=0.0, n_paths=2000, dt=1e-3, seed=4)
    medians = limit_gap_study(cfg, [25, 50, 100, 200], n_draws=20)
    assert np.all(np.diff(medians) < 0)

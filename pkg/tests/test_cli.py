"""
Tests for the shefk command-line interface
"""

import json
import unittest

import pytest

from shefk.cli import RunConfig, execute, main, setup_parser
from shefk.errors import ConfigurationError
from shefk.results import RunDocument, config_hash

FAST = ['--paths', '200', '--samples', '3', '--dt', '0.05', '--k', '4', '--seed', '3']


def _run(capsys, *args):
    code = main(list(args))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestRunConfig(unittest.TestCase):
    """Layered configuration"""

    def test_later_layers_win(self):
        run = RunConfig.from_layers({'k': 3, 'seed': 7}, {'k': 5})
        self.assertEqual(run.k, 5)
        self.assertEqual(run.seed, 7)

    def test_none_does_not_override(self):
        run = RunConfig.from_layers({'t': 2.0}, {'t': None})
        self.assertEqual(run.t, 2.0)

    def test_unknown_key(self):
        with self.assertRaises(ConfigurationError) as ctx:
            RunConfig.from_layers({'foo': 1})
        self.assertIn("'foo'", str(ctx.exception))

    def test_bad_values(self):
        for layer, key in (({'k': 2.5}, 'k'), ({'t': 'soon'}, 't'), ({'seed': -1}, 'seed'),
                           ({'seed': 1 << 64}, 'seed'), ({'format': 'xml'}, 'format'),
                           ({'command': 'fly'}, 'command'), ({'threads': 0}, 'threads')):
            with self.assertRaises(ConfigurationError) as ctx:
                RunConfig.from_layers(layer)
            self.assertIn(f"'{key}'", str(ctx.exception))

    def test_missing_required_keys(self):
        with self.assertRaises(ConfigurationError) as ctx:
            RunConfig.from_layers({'command': 'stransform'})
        self.assertIn('xi', str(ctx.exception))

    def test_lists(self):
        run = RunConfig.from_layers({'command': 'converge-k', 'k_list': '5, 10,20', 'xi': [0.5]})
        self.assertEqual(run.k_list, [5, 10, 20])
        self.assertEqual(run.xi, [0.5])

    def test_initial_condition_syntax(self):
        u0 = RunConfig(u0='indicator:a=-1,b=2').initial_condition()
        self.assertEqual(u0.params, {'a': -1.0, 'b': 2.0})
        for bad in ('triangle', 'indicator:a=x', 'gauss-bump:height=2'):
            with self.assertRaises(ConfigurationError) as ctx:
                RunConfig(u0=bad).initial_condition()
            self.assertIn("'u0'", str(ctx.exception))

    def test_chaos_defaults(self):
        run = RunConfig.from_layers({'command': 'chaos'})
        self.assertEqual((run.k, run.degree), (10, 4))
        run = RunConfig.from_layers({'command': 'chaos'}, {'k': 3})
        self.assertEqual((run.k, run.degree), (3, 4))
        self.assertEqual(RunConfig.from_layers({'command': 'solve'}).k, RunConfig().k)

    def test_command_values(self):
        for layer, key in (({'command': 'converge-k', 'k_list': '0,5'}, 'k_list'),
                           ({'command': 'converge-k', 'k_list': '10,5'}, 'k_list'),
                           ({'command': 'localtime', 'k_list': '5,0'}, 'k_list'),
                           ({'command': 'moments', 'q': 0}, 'q'),
                           ({'command': 'chaos', 'k': 50, 'degree': 12}, 'degree'),
                           ({'batch_size': 0}, 'batch_size')):
            with self.assertRaises(ConfigurationError) as ctx:
                RunConfig.from_layers(layer)
            self.assertIn(f"'{key}'", str(ctx.exception))

    def test_batch_size_is_stored(self):
        self.assertEqual(RunConfig(batch_size=64).to_dict()['batch_size'], 64)
        self.assertNotEqual(config_hash(RunConfig(batch_size=64).to_dict()),
                            config_hash(RunConfig(batch_size=128).to_dict()))

    def test_runtime_keys_not_stored(self):
        data = RunConfig(threads=4, out='x.json', format='json').to_dict()
        for key in ('threads', 'out', 'format'):
            self.assertNotIn(key, data)


class TestParser(unittest.TestCase):
    """Argument parsing"""

    def setUp(self):
        self.parser = setup_parser()

    def test_unset_flags_are_none(self):
        args = self.parser.parse_args(['solve'])
        self.assertIsNone(args.k)
        self.assertIsNone(args.quick)
        self.assertEqual(args.command, 'solve')

    def test_flags(self):
        args = self.parser.parse_args(['converge-k', '--k-list', '5,10', '-f', 'json', '--x-max', '3'])
        self.assertEqual(args.k_list, '5,10')
        self.assertEqual(args.format, 'json')
        self.assertEqual(args.x_max, 3.0)


def test_no_arguments_prints_help(capsys):
    code, out, _ = _run(capsys)
    assert code == 0
    assert 'usage' in out


def test_bad_flags_exit_2(capsys):
    assert _run(capsys, 'solve', '--bogus')[0] == 2
    assert _run(capsys, 'solve', '--k', 'many')[0] == 2
    assert _run(capsys, 'teleport')[0] == 2


def test_unknown_config_key(capsys, tmp_path):
    config = tmp_path / 'run.json'
    config.write_text(json.dumps({'k': 3, 'foo': 1}))
    code, _, err = _run(capsys, 'solve', '--config', str(config))
    assert code == 2
    assert "'foo'" in err


def test_nested_config_rejected(capsys, tmp_path):
    config = tmp_path / 'run.json'
    config.write_text(json.dumps({'solver': {'k': 3}}))
    assert _run(capsys, 'solve', '-c', str(config))[0] == 2


def test_missing_keys_are_listed(capsys):
    code, _, err = _run(capsys, 'converge-k')
    assert code == 2
    assert 'Missing required keys for converge-k: k_list' in err


def test_pde_dimension_is_a_config_error(capsys):
    code, _, err = _run(capsys, 'pde-check', '--k', '3')
    assert code == 2
    assert 'K in 1..2' in err


def test_bad_command_values_exit_2(capsys):
    for args, key in ((('converge-k', '--k-list', '0,5'), 'k_list'),
                      (('moments', '--q', '0'), 'q'),
                      (('localtime', '--k-list', '5,0'), 'k_list'),
                      (('chaos', '--k', '50', '--degree', '12'), 'degree')):
        code, _, err = _run(capsys, *args)
        assert code == 2
        assert f"'{key}'" in err


def test_chaos_runs_with_defaults(capsys):
    code, out, _ = _run(capsys, 'chaos', '--paths', '50', '--dt', '0.05', '-f', 'json')
    assert code == 0
    document = json.loads(out)
    assert document['config']['k'] == 10
    assert document['config']['degree'] == 4


def test_flags_override_config_file(capsys, tmp_path):
    config = tmp_path / 'run.json'
    config.write_text(json.dumps({'k': 3, 'paths': 100, 'samples': 2, 'dt': 0.05, 'seed': 5}))
    code, out, _ = _run(capsys, 'solve', '-c', str(config), '--k', '2', '-f', 'json')
    assert code == 0
    document = json.loads(out)
    assert document['config']['k'] == 2
    assert document['config']['seed'] == 5
    assert document['provenance']['seed'] == 5
    assert len(document['results']) == 2


def test_output_is_independent_of_threads(capsys):
    _, serial, _ = _run(capsys, 'solve', *FAST, '--threads', '1', '-f', 'json')
    _, pooled, _ = _run(capsys, 'solve', *FAST, '--threads', '4', '-f', 'json')
    assert serial == pooled
    rows = json.loads(serial)['results']
    assert [r['draw'] for r in rows] == [0, 1, 2]


def test_time_zero_is_exact(capsys):
    code, out, _ = _run(capsys, 'solve', '--t', '0', '--x', '0.5', '--u0', 'indicator', '-f', 'json')
    assert code == 0
    rows = json.loads(out)['results']
    assert all(r['estimate'] == 1.0 and r['std_error'] == 0.0 for r in rows)


def test_solve_limit_reports_histogram(capsys):
    code, out, _ = _run(capsys, 'solve-limit', *FAST, '-f', 'json')
    assert code == 0
    assert 'alpha_hist_mean' in json.loads(out)['diagnostics']


def test_converge_k_csv(capsys):
    code, out, _ = _run(capsys, 'converge-k', *FAST, '--k-list', '2,4')
    assert code == 0
    header = out.splitlines()[0].split(',')
    assert 'median_gap' in header
    assert len(out.splitlines()) == 3


def test_chaos_writes_coefficients(capsys, tmp_path):
    out = tmp_path / 'chaos.json'
    code, _, _ = _run(capsys, 'chaos', '--k', '2', '--degree', '2', '--paths', '100', '--dt', '0.05',
                      '-o', str(out), '-f', 'json')
    assert code == 0
    document = RunDocument.load_from_file(str(out))
    assert len(document.results) == 6
    assert (tmp_path / 'chaos.coefficients.chaos').exists()
    assert (tmp_path / 'chaos.coefficients.json').exists()


def test_moments(capsys):
    _, out, _ = _run(capsys, 'moments', *FAST, '--q', '2', '-f', 'json')
    assert [r['method'] for r in json.loads(out)['results']] == ['moment-formula', 'empirical']
    _, out, _ = _run(capsys, 'moments', *FAST, '--q', '1', '-f', 'json')
    document = json.loads(out)
    assert len(document['results']) == 1
    assert document['diagnostics']['semigroup'] == 1.0


def test_pde_check_writes_field(capsys, tmp_path):
    out = tmp_path / 'pde.csv'
    code, _, _ = _run(capsys, 'pde-check', '--k', '1', '--t', '0.2', '--paths', '100', '--dt', '0.05',
                      '--hx', '0.25', '--hz', '0.25', '--x-max', '2', '--z-max', '2', '-o', str(out))
    assert code == 0
    assert out.read_text().startswith('t,K,x,z')
    assert (tmp_path / 'pde.field.csv').read_text().startswith('x,z_1,v,u')


def test_localtime(capsys):
    code, out, _ = _run(capsys, 'localtime', '--k-list', '10,5', '--paths', '20', '--dt', '0.01')
    assert code == 0
    lines = out.splitlines()
    assert lines[0].startswith('t,x,K,median_gap')
    assert [line.split(',')[2] for line in lines[1:]] == ['5', '10']


def test_replay(capsys, tmp_path):
    out = tmp_path / 'solve.json'
    assert _run(capsys, 'solve', *FAST, '-o', str(out), '-f', 'json')[0] == 0
    assert _run(capsys, 'solve', '--replay', str(out), '--threads', '2')[0] == 0

    data = json.loads(out.read_text())
    data['results'][0]['estimate'] += 1e-9
    out.write_text(json.dumps(data))
    assert _run(capsys, 'solve', '--replay', str(out))[0] == 1


def test_replay_needs_json_document(capsys, tmp_path):
    out = tmp_path / 'solve.csv'
    out.write_text('t,x\n1,0\n')
    assert _run(capsys, 'solve', '--replay', str(out))[0] == 2


def test_runtime_failure_exits_1(capsys, mocker):
    def broken(run, document):
        raise RuntimeError('worker crashed')

    mocker.patch.dict('shefk.cli.HANDLERS', {'solve': broken})
    assert _run(capsys, 'solve')[0] == 1


def test_validate_exit_codes(capsys, mocker):
    passing = {'always': lambda quick, seed, threads: (True, {'quick': quick})}
    mocker.patch.dict('shefk.validate.CHECKS', passing, clear=True)
    code, out, _ = _run(capsys, 'validate', '--quick', '-f', 'json')
    assert code == 0
    assert json.loads(out)['diagnostics']['always'] == {'quick': True}

    mocker.patch.dict('shefk.validate.CHECKS', {'never': lambda quick, seed, threads: (False, {})})
    code, out, _ = _run(capsys, 'validate')
    assert code == 1
    assert 'never,False' in out


@pytest.mark.slow
def test_quick_validation_passes(capsys):
    code, out, _ = _run(capsys, 'validate', '--quick')
    assert code == 0, out


def test_execute_is_pure():
    run = RunConfig.from_layers({'command': 'solve', 'paths': 50, 'samples': 2, 'dt': 0.1, 'k': 2})
    assert execute(run)[1].to_json() == execute(run)[1].to_json()


@pytest.mark.slow
def test_stransform_command(capsys):
    code, out, _ = _run(capsys, 'stransform', '--xi', '0.5', '--k', '1', '--paths', '2000', '-f', 'json')
    assert code == 0
    assert json.loads(out)['diagnostics']['passed']

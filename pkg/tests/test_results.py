"""
Tests for result containers and the run document
"""

import json
import math
import unittest

import numpy as np
import pytest

from shefk.results import FieldEstimate, RunDocument, combined_se, config_hash


class TestFieldEstimate(unittest.TestCase):
    """FieldEstimate behavior"""

    def test_from_samples(self):
        estimate = FieldEstimate.from_samples([1.0, 2.0, 3.0, 4.0])
        self.assertEqual(estimate.value, 2.5)
        self.assertAlmostEqual(estimate.std_error, np.std([1, 2, 3, 4], ddof=1) / 2)
        self.assertEqual(estimate.n, 4)

    def test_single_sample(self):
        estimate = FieldEstimate.from_samples([5.0])
        self.assertEqual(estimate.std_error, 0.0)

    def test_validation(self):
        with self.assertRaises(ValueError):
            FieldEstimate(value=1.0, std_error=-0.1, n=3)
        with self.assertRaises(ValueError):
            FieldEstimate(value=1.0, std_error=0.1, n=0)
        with self.assertRaises(ValueError):
            FieldEstimate.from_samples([])

    def test_agreement(self):
        estimate = FieldEstimate(value=1.0, std_error=0.1, n=100)
        self.assertTrue(estimate.agrees_with(1.29))
        self.assertFalse(estimate.agrees_with(1.31))
        self.assertTrue(estimate.agrees_with(1.31, budget=0.02))

    def test_dict(self):
        estimate = FieldEstimate.exact(0.5)
        self.assertEqual(FieldEstimate.from_dict(estimate.to_dict()), estimate)


def test_combined_se():
    a = FieldEstimate(value=0.0, std_error=0.3, n=10)
    b = FieldEstimate(value=0.0, std_error=0.4, n=10)
    assert combined_se(a, b) == pytest.approx(0.5)


def test_config_hash_ignores_key_order():
    assert config_hash({'a': 1, 'b': 2}) == config_hash({'b': 2, 'a': 1})
    assert config_hash({'a': 1}) != config_hash({'a': 2})
    assert len(config_hash({})) == 16


class TestRunDocument(unittest.TestCase):
    """Run document rendering"""

    def setUp(self):
        self.document = RunDocument.create({'command': 'solve', 'seed': 3}, '0.1.0')
        self.document.add_row(K=np.int64(4), estimate=np.float64(0.25), z=[1.0, 2.0])
        self.document.diagnostics['samples'] = np.arange(3)

    def test_provenance(self):
        provenance = self.document.provenance
        self.assertEqual(provenance['seed'], 3)
        self.assertEqual(provenance['version'], '0.1.0')
        self.assertEqual(self.document.results[0]['config_hash'], provenance['config_hash'])

    def test_json(self):
        data = json.loads(self.document.to_json())
        self.assertEqual(set(data), {'config', 'results', 'diagnostics', 'provenance'})
        self.assertEqual(data['results'][0]['K'], 4)
        self.assertEqual(data['diagnostics']['samples'], [0, 1, 2])
        self.assertEqual(RunDocument.from_json(self.document.to_json()).to_json(), self.document.to_json())

    def test_csv(self):
        lines = self.document.to_csv().splitlines()
        self.assertEqual(lines[0], 'K,estimate,z,config_hash')
        self.assertTrue(lines[1].startswith('4,0.25,1.0;2.0,'))

    def test_render(self):
        with self.assertRaises(ValueError):
            self.document.render('xml')

    def test_float_precision(self):
        document = RunDocument.create({}, '0.1.0')
        document.add_row(value=1 / 3)
        self.assertEqual(float(document.to_csv().splitlines()[1].split(',')[0]), 1 / 3)
        self.assertTrue(math.isclose(json.loads(document.to_json())['results'][0]['value'], 1 / 3))


def test_file_round_trip(tmp_path):
    document = RunDocument.create({'seed': 1}, '0.1.0')
    document.add_row(estimate=0.5)
    path = tmp_path / 'run.json'
    document.dump_to_file(str(path))
    assert RunDocument.load_from_file(str(path)).to_json() == document.to_json()
    assert RunDocument.load_from_file(str(tmp_path / 'missing.json')) is None

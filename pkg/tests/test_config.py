"""
Tests for the configuration layer (constants.json + SHEFK_ environment)
"""

import unittest

import pytest

from shefk import config


class TestConstants(unittest.TestCase):
    """Values shipped in constants.json"""

    def test_sections(self):
        self.assertEqual(config.get_section('pde')['safety'], 0.9)
        self.assertEqual(config.get_section('nonexistent'), {})

    def test_section_copy(self):
        section = config.get_section('solver')
        section['k'] = -1
        self.assertEqual(config.get_section('solver')['k'], 50)

    def test_module_constants(self):
        self.assertEqual(config.STANDARD_ERRORS, 3.0)
        self.assertEqual(config.GAUSS_NODES, 200)
        self.assertGreater(config.QUADRATURE_UPPER, config.QUADRATURE_LOWER)


def test_environment_wins(monkeypatch):
    monkeypatch.setenv('SHEFK_K', '12')
    assert config.get_config_value('k', 50) == 12


def test_constants_before_default(monkeypatch):
    monkeypatch.delenv('SHEFK_SEED', raising=False)
    assert config.get_config_value('seed', 99) == 7
    assert config.get_config_value('missing', 3.5) == 3.5


@pytest.mark.parametrize('raw, default, expected', [
    ('0.25', 1.0, 0.25),
    ('abc', 1.0, 1.0),
    ('7', 3, 7),
    ('7.5', 3, 3),
    ('yes', False, True),
    ('plain', 'text', 'plain'),
])
def test_convert(raw, default, expected):
    assert config._convert(raw, default) == expected


def test_default_threads(monkeypatch):
    monkeypatch.setenv('SHEFK_THREADS', '3')
    assert config.default_threads() == 3

"""
Tests for shefk package
"""

"""Tests for voxmvs."""

"""Test package for statenet."""

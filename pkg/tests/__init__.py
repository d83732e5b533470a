"""Test package for nifkit."""

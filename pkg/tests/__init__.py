"""Test package for the palm haptics engine."""

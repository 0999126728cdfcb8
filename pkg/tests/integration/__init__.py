"""Integration tests for the palm haptics engine."""

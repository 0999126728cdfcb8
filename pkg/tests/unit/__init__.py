"""Unit tests for the palm haptics engine."""

"""Presets and CSV schemas."""

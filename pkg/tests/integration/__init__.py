"""Integration tests - the preprocessing and evaluation chain on generated data."""

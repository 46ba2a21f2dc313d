"""Unit tests - fast, single modules."""

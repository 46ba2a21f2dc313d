"""paeekit test suite."""

"""End-to-end tests - command-line runs over generated datasets."""

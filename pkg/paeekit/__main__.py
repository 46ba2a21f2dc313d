#!/usr/bin/env python3

"""Main entry point for the paeekit package."""

from .cli import app

if __name__ == "__main__":
    app()

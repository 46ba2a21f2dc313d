"""Estimate physical activity energy expenditure from wearable accelerometers."""
__version__ = "0.1.0"

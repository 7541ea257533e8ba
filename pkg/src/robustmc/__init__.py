"""Robust matrix completion: low-rank plus sparse recovery from few noisy entries."""
__version__ = "0.1.0"

"""Self-contained laboratory for training and evaluating stability-aware
maximum-entropy actor-critic controllers on nonlinear benchmark systems."""

__version__ = "0.1.0"

"""Grand Lebesgue / exponential-class norms on step functions."""
__version__ = "0.1.0"

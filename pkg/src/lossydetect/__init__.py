"""Rate, error-exponent and distortion trade-offs for distributed hypothesis testing."""

__version__ = "0.1.0"

"""Gaussian order statistics: anticoncentration checks and k-FWER step-down testing."""
__version__ = "0.1.0"

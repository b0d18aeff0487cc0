"""Ground-state-depletion imaging simulator for a single trapped ion."""

__version__ = "0.1.0"

"""Frequency dynamics of low-inertia power grids under inverter control laws."""
__version__ = "0.1.0"
